// Copyright 2026 The vvit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "vvit/optim.hpp"

#include <cmath>

#include "vvit/error.hpp"

namespace vvit {

void zero_grad(const NamedParameters& params) {
  for (const auto& [name, p] : params) {
    Tensor handle = p;
    handle.zero_grad();
  }
}

void Sgd::step(NamedParameters& params) {
  if (lr_ == 0.0) return;
  for (auto& [name, p] : params) {
    if (!p.has_grad()) continue;
    auto values = p.mutable_values();
    auto grad = p.grad();
    for (std::size_t i = 0; i < values.size(); ++i) values[i] -= lr_ * grad[i];
  }
}

void Adam::step(NamedParameters& params) {
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(params[i].second.numel(), 0.0);
      v_[i].assign(params[i].second.numel(), 0.0);
    }
  }
  if (m_.size() != params.size()) throw InputError("Adam: parameter list changed between steps");
  ++step_count_;
  // lr == 0 must leave parameters bit-identical, so skip the update entirely.
  if (lr_ == 0.0) return;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = params[k].second;
    if (!p.has_grad()) continue;
    auto values = p.mutable_values();
    auto grad = p.grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * grad[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * grad[i] * grad[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      values[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

}  // namespace vvit
