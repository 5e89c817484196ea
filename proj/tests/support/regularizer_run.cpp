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

#include <algorithm>
#include <cmath>

#include "test_support.hpp"
#include "vvit/losses.hpp"
#include "vvit/optim.hpp"

namespace vvit::testing {

namespace {

// Expected vote variance, estimated from 64 bundles under a fixed stream.
double mean_vote_variance(const Tensor& z, const MlpHead& head, std::size_t votes, std::uint64_t seed) {
  NoGradGuard guard;
  Rng rng = Rng(seed).derive("measure");
  double total = 0.0;
  for (int k = 0; k < 64; ++k) total += vote(z, head, votes, rng).bundles[0].variance;
  return total / 64.0;
}

}  // namespace

RegularizerRun variance_regularizer_run(std::uint64_t seed, std::size_t steps) {
  const VVitConfig defaults;
  Rng rng = Rng(seed).derive("regularizer");
  MlpHead head = MlpHead::create({16, defaults.head_hidden, 1}, defaults.head_dropout, rng);
  NamedParameters params;
  head.collect("head", params);
  const Tensor z = Tensor::normal({1, 16}, 1.0, rng);

  BinocularSample panel;
  panel.rater_votes = {1, 0, 0, 0, 0};
  set_vote_statistics(panel);

  RegularizerRun run;
  run.target_variance = panel.sigma2_vote;
  run.initial_gap = std::abs(mean_vote_variance(z, head, defaults.votes, seed) - panel.sigma2_vote);

  Adam adam(1e-2);
  const Rng step_root = Rng(seed).derive("steps");
  for (std::size_t t = 1; t <= steps; ++t) {
    zero_grad(params);
    Rng step_rng = step_root.derive(t);
    const Tensor votes = vote(z, head, defaults.votes, step_rng).votes;
    backward(sum(loss_reg(votes, Tensor({1}, {panel.sigma2_vote}), {panel.rater_count()})));
    adam.step(params);
    run.final_gap = std::abs(mean_vote_variance(z, head, defaults.votes, seed) - panel.sigma2_vote);
    if (run.first_step_below == 0 && run.final_gap < 0.1 * run.initial_gap) run.first_step_below = t;
  }

  // A 2-rater panel with maximal disagreement must contribute nothing.
  zero_grad(params);
  Rng gate_rng = Rng(seed).derive("gate");
  const Tensor votes = vote(z, head, defaults.votes, gate_rng).votes;
  backward(sum(loss_reg(votes, Tensor({1}, {0.25}), {2})));
  for (const auto& [name, p] : params) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) run.two_rater_max_grad = std::max(run.two_rater_max_grad, std::abs(g));
  }
  return run;
}

}  // namespace vvit::testing
