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

#include "vvit/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "vvit/error.hpp"

namespace vvit {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

thread_local bool g_grad_enabled = true;

using NodePtr = std::shared_ptr<detail::Node>;

std::size_t normalize_axis(std::ptrdiff_t axis, std::size_t rank) {
  const auto r = static_cast<std::ptrdiff_t>(rank);
  if (axis < -r || axis >= r) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(rank));
  }
  return static_cast<std::size_t>(axis < 0 ? axis + r : axis);
}

void check_finite(const std::vector<double>& v, const char* op) {
  double acc = 0.0;
  for (double x : v) acc += x * 0.0;
  if (acc != acc) {
    throw NumericError(std::string("non-finite value produced by ") + op);
  }
}

bool any_requires_grad(std::initializer_list<const Tensor*> inputs) {
  if (!g_grad_enabled) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

/// Wraps an op result. Graph links are recorded only when some input needs a
/// gradient and grad mode is on.
Tensor make_result(Shape shape, std::vector<double> values, const char* op,
                   std::vector<NodePtr> parents, bool needs_grad,
                   std::function<void(detail::Node&)> backward_fn) {
  check_finite(values, op);
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  if (needs_grad) {
    node->requires_grad = true;
    node->leaf = false;
    node->parents = std::move(parents);
    node->backward = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

const NodePtr& require(const Tensor& t, const char* op) {
  if (!t.defined()) throw InputError(std::string(op) + ": undefined tensor");
  return t.node();
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.begin(), small.end(), big.end() - static_cast<std::ptrdiff_t>(small.size()));
}

// Broadcast layout for a binary elementwise op.
struct Broadcast {
  Shape out_shape;
  std::size_t n = 0;       // output size
  std::size_t a_size = 0;  // a is indexed i % a_size
  std::size_t b_size = 0;
};

Broadcast broadcast_layout(const Tensor& a, const Tensor& b, const char* op) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  Broadcast l;
  if (is_suffix(sb, sa)) {
    l.out_shape = sa;
  } else if (is_suffix(sa, sb)) {
    l.out_shape = sb;
  } else {
    throw ShapeError(std::string(op) + ": cannot broadcast " + to_string(sa) + " with " +
                     to_string(sb));
  }
  l.n = numel(l.out_shape);
  l.a_size = a.numel();
  l.b_size = b.numel();
  return l;
}

// Adds a full-size gradient into a possibly smaller (broadcast) buffer.
void accumulate_broadcast(std::vector<double>& dst, const double* src, std::size_t n) {
  const std::size_t m = dst.size();
  if (m == n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
    return;
  }
  for (std::size_t base = 0; base < n; base += m) {
    for (std::size_t j = 0; j < m; ++j) dst[j] += src[base + j];
  }
}

// outer x axis x inner decomposition for reductions along one axis.
struct AxisLayout {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisLayout axis_layout(const Shape& shape, std::size_t axis) {
  AxisLayout l;
  for (std::size_t i = 0; i < axis; ++i) l.outer *= shape[i];
  l.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) l.inner *= shape[i];
  return l;
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& x, const char* op, Fwd fwd, Deriv deriv) {
  const auto& xn = require(x, op);
  std::vector<double> out(xn->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xn->value[i]);
  const bool needs = any_requires_grad({&x});
  return make_result(xn->shape, std::move(out), op, {xn}, needs, [deriv](detail::Node& self) {
    auto& p = *self.parents[0];
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * deriv(p.value[i], self.value[i]);
  });
}

}  // namespace

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape));
  }
  if (vvit::numel(shape) != values.size()) {
    throw ShapeError("shape " + to_string(shape) + " needs " + std::to_string(vvit::numel(shape)) +
                     " values, got " + std::to_string(values.size()));
  }
  node_ = std::make_shared<detail::Node>();
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = vvit::numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({}, {value}, requires_grad); }

Tensor Tensor::normal(Shape shape, double stddev, Rng& rng, bool requires_grad) {
  std::vector<double> v(vvit::numel(shape));
  for (double& x : v) x = rng.normal(0.0, stddev);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

const Shape& Tensor::shape() const { return require(*this, "shape")->shape; }

std::size_t Tensor::dim(std::ptrdiff_t axis) const { return shape()[normalize_axis(axis, rank())]; }

std::span<const double> Tensor::values() const { return require(*this, "values")->value; }

std::span<double> Tensor::mutable_values() {
  auto& node = require(*this, "mutable_values");
  if (!node->leaf) throw InputError("only leaf tensors may be mutated in place");
  return node->value;
}

std::span<const double> Tensor::grad() const { return require(*this, "grad")->grad; }

double Tensor::item() const {
  const auto& node = require(*this, "item");
  if (node->value.size() != 1) {
    throw ShapeError("item() needs a single-element tensor, got " + to_string(node->shape));
  }
  return node->value[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  const Shape& s = shape();
  if (index.size() != s.size()) throw IndexError("index rank does not match tensor rank");
  std::size_t flat = 0, i = 0;
  for (std::size_t idx : index) {
    if (idx >= s[i]) throw IndexError("index out of range for shape " + to_string(s));
    flat = flat * s[i] + idx;
    ++i;
  }
  return node_->value[flat];
}

void Tensor::zero_grad() {
  if (defined()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  const auto& node = require(*this, "detach");
  return Tensor(node->shape, node->value, false);
}

Tensor Tensor::clone(bool requires_grad) const {
  const auto& node = require(*this, "clone");
  return Tensor(node->shape, node->value, requires_grad);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  const auto& an = require(a, "add");
  const auto& bn = require(b, "add");
  const Broadcast l = broadcast_layout(a, b, "add");
  std::vector<double> out(l.n);
  const double* av = an->value.data();
  const double* bv = bn->value.data();
  for (std::size_t base = 0; base < l.n; base += std::min(l.a_size, l.b_size)) {
    const std::size_t m = std::min(l.a_size, l.b_size);
    const double* ap = av + (l.a_size == l.n ? base : 0);
    const double* bp = bv + (l.b_size == l.n ? base : 0);
    for (std::size_t j = 0; j < m; ++j) out[base + j] = ap[j] + bp[j];
  }
  const bool needs = any_requires_grad({&a, &b});
  return make_result(l.out_shape, std::move(out), "add", {an, bn}, needs, [](detail::Node& self) {
    for (auto& p : self.parents) {
      if (p->requires_grad) accumulate_broadcast(p->grad_buffer(), self.grad.data(), self.grad.size());
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, neg(b)); }

Tensor mul(const Tensor& a, const Tensor& b) {
  const auto& an = require(a, "mul");
  const auto& bn = require(b, "mul");
  const Broadcast l = broadcast_layout(a, b, "mul");
  std::vector<double> out(l.n);
  const std::size_t as = l.a_size, bs = l.b_size;
  for (std::size_t i = 0; i < l.n; ++i) out[i] = an->value[i % as] * bn->value[i % bs];
  const bool needs = any_requires_grad({&a, &b});
  return make_result(l.out_shape, std::move(out), "mul", {an, bn}, needs, [as, bs](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const std::size_t n = self.grad.size();
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i % as] += self.grad[i] * pb.value[i % bs];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i % bs] += self.grad[i] * pa.value[i % as];
    }
  });
}

Tensor add_scalar(const Tensor& x, double s) {
  return unary(x, "add_scalar", [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& x, double s) {
  return unary(x, "mul_scalar", [s](double v) { return v * s; }, [s](double, double) { return s; });
}

Tensor neg(const Tensor& x) { return mul_scalar(x, -1.0); }

Tensor square(const Tensor& x) {
  return unary(x, "square", [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, "sigmoid",
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor gelu(const Tensor& x) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  return unary(
      x, "gelu", [](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
      [inv_sqrt_2pi](double v, double) {
        const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
        return cdf + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
      });
}

// ---------------------------------------------------------------------------
// Matmul

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto& an = require(a, "matmul");
  const auto& bn = require(b, "matmul");
  const Shape& sa = an->shape;
  const Shape& sb = bn->shape;
  auto mismatch = [&] {
    return ShapeError("matmul: incompatible shapes " + to_string(sa) + " and " + to_string(sb));
  };
  if (sa.size() < 2 || sb.size() < 2) throw mismatch();
  const std::size_t m = sa[sa.size() - 2], k = sa.back();
  const std::size_t k2 = sb[sb.size() - 2], n = sb.back();
  if (k != k2) throw mismatch();
  const Shape batch_a(sa.begin(), sa.end() - 2);
  const Shape batch_b(sb.begin(), sb.end() - 2);
  if (!batch_a.empty() && !batch_b.empty() && batch_a != batch_b) throw mismatch();

  Shape out_shape = batch_a.empty() ? batch_b : batch_a;
  out_shape.push_back(m);
  out_shape.push_back(n);
  const std::size_t batches = numel(batch_a.empty() ? batch_b : batch_a);
  std::vector<double> out(numel(out_shape));

  // mode 0: b shared -> one tall GEMM; 1: a shared; 2: paired batches.
  const int mode = batch_b.empty() ? 0 : (batch_a.empty() ? 1 : 2);
  if (mode == 0) {
    MutMap(out.data(), batches * m, n).noalias() =
        ConstMap(an->value.data(), batches * m, k) * ConstMap(bn->value.data(), k, n);
  } else {
    for (std::size_t i = 0; i < batches; ++i) {
      const double* ap = an->value.data() + (mode == 2 ? i * m * k : 0);
      MutMap(out.data() + i * m * n, m, n).noalias() =
          ConstMap(ap, m, k) * ConstMap(bn->value.data() + i * k * n, k, n);
    }
  }

  const bool needs = any_requires_grad({&a, &b});
  return make_result(std::move(out_shape), std::move(out), "matmul", {an, bn}, needs,
                     [mode, batches, m, k, n](detail::Node& self) {
                       auto& pa = *self.parents[0];
                       auto& pb = *self.parents[1];
                       if (mode == 0) {
                         ConstMap dc(self.grad.data(), batches * m, n);
                         if (pa.requires_grad) {
                           MutMap(pa.grad_buffer().data(), batches * m, k).noalias() +=
                               dc * ConstMap(pb.value.data(), k, n).transpose();
                         }
                         if (pb.requires_grad) {
                           MutMap(pb.grad_buffer().data(), k, n).noalias() +=
                               ConstMap(pa.value.data(), batches * m, k).transpose() * dc;
                         }
                         return;
                       }
                       for (std::size_t i = 0; i < batches; ++i) {
                         const std::size_t a_off = mode == 2 ? i * m * k : 0;
                         ConstMap dc(self.grad.data() + i * m * n, m, n);
                         if (pa.requires_grad) {
                           MutMap(pa.grad_buffer().data() + a_off, m, k).noalias() +=
                               dc * ConstMap(pb.value.data() + i * k * n, k, n).transpose();
                         }
                         if (pb.requires_grad) {
                           MutMap(pb.grad_buffer().data() + i * k * n, k, n).noalias() +=
                               ConstMap(pa.value.data() + a_off, m, k).transpose() * dc;
                         }
                       }
                     });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& x) {
  const auto& xn = require(x, "sum");
  double s = 0.0;
  for (double v : xn->value) s += v;
  const bool needs = any_requires_grad({&x});
  return make_result({}, {s}, "sum", {xn}, needs, [](detail::Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    const double d = self.grad[0];
    for (double& v : g) v += d;
  });
}

Tensor mean(const Tensor& x) { return mul_scalar(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor sum(const Tensor& x, std::ptrdiff_t axis, bool keepdim) {
  const auto& xn = require(x, "sum");
  const std::size_t ax = normalize_axis(axis, xn->shape.size());
  const AxisLayout l = axis_layout(xn->shape, ax);
  std::vector<double> out(l.outer * l.inner, 0.0);
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t j = 0; j < l.len; ++j) {
      const double* src = xn->value.data() + (o * l.len + j) * l.inner;
      double* dst = out.data() + o * l.inner;
      for (std::size_t i = 0; i < l.inner; ++i) dst[i] += src[i];
    }
  }
  Shape shape = xn->shape;
  if (keepdim) {
    shape[ax] = 1;
  } else {
    shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(ax));
  }
  const bool needs = any_requires_grad({&x});
  return make_result(std::move(shape), std::move(out), "sum", {xn}, needs, [l](detail::Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t o = 0; o < l.outer; ++o) {
      const double* src = self.grad.data() + o * l.inner;
      for (std::size_t j = 0; j < l.len; ++j) {
        double* dst = g.data() + (o * l.len + j) * l.inner;
        for (std::size_t i = 0; i < l.inner; ++i) dst[i] += src[i];
      }
    }
  });
}

Tensor mean(const Tensor& x, std::ptrdiff_t axis, bool keepdim) {
  const std::size_t len = x.dim(axis);
  return mul_scalar(sum(x, axis, keepdim), 1.0 / static_cast<double>(len));
}

// ---------------------------------------------------------------------------
// Softmax family

Tensor softmax(const Tensor& x, std::ptrdiff_t axis) {
  const auto& xn = require(x, "softmax");
  const std::size_t ax = normalize_axis(axis, xn->shape.size());
  const AxisLayout l = axis_layout(xn->shape, ax);
  std::vector<double> out(xn->value.size());
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t i = 0; i < l.inner; ++i) {
      const std::size_t base = o * l.len * l.inner + i;
      double mx = xn->value[base];
      for (std::size_t j = 1; j < l.len; ++j) mx = std::max(mx, xn->value[base + j * l.inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < l.len; ++j) {
        const double e = std::exp(xn->value[base + j * l.inner] - mx);
        out[base + j * l.inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < l.len; ++j) out[base + j * l.inner] /= total;
    }
  }
  const bool needs = any_requires_grad({&x});
  return make_result(xn->shape, std::move(out), "softmax", {xn}, needs, [l](detail::Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t o = 0; o < l.outer; ++o) {
      for (std::size_t i = 0; i < l.inner; ++i) {
        const std::size_t base = o * l.len * l.inner + i;
        double dot = 0.0;
        for (std::size_t j = 0; j < l.len; ++j) {
          dot += self.grad[base + j * l.inner] * self.value[base + j * l.inner];
        }
        for (std::size_t j = 0; j < l.len; ++j) {
          const std::size_t idx = base + j * l.inner;
          g[idx] += self.value[idx] * (self.grad[idx] - dot);
        }
      }
    }
  });
}

Tensor log_softmax(const Tensor& x, std::ptrdiff_t axis) {
  const auto& xn = require(x, "log_softmax");
  const std::size_t ax = normalize_axis(axis, xn->shape.size());
  const AxisLayout l = axis_layout(xn->shape, ax);
  std::vector<double> out(xn->value.size());
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t i = 0; i < l.inner; ++i) {
      const std::size_t base = o * l.len * l.inner + i;
      std::size_t arg = 0;
      for (std::size_t j = 1; j < l.len; ++j) {
        if (xn->value[base + j * l.inner] > xn->value[base + arg * l.inner]) arg = j;
      }
      const double mx = xn->value[base + arg * l.inner];
      // log(1 + rest) via log1p keeps precision when one logit dominates.
      double rest = 0.0;
      for (std::size_t j = 0; j < l.len; ++j) {
        if (j != arg) rest += std::exp(xn->value[base + j * l.inner] - mx);
      }
      const double log_total = std::log1p(rest);
      for (std::size_t j = 0; j < l.len; ++j) {
        out[base + j * l.inner] = (xn->value[base + j * l.inner] - mx) - log_total;
      }
    }
  }
  const bool needs = any_requires_grad({&x});
  return make_result(xn->shape, std::move(out), "log_softmax", {xn}, needs, [l](detail::Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t o = 0; o < l.outer; ++o) {
      for (std::size_t i = 0; i < l.inner; ++i) {
        const std::size_t base = o * l.len * l.inner + i;
        double total = 0.0;
        for (std::size_t j = 0; j < l.len; ++j) total += self.grad[base + j * l.inner];
        for (std::size_t j = 0; j < l.len; ++j) {
          const std::size_t idx = base + j * l.inner;
          g[idx] += self.grad[idx] - std::exp(self.value[idx]) * total;
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Layer norm

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const auto& xn = require(x, "layer_norm");
  const auto& gn = require(gain, "layer_norm");
  const auto& bn = require(bias, "layer_norm");
  if (xn->shape.empty()) throw ShapeError("layer_norm: input must have at least one axis");
  const std::size_t d = xn->shape.back();
  if (gn->value.size() != d || bn->value.size() != d) {
    throw ShapeError("layer_norm: gain/bias " + to_string(gn->shape) + "/" + to_string(bn->shape) +
                     " do not match last axis of " + to_string(xn->shape));
  }
  const std::size_t rows = xn->value.size() / d;
  std::vector<double> out(xn->value.size());
  // Saved for backward: normalised input and inverse std per row.
  auto xhat = std::make_shared<std::vector<double>>(xn->value.size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xn->value.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (row[j] - mu) * is;
      (*xhat)[r * d + j] = h;
      out[r * d + j] = h * gn->value[j] + bn->value[j];
    }
  }
  const bool needs = any_requires_grad({&x, &gain, &bias});
  return make_result(xn->shape, std::move(out), "layer_norm", {xn, gn, bn}, needs,
                     [d, rows, xhat, inv_std](detail::Node& self) {
                       auto& px = *self.parents[0];
                       auto& pg = *self.parents[1];
                       auto& pb = *self.parents[2];
                       const double inv_d = 1.0 / static_cast<double>(d);
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* dy = self.grad.data() + r * d;
                         const double* h = xhat->data() + r * d;
                         if (pg.requires_grad) {
                           auto& g = pg.grad_buffer();
                           for (std::size_t j = 0; j < d; ++j) g[j] += dy[j] * h[j];
                         }
                         if (pb.requires_grad) {
                           auto& g = pb.grad_buffer();
                           for (std::size_t j = 0; j < d; ++j) g[j] += dy[j];
                         }
                         if (px.requires_grad) {
                           double mean_dh = 0.0, mean_dh_h = 0.0;
                           for (std::size_t j = 0; j < d; ++j) {
                             const double dh = dy[j] * pg.value[j];
                             mean_dh += dh;
                             mean_dh_h += dh * h[j];
                           }
                           mean_dh *= inv_d;
                           mean_dh_h *= inv_d;
                           auto& g = px.grad_buffer();
                           const double is = (*inv_std)[r];
                           for (std::size_t j = 0; j < d; ++j) {
                             const double dh = dy[j] * pg.value[j];
                             g[r * d + j] += is * (dh - mean_dh - h[j] * mean_dh_h);
                           }
                         }
                       }
                     });
}

// ---------------------------------------------------------------------------
// Dropout

Tensor dropout(const Tensor& x, double rate, Rng& rng, bool active) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  const auto& xn = require(x, "dropout");
  if (!active || rate == 0.0) return x;
  const double scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(xn->value.size());
  std::vector<double> out(xn->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*mask)[i] = rng.uniform() < rate ? 0.0 : scale;
    out[i] = xn->value[i] * (*mask)[i];
  }
  const bool needs = any_requires_grad({&x});
  return make_result(xn->shape, std::move(out), "dropout", {xn}, needs, [mask](detail::Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * (*mask)[i];
  });
}

// ---------------------------------------------------------------------------
// Shape manipulation

Tensor reshape(const Tensor& x, Shape shape) {
  const auto& xn = require(x, "reshape");
  if (numel(shape) != xn->value.size()) {
    throw ShapeError("reshape: cannot view " + to_string(xn->shape) + " as " + to_string(shape));
  }
  const bool needs = any_requires_grad({&x});
  return make_result(std::move(shape), xn->value, "reshape", {xn}, needs, [](detail::Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& order) {
  const auto& xn = require(x, "permute");
  const std::size_t r = xn->shape.size();
  if (order.size() != r) throw ShapeError("permute: order length does not match rank");
  std::vector<bool> seen(r, false);
  for (std::size_t a : order) {
    if (a >= r || seen[a]) throw ShapeError("permute: order is not a permutation");
    seen[a] = true;
  }
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = xn->shape[order[i]];
  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t i = r; i-- > 1;) in_stride[i - 1] = in_stride[i] * xn->shape[i];
  // Source offset for each output element, shared by forward and backward.
  auto src = std::make_shared<std::vector<std::size_t>>(xn->value.size());
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t flat = 0; flat < src->size(); ++flat) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < r; ++i) off += idx[i] * in_stride[order[i]];
    (*src)[flat] = off;
    for (std::size_t i = r; i-- > 0;) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  std::vector<double> out(xn->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xn->value[(*src)[i]];
  const bool needs = any_requires_grad({&x});
  return make_result(std::move(out_shape), std::move(out), "permute", {xn}, needs, [src](detail::Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[(*src)[i]] += self.grad[i];
  });
}

Tensor transpose(const Tensor& x, std::ptrdiff_t axis0, std::ptrdiff_t axis1) {
  const std::size_t r = x.rank();
  const std::size_t a0 = normalize_axis(axis0, r);
  const std::size_t a1 = normalize_axis(axis1, r);
  std::vector<std::size_t> order(r);
  std::iota(order.begin(), order.end(), 0);
  std::swap(order[a0], order[a1]);
  return permute(x, order);
}

Tensor concat(const std::vector<Tensor>& parts, std::ptrdiff_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = require(parts[0], "concat")->shape;
  const std::size_t ax = normalize_axis(axis, first.size());
  Shape out_shape = first;
  out_shape[ax] = 0;
  std::vector<NodePtr> nodes;
  std::vector<std::size_t> lens;
  bool needs = false;
  for (const Tensor& p : parts) {
    const auto& pn = require(p, "concat");
    Shape probe = pn->shape;
    if (probe.size() != first.size()) throw ShapeError("concat: rank mismatch");
    probe[ax] = first[ax];
    if (probe != first) {
      throw ShapeError("concat: " + to_string(pn->shape) + " incompatible with " + to_string(first) +
                       " along axis " + std::to_string(ax));
    }
    out_shape[ax] += pn->shape[ax];
    lens.push_back(pn->shape[ax]);
    nodes.push_back(pn);
    needs = needs || p.requires_grad();
  }
  needs = needs && g_grad_enabled;
  const AxisLayout l = axis_layout(out_shape, ax);
  std::vector<double> out(numel(out_shape));
  std::size_t offset = 0;
  for (std::size_t p = 0; p < nodes.size(); ++p) {
    const std::size_t chunk = lens[p] * l.inner;
    for (std::size_t o = 0; o < l.outer; ++o) {
      std::copy_n(nodes[p]->value.data() + o * chunk, chunk, out.data() + o * l.len * l.inner + offset);
    }
    offset += chunk;
  }
  return make_result(std::move(out_shape), std::move(out), "concat", nodes, needs, [l, lens](detail::Node& self) {
    std::size_t offset = 0;
    for (std::size_t p = 0; p < self.parents.size(); ++p) {
      const std::size_t chunk = lens[p] * l.inner;
      auto& parent = *self.parents[p];
      if (parent.requires_grad) {
        auto& g = parent.grad_buffer();
        for (std::size_t o = 0; o < l.outer; ++o) {
          const double* src = self.grad.data() + o * l.len * l.inner + offset;
          double* dst = g.data() + o * chunk;
          for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
        }
      }
      offset += chunk;
    }
  });
}

Tensor slice(const Tensor& x, std::ptrdiff_t axis, std::size_t start, std::size_t length) {
  const auto& xn = require(x, "slice");
  const std::size_t ax = normalize_axis(axis, xn->shape.size());
  if (length == 0 || start + length > xn->shape[ax]) {
    throw IndexError("slice [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") out of range for axis of size " + std::to_string(xn->shape[ax]));
  }
  const AxisLayout l = axis_layout(xn->shape, ax);
  Shape out_shape = xn->shape;
  out_shape[ax] = length;
  std::vector<double> out(numel(out_shape));
  const std::size_t chunk = length * l.inner;
  for (std::size_t o = 0; o < l.outer; ++o) {
    std::copy_n(xn->value.data() + (o * l.len + start) * l.inner, chunk, out.data() + o * chunk);
  }
  const bool needs = any_requires_grad({&x});
  return make_result(std::move(out_shape), std::move(out), "slice", {xn}, needs,
                     [l, start, chunk](detail::Node& self) {
                       auto& g = self.parents[0]->grad_buffer();
                       for (std::size_t o = 0; o < l.outer; ++o) {
                         const double* src = self.grad.data() + o * chunk;
                         double* dst = g.data() + (o * l.len + start) * l.inner;
                         for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
                       }
                     });
}

Tensor repeat(const Tensor& x, std::size_t n) {
  const auto& xn = require(x, "repeat");
  if (n == 0) throw ShapeError("repeat: count must be positive");
  Shape out_shape;
  out_shape.reserve(xn->shape.size() + 1);
  out_shape.push_back(n);
  out_shape.insert(out_shape.end(), xn->shape.begin(), xn->shape.end());
  std::vector<double> out;
  out.reserve(n * xn->value.size());
  for (std::size_t i = 0; i < n; ++i) out.insert(out.end(), xn->value.begin(), xn->value.end());
  const bool needs = any_requires_grad({&x});
  return make_result(std::move(out_shape), std::move(out), "repeat", {xn}, needs, [](detail::Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    accumulate_broadcast(g, self.grad.data(), self.grad.size());
  });
}

// ---------------------------------------------------------------------------
// Backward

void backward(const Tensor& loss) {
  const auto& root = require(loss, "backward");
  if (root->value.size() != 1) {
    throw ShapeError("backward: loss must be scalar-shaped, got " + to_string(root->shape));
  }
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (detail::Node* node : order) {
    if (!node->leaf) node->grad.assign(node->value.size(), 0.0);
  }
  root->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (!node->leaf && node->backward) node->backward(*node);
  }
}

}  // namespace vvit
