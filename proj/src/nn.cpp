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

#include "vvit/nn.hpp"

#include <algorithm>
#include <cmath>

#include "vvit/error.hpp"

namespace vvit {

namespace {

// Truncation-free normal init; 0.02 matches common ViT practice, scaled down
// for wide inputs so activations stay O(1).
double init_std(std::size_t fan_in) { return std::min(0.02, 1.0 / std::sqrt(static_cast<double>(fan_in))); }

}  // namespace

Linear Linear::create(std::size_t in, std::size_t out, Rng& rng) {
  if (in == 0 || out == 0) throw ConfigError("linear layer dimensions must be positive");
  // Xavier-uniform weights, zero bias.
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  std::vector<double> w(in * out);
  for (double& x : w) x = rng.uniform(-bound, bound);
  return Linear{Tensor({in, out}, std::move(w), true), Tensor::zeros({out}, true)};
}

Tensor Linear::forward(const Tensor& x) const {
  if (x.rank() == 0 || x.dim(-1) != in_dim()) {
    throw ShapeError("linear: input " + to_string(x.shape()) + " does not end in " + std::to_string(in_dim()));
  }
  if (x.rank() == 1) return reshape(matmul(reshape(x, {1, in_dim()}), weight), {out_dim()}) + bias;
  return matmul(x, weight) + bias;
}

void Linear::collect(const std::string& prefix, NamedParameters& out) const {
  out.emplace_back(prefix + ".weight", weight);
  out.emplace_back(prefix + ".bias", bias);
}

LayerNorm LayerNorm::create(std::size_t dim) {
  return LayerNorm{Tensor::full({dim}, 1.0, true), Tensor::zeros({dim}, true)};
}

Tensor LayerNorm::forward(const Tensor& x) const { return layer_norm(x, gain, bias, 1e-5); }

void LayerNorm::collect(const std::string& prefix, NamedParameters& out) const {
  out.emplace_back(prefix + ".gain", gain);
  out.emplace_back(prefix + ".bias", bias);
}

AttentionBlock AttentionBlock::create(std::size_t model_dim, std::size_t num_heads, std::size_t ffn_dim,
                                      double dropout, Rng& rng) {
  if (num_heads == 0 || model_dim % num_heads != 0) {
    throw ConfigError("model_dim " + std::to_string(model_dim) + " is not divisible by num_heads " +
                      std::to_string(num_heads));
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("attention dropout must lie in [0, 1)");
  AttentionBlock b;
  b.norm_attn = LayerNorm::create(model_dim);
  b.norm_ffn = LayerNorm::create(model_dim);
  b.query = Linear::create(model_dim, model_dim, rng);
  b.key = Linear::create(model_dim, model_dim, rng);
  b.value = Linear::create(model_dim, model_dim, rng);
  b.output = Linear::create(model_dim, model_dim, rng);
  b.ffn_in = Linear::create(model_dim, ffn_dim, rng);
  b.ffn_out = Linear::create(ffn_dim, model_dim, rng);
  b.num_heads = num_heads;
  b.head_dim = model_dim / num_heads;
  b.dropout = dropout;
  return b;
}

void AttentionBlock::collect(const std::string& prefix, NamedParameters& out) const {
  norm_attn.collect(prefix + ".norm_attn", out);
  query.collect(prefix + ".query", out);
  key.collect(prefix + ".key", out);
  value.collect(prefix + ".value", out);
  output.collect(prefix + ".output", out);
  norm_ffn.collect(prefix + ".norm_ffn", out);
  ffn_in.collect(prefix + ".ffn_in", out);
  ffn_out.collect(prefix + ".ffn_out", out);
}

AttentionOutput cross_attention(const Tensor& query_seq, const Tensor& context_seq,
                                const AttentionBlock& block, Rng& rng, bool train) {
  const std::size_t d = block.model_dim();
  const bool batched = query_seq.rank() == 3;
  auto check = [&](const Tensor& t, const char* what) {
    if ((t.rank() != 2 && t.rank() != 3) || t.rank() != query_seq.rank() || t.dim(-1) != d) {
      throw ShapeError(std::string("attention: ") + what + " " + to_string(t.shape()) +
                       " incompatible with model_dim " + std::to_string(d));
    }
  };
  check(query_seq, "query sequence");
  check(context_seq, "context sequence");
  if (batched && query_seq.dim(0) != context_seq.dim(0)) {
    throw ShapeError("attention: batch sizes differ between " + to_string(query_seq.shape()) + " and " +
                     to_string(context_seq.shape()));
  }

  const Tensor x = batched ? query_seq : reshape(query_seq, {1, query_seq.dim(0), d});
  const Tensor c = batched ? context_seq : reshape(context_seq, {1, context_seq.dim(0), d});
  const std::size_t b = x.dim(0), tq = x.dim(1), tk = c.dim(1);
  const std::size_t h = block.num_heads, hd = block.head_dim;

  const Tensor xq = block.norm_attn.forward(x);
  const Tensor xc = block.norm_attn.forward(c);
  const Tensor q = permute(reshape(block.query.forward(xq), {b, tq, h, hd}), {0, 2, 1, 3});
  const Tensor k = permute(reshape(block.key.forward(xc), {b, tk, h, hd}), {0, 2, 3, 1});
  const Tensor v = permute(reshape(block.value.forward(xc), {b, tk, h, hd}), {0, 2, 1, 3});

  const Tensor scores = mul_scalar(matmul(q, k), 1.0 / std::sqrt(static_cast<double>(hd)));
  const Tensor weights = softmax(scores, -1);  // [b, h, tq, tk]
  const Tensor mixed = reshape(permute(matmul(weights, v), {0, 2, 1, 3}), {b, tq, d});
  const Tensor attended = dropout(block.output.forward(mixed), block.dropout, rng, train);
  const Tensor x1 = x + attended;

  const Tensor hidden = gelu(block.ffn_in.forward(block.norm_ffn.forward(x1)));
  const Tensor ffn = dropout(block.ffn_out.forward(hidden), block.dropout, rng, train);
  const Tensor out = x1 + ffn;

  AttentionOutput result;
  result.output = batched ? out : reshape(out, {tq, d});
  result.weights = batched ? weights.detach() : reshape(weights.detach(), {h, tq, tk});
  return result;
}

AttentionOutput self_attention(const Tensor& x, const AttentionBlock& block, Rng& rng, bool train) {
  return cross_attention(x, x, block, rng, train);
}

PatchEmbedding PatchEmbedding::create(std::size_t channels, std::size_t height, std::size_t width,
                                      std::size_t patch_size, std::size_t model_dim, Rng& rng) {
  if (channels == 0 || height == 0 || width == 0 || model_dim == 0) {
    throw ConfigError("image shape and model_dim must be positive");
  }
  if (patch_size == 0 || height % patch_size != 0 || width % patch_size != 0) {
    throw ConfigError("image " + std::to_string(height) + "x" + std::to_string(width) +
                      " is not divisible into patches of size " + std::to_string(patch_size));
  }
  PatchEmbedding e;
  e.patch_size = patch_size;
  e.channels = channels;
  e.height = height;
  e.width = width;
  e.projection = Linear::create(channels * patch_size * patch_size, model_dim, rng);
  e.cls_token = Tensor::normal({model_dim}, init_std(model_dim), rng, true);
  e.positions = Tensor::normal({e.num_patches() + 1, model_dim}, init_std(model_dim), rng, true);
  return e;
}

void PatchEmbedding::collect(const std::string& prefix, NamedParameters& out) const {
  projection.collect(prefix + ".projection", out);
  out.emplace_back(prefix + ".cls_token", cls_token);
  out.emplace_back(prefix + ".positions", positions);
}

Tensor patch_embed(const Tensor& images, const PatchEmbedding& embed) {
  const bool batched = images.rank() == 4;
  if (!batched && images.rank() != 3) {
    throw ShapeError("patch_embed: expected [C,H,W] or [B,C,H,W], got " + to_string(images.shape()));
  }
  const Shape& s = images.shape();
  const std::size_t off = batched ? 1 : 0;
  if (s[off] != embed.channels || s[off + 1] != embed.height || s[off + 2] != embed.width) {
    throw ShapeError("patch_embed: image " + to_string(s) + " does not match configured " +
                     std::to_string(embed.channels) + "x" + std::to_string(embed.height) + "x" +
                     std::to_string(embed.width));
  }
  const std::size_t b = batched ? s[0] : 1;
  const std::size_t p = embed.patch_size;
  const std::size_t rows = embed.grid_rows(), cols = embed.grid_cols();
  const std::size_t n = rows * cols;
  const std::size_t pd = embed.channels * p * p;
  const std::size_t d = embed.model_dim();

  // [b, C, rows, p, cols, p] -> [b, rows, cols, C, p, p]: patch vectors are
  // ordered (channel, dy, dx), patches row-major.
  const Tensor grid = reshape(images, {b, embed.channels, rows, p, cols, p});
  const Tensor patches = reshape(permute(grid, {0, 2, 4, 1, 3, 5}), {b, n, pd});
  const Tensor tokens = embed.projection.forward(patches);
  const Tensor cls = repeat(reshape(embed.cls_token, {1, d}), b);  // [b, 1, d]
  const Tensor seq = concat({cls, tokens}, 1) + embed.positions;
  return batched ? seq : reshape(seq, {n + 1, d});
}

MlpHead MlpHead::create(const std::vector<std::size_t>& dims, double dropout, Rng& rng) {
  if (dims.size() < 2) throw ConfigError("MLP head needs at least input and output dims");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("head dropout must lie in [0, 1)");
  MlpHead head;
  head.dropout = dropout;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) head.layers.push_back(Linear::create(dims[i], dims[i + 1], rng));
  return head;
}

void MlpHead::collect(const std::string& prefix, NamedParameters& out) const {
  for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect(prefix + ".layer" + std::to_string(i), out);
}

Tensor mlp_head_forward(const Tensor& z, const MlpHead& head, Rng& rng, bool dropout_active) {
  if (z.rank() == 0 || z.dim(-1) != head.input_dim()) {
    throw ShapeError("mlp head: input " + to_string(z.shape()) + " does not end in " +
                     std::to_string(head.input_dim()));
  }
  Tensor h = head.layers.front().forward(z);
  for (std::size_t i = 1; i < head.layers.size(); ++i) {
    h = dropout(gelu(h), head.dropout, rng, dropout_active);
    h = head.layers[i].forward(h);
  }
  return h;
}

}  // namespace vvit
