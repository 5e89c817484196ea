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

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "vvit/optim.hpp"
#include "vvit/rng.hpp"
#include "vvit/tensor.hpp"

namespace vvit {

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  static Linear create(std::size_t in, std::size_t out, Rng& rng);
  std::size_t in_dim() const { return weight.dim(0); }
  std::size_t out_dim() const { return weight.dim(1); }
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, NamedParameters& out) const;
};

struct LayerNorm {
  Tensor gain;
  Tensor bias;

  static LayerNorm create(std::size_t dim);
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, NamedParameters& out) const;
};

/// Pre-norm transformer block. The same block type serves self- and
/// cross-attention; they differ only in where keys and values come from.
struct AttentionBlock {
  LayerNorm norm_attn;
  LayerNorm norm_ffn;
  Linear query, key, value, output;
  Linear ffn_in, ffn_out;
  std::size_t num_heads = 1;
  std::size_t head_dim = 1;
  double dropout = 0.0;

  static AttentionBlock create(std::size_t model_dim, std::size_t num_heads, std::size_t ffn_dim,
                               double dropout, Rng& rng);
  std::size_t model_dim() const { return num_heads * head_dim; }
  void collect(const std::string& prefix, NamedParameters& out) const;
};

struct AttentionOutput {
  Tensor output;   // same shape as the query sequence
  Tensor weights;  // [B, heads, Tq, Tk] (or [heads, Tq, Tk] unbatched), detached
};

/// Queries from `query_seq`, keys and values from `context_seq`; both are
/// [T, d] or [B, T, d]. Residuals are taken on the query stream.
AttentionOutput cross_attention(const Tensor& query_seq, const Tensor& context_seq,
                                const AttentionBlock& block, Rng& rng, bool train);
AttentionOutput self_attention(const Tensor& x, const AttentionBlock& block, Rng& rng, bool train);

/// Linear patch projector with a prepended [CLS] token and learned positions.
struct PatchEmbedding {
  Linear projection;  // [channels * patch^2, model_dim]
  Tensor cls_token;   // [model_dim]
  Tensor positions;   // [num_patches + 1, model_dim]
  std::size_t patch_size = 1;
  std::size_t channels = 1, height = 1, width = 1;

  static PatchEmbedding create(std::size_t channels, std::size_t height, std::size_t width,
                               std::size_t patch_size, std::size_t model_dim, Rng& rng);
  std::size_t grid_rows() const { return height / patch_size; }
  std::size_t grid_cols() const { return width / patch_size; }
  std::size_t num_patches() const { return grid_rows() * grid_cols(); }
  std::size_t model_dim() const { return cls_token.numel(); }
  void collect(const std::string& prefix, NamedParameters& out) const;
};

/// images: [C, H, W] -> [N + 1, d], or [B, C, H, W] -> [B, N + 1, d]. Row 0
/// is the [CLS] token; row 1 + r * cols + c is patch (r, c).
Tensor patch_embed(const Tensor& images, const PatchEmbedding& embed);

struct MlpHead {
  std::vector<Linear> layers;
  double dropout = 0.0;

  /// dims = {input, hidden..., output}.
  static MlpHead create(const std::vector<std::size_t>& dims, double dropout, Rng& rng);
  std::size_t input_dim() const { return layers.front().in_dim(); }
  std::size_t output_dim() const { return layers.back().out_dim(); }
  void collect(const std::string& prefix, NamedParameters& out) const;
};

/// gelu then dropout (when active) between consecutive layers; the last
/// layer's output is returned as is (no activation).
Tensor mlp_head_forward(const Tensor& z, const MlpHead& head, Rng& rng, bool dropout_active);

}  // namespace vvit
