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

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vvit/kv_config.hpp"
#include "vvit/nn.hpp"

namespace vvit {

/// Architecture, voting and objective settings. The key-value file format
/// uses the member names below as keys.
struct VVitConfig {
  std::size_t cross_blocks = 3;  // L
  std::size_t votes = 16;        // n
  double head_dropout = 0.3;
  std::size_t model_dim = 64;
  std::size_t num_heads = 4;
  std::size_t ffn_dim = 128;
  std::size_t encoder_depth = 2;  // self-attention blocks per eye before fusion
  std::size_t head_hidden = 64;
  double backbone_dropout = 0.0;  // training only
  std::size_t patch_size = 8;
  std::size_t image_channels = 1;
  std::size_t image_height = 32;
  std::size_t image_width = 32;
  double lambda_age = 0.02;
  double lambda_sex = 0.02;
  double lambda_reg = 1.0;
  double lambda_wd = 1e-5;
  bool use_binocular = true;
  bool use_voting = true;
  bool use_metadata = true;

  void validate() const;
  /// Votes drawn per forward: n with voting, otherwise a single pass.
  std::size_t effective_votes() const { return use_voting ? votes : 1; }
  std::size_t representation_dim() const { return use_binocular ? 2 * model_dim : model_dim; }

  KeyValues to_key_values() const;
  static VVitConfig from_key_values(const KeyValues& kv, const std::string& source);
};

enum class Eye { Target, Fellow };

struct VoteBundle {
  std::vector<double> votes;
  double mean = 0.0;
  double variance = 0.0;  // population variance

  static VoteBundle from_votes(std::vector<double> votes);
};

/// Returns the bundle mean: the model's probability estimate.
double predict_probability(const VoteBundle& bundle);

struct CrossAttentionWeights {
  Tensor target_queries;  // target stream attending over fellow tokens, [B, h, T, T]
  Tensor fellow_queries;  // fellow stream attending over target tokens
};

struct FusedRepresentation {
  Tensor z;  // [B, 2d], or [B, d] single-eye
  std::vector<CrossAttentionWeights> attention;
  std::size_t grid_rows = 0;
  std::size_t grid_cols = 0;
};

struct VoteResult {
  Tensor votes;  // [n, B], sigmoid outputs
  std::vector<VoteBundle> bundles;
};

/// n passes of the glaucoma head over the same z, each with a fresh dropout
/// mask, ending in a sigmoid. Dropout is active whatever the caller's mode.
VoteResult vote(const Tensor& z, const MlpHead& glaucoma_head, std::size_t n, Rng& rng);

struct ModelOutput {
  Tensor votes;  // [n, B]
  std::vector<VoteBundle> bundles;
  Tensor age_pred;    // [B] standardised age; undefined without metadata
  Tensor sex_logits;  // [B, 2]; undefined without metadata
  FusedRepresentation representation;

  std::size_t batch_size() const { return bundles.size(); }
};

/// Weights over `eye`'s patch grid from the [CLS] query of the other stream
/// in cross-attention block `block_index`, averaged over heads. The weight on
/// the context [CLS] token is excluded, so cells sum to at most 1.
Tensor attention_map(const ModelOutput& output, std::size_t block_index, Eye eye, std::size_t sample = 0);
/// Weight the same query row puts on the context [CLS] token.
double attention_cls_weight(const ModelOutput& output, std::size_t block_index, Eye eye, std::size_t sample = 0);

/// Affine map between years and the standardised age regression target.
struct AgeScaler {
  double mean = 0.0;
  double stddev = 1.0;
  double standardize(double years) const { return (years - mean) / stddev; }
  double to_years(double standardized) const { return standardized * stddev + mean; }
};

class VVitModel {
 public:
  static VVitModel create(const VVitConfig& config, std::uint64_t seed);

  const VVitConfig& config() const { return config_; }
  NamedParameters parameters() const;
  /// Fresh parameters with identical values.
  VVitModel clone() const;

  /// target/fellow: [B, C, H, W]. `fellow` may be null only for single-eye
  /// configs. The backbone runs once; only the glaucoma head is repeated.
  ModelOutput forward(const Tensor& target, const Tensor* fellow, Rng& backbone_rng, Rng& vote_rng,
                      bool train) const;
  /// Derives the backbone and vote streams from `rng`.
  ModelOutput forward(const Tensor& target, const Tensor* fellow, Rng& rng, bool train) const;
  FusedRepresentation encode(const Tensor& target, const Tensor* fellow, Rng& rng, bool train) const;
  /// Inference votes from a fused representation: n dropout passes with
  /// voting, otherwise one deterministic pass.
  VoteResult predict_votes(const Tensor& z, Rng& rng) const;

  const PatchEmbedding& embedding() const { return embed_; }
  const MlpHead& glaucoma_head() const { return glaucoma_; }
  MlpHead& glaucoma_head() { return glaucoma_; }
  const std::vector<AttentionBlock>& encoder_blocks() const { return encoder_; }

  AgeScaler age_scaler;

  void save(const std::filesystem::path& path) const;
  static VVitModel load(const std::filesystem::path& path);

 private:
  struct CrossBlock {
    AttentionBlock target_from_fellow;
    AttentionBlock fellow_from_target;
  };

  Tensor encode_eye(const Tensor& images, Rng& rng, bool train) const;

  VVitConfig config_;
  PatchEmbedding embed_;
  std::vector<AttentionBlock> encoder_;
  std::vector<CrossBlock> cross_;
  LayerNorm final_norm_;
  MlpHead glaucoma_;
  MlpHead age_;
  MlpHead sex_;
};

}  // namespace vvit
