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

#include "vvit/model.hpp"

#include <algorithm>

#include "vvit/checkpoint.hpp"
#include "vvit/error.hpp"

namespace vvit {

// ---------------------------------------------------------------------------
// Config

void VVitConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
  if (cross_blocks < 1) fail("cross_blocks must be >= 1");
  if (votes < 1) fail("votes must be >= 1");
  if (!(head_dropout >= 0.0 && head_dropout < 1.0)) fail("head_dropout must lie in [0, 1)");
  if (!(backbone_dropout >= 0.0 && backbone_dropout < 1.0)) fail("backbone_dropout must lie in [0, 1)");
  if (model_dim == 0 || num_heads == 0 || model_dim % num_heads != 0) {
    fail("model_dim must be a positive multiple of num_heads");
  }
  if (ffn_dim == 0 || head_hidden == 0) fail("ffn_dim and head_hidden must be positive");
  if (image_channels == 0 || image_height == 0 || image_width == 0) fail("image shape must be positive");
  if (patch_size == 0 || image_height % patch_size != 0 || image_width % patch_size != 0) {
    fail("image size must be divisible by patch_size");
  }
  for (double l : {lambda_age, lambda_sex, lambda_reg, lambda_wd}) {
    if (!(l >= 0.0)) fail("loss weights must be non-negative");
  }
}

KeyValues VVitConfig::to_key_values() const {
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  return {
      {"cross_blocks", std::to_string(cross_blocks)},
      {"votes", std::to_string(votes)},
      {"head_dropout", format_double(head_dropout)},
      {"model_dim", std::to_string(model_dim)},
      {"num_heads", std::to_string(num_heads)},
      {"ffn_dim", std::to_string(ffn_dim)},
      {"encoder_depth", std::to_string(encoder_depth)},
      {"head_hidden", std::to_string(head_hidden)},
      {"backbone_dropout", format_double(backbone_dropout)},
      {"patch_size", std::to_string(patch_size)},
      {"image_channels", std::to_string(image_channels)},
      {"image_height", std::to_string(image_height)},
      {"image_width", std::to_string(image_width)},
      {"lambda_age", format_double(lambda_age)},
      {"lambda_sex", format_double(lambda_sex)},
      {"lambda_reg", format_double(lambda_reg)},
      {"lambda_wd", format_double(lambda_wd)},
      {"use_binocular", b(use_binocular)},
      {"use_voting", b(use_voting)},
      {"use_metadata", b(use_metadata)},
  };
}

VVitConfig VVitConfig::from_key_values(const KeyValues& kv, const std::string& source) {
  VVitConfig c;
  KeyValueReader r(kv, source);
  r.read("cross_blocks", c.cross_blocks);
  r.read("votes", c.votes);
  r.read("head_dropout", c.head_dropout);
  r.read("model_dim", c.model_dim);
  r.read("num_heads", c.num_heads);
  r.read("ffn_dim", c.ffn_dim);
  r.read("encoder_depth", c.encoder_depth);
  r.read("head_hidden", c.head_hidden);
  r.read("backbone_dropout", c.backbone_dropout);
  r.read("patch_size", c.patch_size);
  r.read("image_channels", c.image_channels);
  r.read("image_height", c.image_height);
  r.read("image_width", c.image_width);
  r.read("lambda_age", c.lambda_age);
  r.read("lambda_sex", c.lambda_sex);
  r.read("lambda_reg", c.lambda_reg);
  r.read("lambda_wd", c.lambda_wd);
  r.read("use_binocular", c.use_binocular);
  r.read("use_voting", c.use_voting);
  r.read("use_metadata", c.use_metadata);
  r.finish();
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Voting

VoteBundle VoteBundle::from_votes(std::vector<double> votes) {
  if (votes.empty()) throw InputError("vote bundle needs at least one vote");
  VoteBundle b;
  double total = 0.0;
  for (double v : votes) total += v;
  b.mean = total / static_cast<double>(votes.size());
  // Shifted by the first vote so that identical votes give exactly zero.
  const double n = static_cast<double>(votes.size());
  double shifted = 0.0, sq = 0.0;
  for (double v : votes) {
    shifted += v - votes[0];
    sq += (v - votes[0]) * (v - votes[0]);
  }
  b.variance = std::max(0.0, sq / n - (shifted / n) * (shifted / n));
  b.votes = std::move(votes);
  return b;
}

double predict_probability(const VoteBundle& bundle) { return bundle.mean; }

namespace {

std::vector<VoteBundle> bundles_from(const Tensor& votes) {
  const std::size_t n = votes.dim(0), b = votes.dim(1);
  const auto v = votes.values();
  std::vector<VoteBundle> out;
  out.reserve(b);
  for (std::size_t j = 0; j < b; ++j) {
    std::vector<double> column(n);
    for (std::size_t i = 0; i < n; ++i) column[i] = v[i * b + j];
    out.push_back(VoteBundle::from_votes(std::move(column)));
  }
  return out;
}

VoteResult run_votes(const Tensor& z, const MlpHead& head, std::size_t n, Rng& rng, bool dropout_active) {
  if (n == 0) throw ConfigError("vote count must be >= 1");
  if (head.output_dim() != 1) throw ShapeError("glaucoma head must have a single output");
  const Tensor zb = z.rank() == 1 ? reshape(z, {1, z.numel()}) : z;
  if (zb.rank() != 2) throw ShapeError("vote: z must be [D] or [B, D], got " + to_string(z.shape()));
  const std::size_t b = zb.dim(0);
  const Tensor logits = mlp_head_forward(repeat(zb, n), head, rng, dropout_active);  // [n, b, 1]
  VoteResult r;
  r.votes = sigmoid(reshape(logits, {n, b}));
  r.bundles = bundles_from(r.votes);
  return r;
}

}  // namespace

VoteResult vote(const Tensor& z, const MlpHead& glaucoma_head, std::size_t n, Rng& rng) {
  return run_votes(z, glaucoma_head, n, rng, true);
}

// ---------------------------------------------------------------------------
// Attention maps

namespace {

const Tensor& select_weights(const ModelOutput& output, std::size_t block_index, Eye eye) {
  const auto& att = output.representation.attention;
  if (att.empty()) throw IndexError("attention map: model has no cross-attention blocks (single-eye config)");
  if (block_index >= att.size()) {
    throw IndexError("attention map: block " + std::to_string(block_index) + " out of range, model has " +
                     std::to_string(att.size()) + " cross-attention blocks");
  }
  // The map over an eye's patches comes from the stream that uses that eye as
  // context: the fellow [CLS] attending over target tokens, and vice versa.
  return eye == Eye::Target ? att[block_index].fellow_queries : att[block_index].target_queries;
}

}  // namespace

Tensor attention_map(const ModelOutput& output, std::size_t block_index, Eye eye, std::size_t sample) {
  const Tensor& w = select_weights(output, block_index, eye);
  const std::size_t b = w.dim(0), h = w.dim(1), tq = w.dim(2), tk = w.dim(3);
  if (sample >= b) throw IndexError("attention map: sample index out of range");
  const std::size_t rows = output.representation.grid_rows, cols = output.representation.grid_cols;
  if (rows * cols + 1 != tk) throw ShapeError("attention map: grid does not match token count");
  const auto v = w.values();
  std::vector<double> grid(rows * cols, 0.0);
  for (std::size_t head = 0; head < h; ++head) {
    const double* row = v.data() + ((sample * h + head) * tq + 0) * tk;  // query 0 is [CLS]
    for (std::size_t p = 0; p < rows * cols; ++p) grid[p] += row[p + 1];
  }
  for (double& g : grid) g /= static_cast<double>(h);
  return Tensor({rows, cols}, std::move(grid));
}

double attention_cls_weight(const ModelOutput& output, std::size_t block_index, Eye eye, std::size_t sample) {
  const Tensor& w = select_weights(output, block_index, eye);
  const std::size_t b = w.dim(0), h = w.dim(1), tq = w.dim(2), tk = w.dim(3);
  if (sample >= b) throw IndexError("attention map: sample index out of range");
  const auto v = w.values();
  double total = 0.0;
  for (std::size_t head = 0; head < h; ++head) total += v[((sample * h + head) * tq) * tk];
  return total / static_cast<double>(h);
}

// ---------------------------------------------------------------------------
// Model

VVitModel VVitModel::create(const VVitConfig& config, std::uint64_t seed) {
  config.validate();
  VVitModel m;
  m.config_ = config;
  Rng rng = Rng(seed).derive("init");
  const std::size_t d = config.model_dim;
  m.embed_ = PatchEmbedding::create(config.image_channels, config.image_height, config.image_width,
                                    config.patch_size, d, rng);
  for (std::size_t i = 0; i < config.encoder_depth; ++i) {
    m.encoder_.push_back(AttentionBlock::create(d, config.num_heads, config.ffn_dim, config.backbone_dropout, rng));
  }
  if (config.use_binocular) {
    for (std::size_t i = 0; i < config.cross_blocks; ++i) {
      CrossBlock cb{AttentionBlock::create(d, config.num_heads, config.ffn_dim, config.backbone_dropout, rng),
                    AttentionBlock::create(d, config.num_heads, config.ffn_dim, config.backbone_dropout, rng)};
      m.cross_.push_back(std::move(cb));
    }
  }
  m.final_norm_ = LayerNorm::create(d);
  const std::size_t zd = config.representation_dim();
  m.glaucoma_ = MlpHead::create({zd, config.head_hidden, 1}, config.head_dropout, rng);
  if (config.use_metadata) {
    m.age_ = MlpHead::create({zd, config.head_hidden, 1}, 0.0, rng);
    m.sex_ = MlpHead::create({zd, config.head_hidden, 2}, 0.0, rng);
  }
  return m;
}

NamedParameters VVitModel::parameters() const {
  NamedParameters out;
  embed_.collect("encoder.embed", out);
  for (std::size_t i = 0; i < encoder_.size(); ++i) encoder_[i].collect("encoder.block" + std::to_string(i), out);
  for (std::size_t i = 0; i < cross_.size(); ++i) {
    cross_[i].target_from_fellow.collect("fusion.block" + std::to_string(i) + ".target_from_fellow", out);
    cross_[i].fellow_from_target.collect("fusion.block" + std::to_string(i) + ".fellow_from_target", out);
  }
  final_norm_.collect("final_norm", out);
  glaucoma_.collect("head.glaucoma", out);
  if (config_.use_metadata) {
    age_.collect("head.age", out);
    sex_.collect("head.sex", out);
  }
  return out;
}

VVitModel VVitModel::clone() const {
  VVitModel copy = create(config_, 0);
  NamedParameters dst = copy.parameters();
  load_parameters(dst, parameters());
  copy.age_scaler = age_scaler;
  return copy;
}

Tensor VVitModel::encode_eye(const Tensor& images, Rng& rng, bool train) const {
  Tensor tokens = patch_embed(images, embed_);
  for (const auto& block : encoder_) tokens = self_attention(tokens, block, rng, train).output;
  return tokens;
}

FusedRepresentation VVitModel::encode(const Tensor& target, const Tensor* fellow, Rng& rng, bool train) const {
  if (target.rank() != 4) throw ShapeError("forward: images must be [B, C, H, W], got " + to_string(target.shape()));
  if (config_.use_binocular && fellow == nullptr) {
    throw InputError("forward: binocular model needs a fellow-eye image");
  }
  const std::size_t b = target.dim(0), d = config_.model_dim;
  FusedRepresentation rep;
  rep.grid_rows = embed_.grid_rows();
  rep.grid_cols = embed_.grid_cols();

  Tensor t = encode_eye(target, rng, train);
  if (!config_.use_binocular) {
    t = final_norm_.forward(t);
    rep.z = reshape(slice(t, 1, 0, 1), {b, d});
    return rep;
  }
  if (fellow->shape() != target.shape()) {
    throw ShapeError("forward: fellow image " + to_string(fellow->shape()) + " differs from target " +
                     to_string(target.shape()));
  }
  Tensor f = encode_eye(*fellow, rng, train);
  for (const auto& cb : cross_) {
    // Both directions read the same inputs, then each stream continues.
    AttentionOutput to_t = cross_attention(t, f, cb.target_from_fellow, rng, train);
    AttentionOutput to_f = cross_attention(f, t, cb.fellow_from_target, rng, train);
    rep.attention.push_back({to_t.weights, to_f.weights});
    t = to_t.output;
    f = to_f.output;
  }
  t = final_norm_.forward(t);
  f = final_norm_.forward(f);
  rep.z = concat({reshape(slice(t, 1, 0, 1), {b, d}), reshape(slice(f, 1, 0, 1), {b, d})}, 1);
  return rep;
}

ModelOutput VVitModel::forward(const Tensor& target, const Tensor* fellow, Rng& backbone_rng, Rng& vote_rng,
                               bool train) const {
  ModelOutput out;
  out.representation = encode(target, fellow, backbone_rng, train);
  const Tensor& z = out.representation.z;
  // Without voting, inference is one deterministic pass; training keeps
  // head dropout on either way.
  const bool head_dropout = train || config_.use_voting;
  VoteResult votes = run_votes(z, glaucoma_, config_.effective_votes(), vote_rng, head_dropout);
  out.votes = votes.votes;
  out.bundles = std::move(votes.bundles);
  if (config_.use_metadata) {
    const std::size_t b = z.dim(0);
    out.age_pred = reshape(mlp_head_forward(z, age_, backbone_rng, train), {b});
    out.sex_logits = mlp_head_forward(z, sex_, backbone_rng, train);
  }
  return out;
}

VoteResult VVitModel::predict_votes(const Tensor& z, Rng& rng) const {
  return run_votes(z, glaucoma_, config_.effective_votes(), rng, config_.use_voting);
}

ModelOutput VVitModel::forward(const Tensor& target, const Tensor* fellow, Rng& rng, bool train) const {
  Rng backbone = rng.derive("backbone");
  Rng votes = rng.derive("votes");
  return forward(target, fellow, backbone, votes, train);
}

void VVitModel::save(const std::filesystem::path& path) const {
  nlohmann::json meta;
  meta["format"] = "vvit-model";
  nlohmann::json cfg = nlohmann::json::object();
  for (const auto& [k, v] : config_.to_key_values()) cfg[k] = v;
  meta["config"] = cfg;
  meta["age_mean"] = age_scaler.mean;
  meta["age_stddev"] = age_scaler.stddev;
  write_checkpoint(path, meta, parameters());
}

VVitModel VVitModel::load(const std::filesystem::path& path) {
  Checkpoint ck = read_checkpoint(path);
  if (ck.metadata.value("format", "") != "vvit-model") {
    throw InputError("incompatible checkpoint " + path.string() + ": not a model checkpoint");
  }
  KeyValues kv;
  try {
    for (const auto& [k, v] : ck.metadata.at("config").items()) kv.emplace_back(k, v.get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint " + path.string() + ": bad config block: " + e.what());
  }
  VVitModel model = create(VVitConfig::from_key_values(kv, path.string()), 0);
  NamedParameters dst = model.parameters();
  load_parameters(dst, ck.parameters);
  model.age_scaler.mean = ck.metadata.value("age_mean", 0.0);
  model.age_scaler.stddev = ck.metadata.value("age_stddev", 1.0);
  return model;
}

}  // namespace vvit
