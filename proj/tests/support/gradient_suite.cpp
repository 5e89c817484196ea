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

#include <string>
#include <vector>

#include "test_support.hpp"
#include "vvit/losses.hpp"
#include "vvit/nn.hpp"

namespace vvit::testing {

namespace {

Tensor param(Shape shape, Rng& rng, double scale = 1.0) { return Tensor::normal(std::move(shape), scale, rng, true); }

std::vector<Tensor> tensors_of(const NamedParameters& params) {
  std::vector<Tensor> out;
  for (const auto& [name, t] : params) out.push_back(t);
  return out;
}

}  // namespace

std::vector<OpCheck> gradient_suite(std::uint64_t seed) {
  Rng rng = Rng(seed).derive("gradient-suite");
  std::vector<OpCheck> checks;
  std::uint64_t case_id = 0;
  auto run = [&](const std::string& name, const std::function<Tensor()>& f, const std::vector<Tensor>& inputs) {
    checks.push_back({name, check_gradients(f, inputs, Rng::combine(seed, ++case_id))});
  };

  Tensor a = param({3, 4}, rng), b = param({3, 4}, rng);
  Tensor c3 = param({2, 3, 4}, rng), row = param({4}, rng);
  run("add", [&] { return add(a, b); }, {a, b});
  run("add_broadcast", [&] { return add(c3, a); }, {c3, a});
  run("sub", [&] { return sub(a, b); }, {a, b});
  run("mul", [&] { return mul(a, b); }, {a, b});
  run("mul_broadcast", [&] { return mul(c3, row); }, {c3, row});
  run("add_scalar", [&] { return add_scalar(a, 0.7); }, {a});
  run("mul_scalar", [&] { return mul_scalar(a, -1.3); }, {a});
  run("neg", [&] { return neg(a); }, {a});
  run("square", [&] { return square(a); }, {a});

  Tensor m1 = param({3, 4}, rng), m2 = param({4, 2}, rng);
  Tensor bm1 = param({2, 3, 4}, rng), bm2 = param({2, 4, 5}, rng), sm2 = param({4, 5}, rng);
  run("matmul", [&] { return matmul(m1, m2); }, {m1, m2});
  run("matmul_batched", [&] { return matmul(bm1, bm2); }, {bm1, bm2});
  run("matmul_shared_rhs", [&] { return matmul(bm1, sm2); }, {bm1, sm2});

  run("sum", [&] { return sum(c3); }, {c3});
  run("mean", [&] { return mean(c3); }, {c3});
  run("sum_axis", [&] { return sum(c3, 1); }, {c3});
  run("mean_axis_keepdim", [&] { return mean(c3, 0, true); }, {c3});

  Tensor s = param({2, 5}, rng, 2.0);
  run("sigmoid", [&] { return sigmoid(s); }, {s});
  run("gelu", [&] { return gelu(s); }, {s});
  run("softmax_last", [&] { return softmax(s, -1); }, {s});
  run("softmax_first", [&] { return softmax(s, 0); }, {s});
  run("log_softmax", [&] { return log_softmax(s, -1); }, {s});

  Tensor ln_x = param({4, 8}, rng), gain = param({8}, rng), bias = param({8}, rng);
  run("layer_norm", [&] { return layer_norm(ln_x, gain, bias); }, {ln_x, gain, bias});

  const std::uint64_t mask_seed = rng.next_u64();
  run("dropout", [&] {
    Rng r(mask_seed);
    return dropout(c3, 0.3, r, true);
  }, {c3});
  run("reshape", [&] { return reshape(c3, {4, 6}); }, {c3});
  run("permute", [&] { return permute(c3, {2, 0, 1}); }, {c3});
  run("transpose", [&] { return transpose(c3, 0, 2); }, {c3});
  run("concat", [&] { return concat({a, b, a}, 1); }, {a, b});
  run("slice", [&] { return slice(c3, 2, 1, 2); }, {c3});
  run("repeat", [&] { return repeat(a, 3); }, {a});

  // nn building blocks
  Linear lin = Linear::create(4, 3, rng);
  run("linear", [&] { return lin.forward(c3); }, {c3, lin.weight, lin.bias});

  AttentionBlock blk = AttentionBlock::create(8, 2, 12, 0.0, rng);
  NamedParameters blk_params;
  blk.collect("block", blk_params);
  Tensor seq_q = param({2, 3, 8}, rng), seq_k = param({2, 5, 8}, rng);
  auto with = [](std::vector<Tensor> xs, const NamedParameters& ps) {
    for (const auto& [n, t] : ps) xs.push_back(t);
    return xs;
  };
  run("self_attention", [&] {
    Rng r(1);
    return self_attention(seq_q, blk, r, false).output;
  }, with({seq_q}, blk_params));
  run("cross_attention", [&] {
    Rng r(1);
    return cross_attention(seq_q, seq_k, blk, r, false).output;
  }, with({seq_q, seq_k}, blk_params));

  PatchEmbedding pe = PatchEmbedding::create(2, 8, 8, 4, 6, rng);
  NamedParameters pe_params;
  pe.collect("embed", pe_params);
  Tensor images = param({2, 2, 8, 8}, rng);
  run("patch_embed", [&] { return patch_embed(images, pe); }, with({images}, pe_params));

  MlpHead head = MlpHead::create({6, 5, 2}, 0.3, rng);
  NamedParameters head_params;
  head.collect("head", head_params);
  Tensor z = param({3, 6}, rng);
  const std::uint64_t head_seed = rng.next_u64();
  run("mlp_head", [&] {
    Rng r(head_seed);
    return mlp_head_forward(z, head, r, true);
  }, with({z}, head_params));

  // loss terms
  Tensor vote_logits = param({4, 3}, rng);
  Tensor votes = sigmoid(vote_logits);
  Tensor y_vote({3}, {0.0, 2.0 / 3.0, 1.0});
  Tensor sigma2({3}, {0.0, 2.0 / 9.0, 0.25});
  run("loss_vote", [&] { return loss_vote(y_vote, sigmoid(vote_logits)); }, {vote_logits});
  run("loss_reg", [&] { return loss_reg(sigmoid(vote_logits), sigma2, {3, 2, 4}); }, {vote_logits});
  Tensor age_pred = param({3}, rng), age_y = param({3}, rng).detach();
  run("loss_age", [&] { return loss_age(age_y, age_pred); }, {age_pred});
  Tensor sex_logits = param({3, 2}, rng);
  run("loss_sex", [&] { return loss_sex({0, 1, 1}, sex_logits); }, {sex_logits});
  run("loss_weight_decay", [&] { return loss_weight_decay(head_params); }, tensors_of(head_params));

  // full objective on a small binocular model
  VVitConfig cfg;
  cfg.model_dim = 8;
  cfg.num_heads = 2;
  cfg.ffn_dim = 12;
  cfg.head_hidden = 6;
  cfg.encoder_depth = 1;
  cfg.image_height = 8;
  cfg.image_width = 8;
  cfg.patch_size = 4;
  cfg.cross_blocks = 2;
  cfg.votes = 4;
  cfg.lambda_wd = 1e-2;
  const VVitModel model = VVitModel::create(cfg, rng.next_u64());
  Tensor target = Tensor::normal({2, 1, 8, 8}, 1.0, rng);
  Tensor fellow = Tensor::normal({2, 1, 8, 8}, 1.0, rng);
  std::vector<LossTargets> targets = {{2.0 / 3.0, 2.0 / 9.0, 3, 0.5, 1}, {1.0, 0.0, 4, -1.2, 0}};
  const NamedParameters params = model.parameters();
  const std::uint64_t fwd_seed = rng.next_u64();
  auto objective = [&] {
    Rng r(fwd_seed);
    ModelOutput out = model.forward(target, &fellow, r, true);
    return loss_total(targets, out, params, cfg).total;
  };
  checks.push_back({"objective", check_parameter_gradients(objective, params, 1e-6, 2)});
  return checks;
}

}  // namespace vvit::testing
