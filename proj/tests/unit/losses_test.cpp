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

#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"
#include "vvit/error.hpp"
#include "vvit/losses.hpp"

namespace vvit {
namespace {

VoteBundle bundle(std::vector<double> v) { return VoteBundle::from_votes(std::move(v)); }

TEST(LossVoteTest, Examples) {
  EXPECT_EQ(loss_vote(0.25, bundle({0.25, 0.25})), 0.0);
  EXPECT_EQ(loss_vote(1.0, bundle({0.0, 0.0})), 1.0);
  EXPECT_NEAR(loss_vote(0.5, bundle({0.4, 0.6, 0.5})), 0.02 / 3.0, 1e-15);
}

TEST(LossVoteTest, TensorFormMatchesScalarForm) {
  Tensor votes({3, 2}, {0.4, 0.1, 0.6, 0.2, 0.5, 0.3});
  Tensor out = loss_vote(Tensor({2}, {0.5, 0.0}), votes);
  EXPECT_NEAR(out.values()[0], loss_vote(0.5, bundle({0.4, 0.6, 0.5})), 1e-15);
  EXPECT_NEAR(out.values()[1], loss_vote(0.0, bundle({0.1, 0.2, 0.3})), 1e-15);
}

TEST(LossAgeTest, Examples) {
  EXPECT_EQ(loss_age(0.3, 0.3), 0.0);
  EXPECT_EQ(loss_age(1.0, -1.0), 4.0);
  Tensor pred({1}, {-1.0}, true);
  backward(sum(loss_age(Tensor({1}, {1.0}), pred)));
  EXPECT_EQ(pred.grad()[0], 2.0 * (-1.0 - 1.0));
}

TEST(LossSexTest, Examples) {
  EXPECT_NEAR(loss_sex(0, 0.0, 0.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(loss_sex(1, 0.0, 0.0), std::log(2.0), 1e-15);
  // log(1 + e^-20) evaluated directly.
  EXPECT_NEAR(loss_sex(0, 10.0, -10.0), std::log1p(std::exp(-20.0)), 1e-20);
  EXPECT_NEAR(loss_sex(0, 10.0, -10.0), 2.06e-9, 0.01e-9);
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    EXPECT_GE(loss_sex(static_cast<int>(rng.index(2)), rng.normal(0, 50), rng.normal(0, 50)), 0.0);
  }
  EXPECT_THROW(loss_sex(2, 0.0, 0.0), LabelError);
}

TEST(LossRegTest, Examples) {
  EXPECT_EQ(loss_reg(bundle({0.1, 0.9}), 0.0, 2), 0.0);
  const VoteBundle b = bundle({0.25, 0.75});
  EXPECT_EQ(loss_reg(b, b.variance, 3), 0.0);
  // Var = 0.04 from votes 0.3 and 0.7.
  EXPECT_NEAR(loss_reg(bundle({0.3, 0.7}), 0.01, 3), 0.0009, 1e-15);
}

TEST(LossRegTest, TwoRaterSamplesGetExactlyZeroGradient) {
  Tensor logits({4, 2}, {0.1, -2.0, 1.5, 0.3, -0.7, 2.2, 0.4, -1.1}, true);
  Tensor l = loss_reg(sigmoid(logits), Tensor({2}, {0.0, 0.25}), {2, 5});
  EXPECT_EQ(l.values()[0], 0.0);
  EXPECT_GT(l.values()[1], 0.0);
  backward(sum(l));
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(logits.grad()[k * 2 + 0], 0.0);
    EXPECT_NE(logits.grad()[k * 2 + 1], 0.0);
  }
}

TEST(WeightDecayTest, Examples) {
  EXPECT_EQ(loss_weight_decay({{"a", Tensor::zeros({3}, true)}}).item(), 0.0);
  EXPECT_EQ(loss_weight_decay({{"w", Tensor({2}, {3.0, 4.0}, true)}}).item(), 25.0);
  Tensor w({3}, {1.0, -2.0, 0.5}, true);
  backward(loss_weight_decay({{"w", w}}));
  EXPECT_EQ(w.grad()[0], 2.0);
  EXPECT_EQ(w.grad()[1], -4.0);
  EXPECT_EQ(w.grad()[2], 1.0);
}

struct Fixture {
  VVitConfig config;
  VVitModel model;
  ModelOutput output;
  std::vector<LossTargets> targets;

  explicit Fixture(VVitConfig c) : config(c), model(VVitModel::create(c, 3)) {
    Rng rng(9);
    const Tensor t = Tensor::normal({2, 1, c.image_height, c.image_width}, 0.5, rng);
    const Tensor f = Tensor::normal({2, 1, c.image_height, c.image_width}, 0.5, rng);
    output = model.forward(t, c.use_binocular ? &f : nullptr, rng, true);
    targets = {{2.0 / 3.0, 2.0 / 9.0, 3, 0.4, 1}, {0.5, 0.25, 2, -1.5, 0}};
  }
};

TEST(LossTotalTest, MatchesHandSummedComponents) {
  Fixture fx(testing::tiny_model_config());
  const VVitConfig& c = fx.config;
  LossResult r = loss_total(fx.targets, fx.output, fx.model.parameters(), c);
  double wd = 0.0;
  for (const auto& [name, p] : fx.model.parameters()) {
    for (double v : p.values()) wd += v * v;
  }
  double per_sample = 0.0;
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& t = fx.targets[i];
    const auto& b = fx.output.bundles[i];
    per_sample += loss_vote(t.y_vote, b) + c.lambda_age * loss_age(t.age_standardized, fx.output.age_pred.values()[i]) +
                  c.lambda_sex * loss_sex(t.sex, fx.output.sex_logits.at({i, 0}), fx.output.sex_logits.at({i, 1})) +
                  c.lambda_reg * loss_reg(b, t.sigma2_vote, t.rater_count);
  }
  const double expected = per_sample / 2.0 + c.lambda_wd * wd;
  EXPECT_NEAR(r.total.item(), expected, 1e-12);
  EXPECT_NEAR(r.breakdown.total, expected, 1e-12);
  EXPECT_NEAR(r.breakdown.l_wd, wd, 1e-9);
  // The second sample has two raters and contributes nothing to l_reg.
  EXPECT_NEAR(r.breakdown.l_reg, loss_reg(fx.output.bundles[0], 2.0 / 9.0, 3) / 2.0, 1e-12);
}

TEST(LossTotalTest, AllWeightsZeroLeavesVoteLoss) {
  VVitConfig c = testing::tiny_model_config();
  c.lambda_age = c.lambda_sex = c.lambda_reg = c.lambda_wd = 0.0;
  Fixture fx(c);
  LossResult r = loss_total(fx.targets, fx.output, fx.model.parameters(), c);
  EXPECT_EQ(r.total.item(), r.breakdown.l_vote);
}

TEST(LossTotalTest, MetadataOffZeroesAuxiliaryTerms) {
  VVitConfig c = testing::tiny_model_config();
  c.use_metadata = false;
  Fixture fx(c);
  LossResult r = loss_total(fx.targets, fx.output, fx.model.parameters(), c);
  EXPECT_EQ(r.breakdown.l_age, 0.0);
  EXPECT_EQ(r.breakdown.l_sex, 0.0);
}

TEST(LossTotalTest, VotingOffZeroesVarianceTerm) {
  VVitConfig c = testing::tiny_model_config();
  c.use_voting = false;
  Fixture fx(c);
  EXPECT_EQ(loss_total(fx.targets, fx.output, fx.model.parameters(), c).breakdown.l_reg, 0.0);
}

TEST(LossTotalTest, BatchMismatchRejected) {
  Fixture fx(testing::tiny_model_config());
  std::vector<LossTargets> one(fx.targets.begin(), fx.targets.begin() + 1);
  EXPECT_THROW(loss_total(one, fx.output, fx.model.parameters(), fx.config), ShapeError);
}

}  // namespace
}  // namespace vvit
