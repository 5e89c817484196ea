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

#include <span>
#include <vector>

#include "vvit/model.hpp"

namespace vvit {

struct LossBreakdown {
  double l_vote = 0.0;
  double l_age = 0.0;
  double l_sex = 0.0;
  double l_reg = 0.0;
  double l_wd = 0.0;
  double total = 0.0;
};

/// Per-sample supervision for the objective.
struct LossTargets {
  double y_vote = 0.0;
  double sigma2_vote = 0.0;
  std::size_t rater_count = 0;
  double age_standardized = 0.0;
  int sex = 0;
};

/// Only panels of at least this many raters supervise the vote variance.
inline constexpr std::size_t kMinRatersForVarianceTarget = 3;

// Tensor forms: one value per sample, shape [B].

/// votes: [n, B]; mean over votes of (y - vote)^2.
Tensor loss_vote(const Tensor& y_vote, const Tensor& votes);
Tensor loss_age(const Tensor& y_age, const Tensor& pred);
/// logits: [B, 2]; -log softmax(logits)[y].
Tensor loss_sex(const std::vector<int>& y_sex, const Tensor& logits);
/// (Var(votes) - sigma2)^2 with population variance over the n votes; exactly
/// zero (and zero gradient) where rater_count < 3.
Tensor loss_reg(const Tensor& votes, const Tensor& sigma2_vote, const std::vector<std::size_t>& rater_counts);
/// Sum of squares over every parameter.
Tensor loss_weight_decay(const NamedParameters& params);

// Scalar forms for a single sample.
double loss_vote(double y_vote, const VoteBundle& bundle);
double loss_age(double y_age, double pred);
double loss_sex(int y_sex, double logit0, double logit1);
double loss_reg(const VoteBundle& bundle, double sigma2_vote, std::size_t rater_count);

struct LossResult {
  Tensor total;  // scalar: mean over samples of the per-sample objective
  LossBreakdown breakdown;
};

/// Full objective. The metadata terms are zero when use_metadata is off and
/// the variance term is zero without voting (a single vote has no spread).
LossResult loss_total(std::span<const LossTargets> targets, const ModelOutput& output,
                      const NamedParameters& params, const VVitConfig& config);

}  // namespace vvit
