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

#include "vvit/losses.hpp"

#include <string>

#include "vvit/error.hpp"

namespace vvit {

namespace {

void check_soft_label(double y) {
  if (!(y >= 0.0 && y <= 1.0)) throw LabelError("y_vote must lie in [0, 1], got " + std::to_string(y));
}

Tensor column(const Tensor& votes) {
  if (votes.rank() != 2) throw ShapeError("votes must be [n, B], got " + to_string(votes.shape()));
  return votes;
}

}  // namespace

Tensor loss_vote(const Tensor& y_vote, const Tensor& votes) {
  column(votes);
  if (y_vote.rank() != 1 || y_vote.dim(0) != votes.dim(1)) {
    throw ShapeError("loss_vote: labels " + to_string(y_vote.shape()) + " do not match votes " +
                     to_string(votes.shape()));
  }
  for (double y : y_vote.values()) check_soft_label(y);
  return mean(square(votes - y_vote), 0);
}

Tensor loss_age(const Tensor& y_age, const Tensor& pred) {
  if (y_age.shape() != pred.shape()) {
    throw ShapeError("loss_age: target " + to_string(y_age.shape()) + " vs prediction " + to_string(pred.shape()));
  }
  return square(pred - y_age);
}

Tensor loss_sex(const std::vector<int>& y_sex, const Tensor& logits) {
  if (logits.rank() != 2 || logits.dim(1) != 2 || logits.dim(0) != y_sex.size()) {
    throw ShapeError("loss_sex: logits " + to_string(logits.shape()) + " for " + std::to_string(y_sex.size()) +
                     " labels");
  }
  std::vector<double> onehot(2 * y_sex.size(), 0.0);
  for (std::size_t i = 0; i < y_sex.size(); ++i) {
    if (y_sex[i] != 0 && y_sex[i] != 1) throw LabelError("sex class must be 0 or 1, got " + std::to_string(y_sex[i]));
    onehot[2 * i + static_cast<std::size_t>(y_sex[i])] = 1.0;
  }
  const Tensor picked = sum(log_softmax(logits, 1) * Tensor(logits.shape(), std::move(onehot)), 1);
  return neg(picked);
}

Tensor loss_reg(const Tensor& votes, const Tensor& sigma2_vote, const std::vector<std::size_t>& rater_counts) {
  column(votes);
  const std::size_t b = votes.dim(1);
  if (sigma2_vote.rank() != 1 || sigma2_vote.dim(0) != b || rater_counts.size() != b) {
    throw ShapeError("loss_reg: targets do not match votes " + to_string(votes.shape()));
  }
  for (double s : sigma2_vote.values()) {
    if (!(s >= 0.0)) throw LabelError("sigma2_vote must be non-negative");
  }
  std::vector<double> gate(b);
  for (std::size_t i = 0; i < b; ++i) gate[i] = rater_counts[i] >= kMinRatersForVarianceTarget ? 1.0 : 0.0;
  const Tensor centred = votes - mean(votes, 0);
  const Tensor variance = mean(square(centred), 0);
  return square(variance - sigma2_vote) * Tensor({b}, std::move(gate));
}

Tensor loss_weight_decay(const NamedParameters& params) {
  if (params.empty()) return Tensor::scalar(0.0);
  std::vector<Tensor> parts;
  parts.reserve(params.size());
  for (const auto& [name, p] : params) parts.push_back(reshape(sum(square(p)), {1}));
  return sum(concat(parts, 0));
}

double loss_vote(double y_vote, const VoteBundle& bundle) {
  const std::size_t n = bundle.votes.size();
  return loss_vote(Tensor({1}, {y_vote}), Tensor({n, 1}, bundle.votes)).item();
}

double loss_age(double y_age, double pred) { return loss_age(Tensor({1}, {y_age}), Tensor({1}, {pred})).item(); }

double loss_sex(int y_sex, double logit0, double logit1) {
  return loss_sex(std::vector<int>{y_sex}, Tensor({1, 2}, {logit0, logit1})).item();
}

double loss_reg(const VoteBundle& bundle, double sigma2_vote, std::size_t rater_count) {
  const std::size_t n = bundle.votes.size();
  return loss_reg(Tensor({n, 1}, bundle.votes), Tensor({1}, {sigma2_vote}), {rater_count}).item();
}

LossResult loss_total(std::span<const LossTargets> targets, const ModelOutput& output,
                      const NamedParameters& params, const VVitConfig& config) {
  const std::size_t b = targets.size();
  if (b == 0 || output.batch_size() != b) throw ShapeError("loss_total: targets do not match model output");
  std::vector<double> y(b), s2(b), age(b);
  std::vector<std::size_t> raters(b);
  std::vector<int> sex(b);
  for (std::size_t i = 0; i < b; ++i) {
    y[i] = targets[i].y_vote;
    s2[i] = targets[i].sigma2_vote;
    raters[i] = targets[i].rater_count;
    age[i] = targets[i].age_standardized;
    sex[i] = targets[i].sex;
  }

  LossResult r;
  const Tensor l_vote = loss_vote(Tensor({b}, y), output.votes);
  Tensor per_sample = l_vote;
  r.breakdown.l_vote = mean(l_vote).item();

  if (config.use_metadata) {
    if (!output.age_pred.defined() || !output.sex_logits.defined()) {
      throw InputError("loss_total: metadata heads missing from model output");
    }
    const Tensor l_age = loss_age(Tensor({b}, age), output.age_pred);
    const Tensor l_sex = loss_sex(sex, output.sex_logits);
    per_sample = per_sample + config.lambda_age * l_age + config.lambda_sex * l_sex;
    r.breakdown.l_age = mean(l_age).item();
    r.breakdown.l_sex = mean(l_sex).item();
  }
  if (config.use_voting) {
    const Tensor l_reg = loss_reg(output.votes, Tensor({b}, s2), raters);
    per_sample = per_sample + config.lambda_reg * l_reg;
    r.breakdown.l_reg = mean(l_reg).item();
  }
  const Tensor l_wd = loss_weight_decay(params);
  r.breakdown.l_wd = l_wd.item();
  r.total = mean(per_sample) + config.lambda_wd * l_wd;
  r.breakdown.total = r.total.item();
  return r;
}

}  // namespace vvit
