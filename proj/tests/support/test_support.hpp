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
#include <functional>
#include <string>
#include <vector>

#include "vvit/data.hpp"
#include "vvit/metrics.hpp"
#include "vvit/model.hpp"
#include "vvit/rng.hpp"
#include "vvit/tensor.hpp"

namespace vvit::testing {

/// Fresh, empty directory under the system temp dir.
std::filesystem::path make_temp_dir(const std::string& tag);
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& text);

struct CommandResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};
/// Runs argv[0] with the remaining arguments through /bin/sh, capturing
/// stdout and stderr. `env` entries ("NAME=value") are prepended.
CommandResult run_command(const std::vector<std::string>& argv, const std::vector<std::string>& env = {});

// ---------------------------------------------------------------------------
// Finite differences

/// |a - n| / max(|a| + |n|, floor). The floor keeps coordinates whose true
/// gradient is ~0 from turning round-off into large relative errors.
double relative_error(double analytic, double numeric, double floor = 1e-3);

struct GradCheckResult {
  double worst = 0.0;
  std::string where;
  std::size_t checked = 0;
};

/// Builds loss = sum(f() * W) for a fixed random W, backpropagates, and
/// compares every input's gradient against central differences (at most
/// `max_coords` coordinates per input, evenly spread).
GradCheckResult check_gradients(const std::function<Tensor()>& f, const std::vector<Tensor>& inputs,
                                std::uint64_t seed, double step = 1e-6, std::size_t max_coords = 64);

/// Same comparison for a scalar-valued function of named parameters.
GradCheckResult check_parameter_gradients(const std::function<Tensor()>& loss, const NamedParameters& params,
                                          double step = 1e-6, std::size_t max_coords = 4);

// ---------------------------------------------------------------------------
// Brute-force metric oracles, written without sharing code with the library.

double oracle_ece(const std::vector<EvalRecord>& records, std::size_t num_bins);
double oracle_brier(const std::vector<EvalRecord>& records);
/// Exhaustive count over every (positive, negative) pair, ties one half.
double oracle_auroc(const std::vector<EvalRecord>& records);
/// Threshold sweep: one point per distinct probability, high to low.
std::vector<RocPoint> oracle_roc(const std::vector<EvalRecord>& records);

/// Records with both classes present; probabilities on a coarse grid when
/// `with_ties` so equal scores actually occur.
std::vector<EvalRecord> random_records(Rng& rng, std::size_t n, bool with_ties);

// ---------------------------------------------------------------------------
// Fixtures

/// Small model for fast tests: 16x16 single-channel images, d = 16.
VVitConfig tiny_model_config();
GeneratorConfig tiny_generator_config(std::size_t n, std::uint64_t seed = 0);

/// 8x8 images: positives are uniformly 0.5, negatives all zero, and every
/// rater agrees with the label.
Dataset make_separable_dataset(std::size_t positives, std::size_t negatives);
/// Hand-set single-eye model that outputs exactly 1 on the bright images of
/// make_separable_dataset and exactly 0 on the dark ones.
VVitModel make_oracle_model();

}  // namespace vvit::testing

namespace vvit::testing {

/// One finite-difference check in the gradient suite.
struct OpCheck {
  std::string name;
  GradCheckResult result;
};

/// Checks every differentiable tensor op, the nn building blocks, each loss
/// term and the full objective on a small model, all drawn from `seed`.
std::vector<OpCheck> gradient_suite(std::uint64_t seed);

}  // namespace vvit::testing

namespace vvit::testing {

/// Trains a stand-alone glaucoma head on one fixed representation with only
/// the variance term active, against a 5-rater panel with one positive vote
/// (sigma^2 = 0.16).
struct RegularizerRun {
  double target_variance = 0.0;
  double initial_gap = 0.0;  // |E[Var(votes)] - sigma^2| before training
  double final_gap = 0.0;
  std::size_t first_step_below = 0;  // first step with gap < 10% of initial; 0 if never
  /// Largest |gradient| any head parameter received from a 2-rater sample.
  double two_rater_max_grad = 0.0;
};
RegularizerRun variance_regularizer_run(std::uint64_t seed, std::size_t steps = 200);

}  // namespace vvit::testing
