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

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vvit/data.hpp"
#include "vvit/losses.hpp"
#include "vvit/metrics.hpp"
#include "vvit/model.hpp"

namespace vvit {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::string optimizer = "adam";  // adam | sgd
  std::uint64_t seed = 0;
  std::size_t eval_every = 1;
  std::string checkpoint_path;  // best-validation checkpoint; empty to skip
  double train_frac = 0.75;
  double val_frac = 1.0 / 12.0;
  std::uint64_t split_seed = 0;

  void validate() const;
  KeyValues to_key_values() const;
  static TrainConfig from_key_values(const KeyValues& kv, const std::string& source);
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  LossBreakdown train;    // batch means
  double val_brier = 0.0;
  bool evaluated = false;
};

struct TrainResult {
  VVitModel model;  // parameters from the best validation epoch
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val_brier = 0.0;
};

using ProgressCallback = std::function<void(const EpochLog&)>;

/// Per-sample supervision with age standardised by `scaler`.
LossTargets loss_targets(const BinocularSample& sample, const AgeScaler& scaler);
/// Mean and population standard deviation of age over the given samples.
AgeScaler fit_age_scaler(const Dataset& dataset, std::span<const std::size_t> indices);

/// Trains on splits.train and selects the epoch with the lowest validation
/// Brier score. Throws NumericError naming the epoch when the loss diverges.
TrainResult train(const VVitConfig& model_config, const TrainConfig& train_config, const Dataset& dataset,
                  const Splits& splits, const ProgressCallback& progress = {});

/// One probability per sample. Each sample's dropout masks come from
/// (seed, sample id), so they do not depend on which other samples are scored.
struct Prediction {
  std::vector<VoteBundle> bundles;
  std::vector<EvalRecord> records;
};
Prediction predict(const VVitModel& model, const Dataset& dataset, std::span<const std::size_t> indices,
                   std::uint64_t seed);
Prediction predict(const VVitModel& model, const Dataset& dataset, std::uint64_t seed);

/// Attention over `eye`'s patch grid for one sample (eval mode).
Tensor sample_attention_map(const VVitModel& model, const Dataset& dataset, std::size_t index, std::size_t block,
                            Eye eye);

/// Block index meaning "average the maps of every cross-attention block".
inline constexpr std::size_t kAllBlocks = static_cast<std::size_t>(-1);

/// Fraction of positive samples whose target-eye attention argmax cell has its
/// centre inside the planted disc.
struct LocalizationResult {
  std::size_t positives = 0;
  std::size_t hits = 0;
  double rate = 0.0;
};
LocalizationResult attention_localization(const VVitModel& model, const Dataset& dataset,
                                          std::span<const std::size_t> indices, std::size_t block);

std::string loss_log_csv(const std::vector<EpochLog>& log);

// ---------------------------------------------------------------------------
// Ablation

struct AblationTriple {
  bool use_binocular = true;
  bool use_voting = true;
  bool use_metadata = true;
  bool operator==(const AblationTriple&) const = default;
};

struct AblationSpec {
  std::vector<AblationTriple> triples;
  /// The four standard rows: (0,0,0), (1,0,0), (1,1,0), (1,1,1).
  static AblationSpec standard();
  void validate() const;
};

/// "0,0,0;1,0,0" style list.
AblationSpec parse_triples(const std::string& text);

struct MetricSummary {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation; 0 for a single seed
};

struct AblationRow {
  AblationTriple triple;
  std::vector<CalibrationReport> per_seed;
  MetricSummary recall, f1, brier, auroc, ece, accuracy;
};

struct AblationOptions {
  VVitConfig base_model;
  TrainConfig train;
  std::vector<std::uint64_t> seeds;
  std::size_t bins = 10;
  double threshold = 0.5;
  std::size_t jobs = 1;  // concurrent runs
};

/// What one (triple, seed) run produced; exposed for callers that need more
/// than the table (e.g. attention checks on the trained model).
struct AblationRun {
  AblationTriple triple;
  std::uint64_t seed = 0;
  CalibrationReport report;
  VVitModel model;
};
using RunCallback = std::function<void(const AblationRun&)>;

/// Trains every triple once per seed (seed drives init, shuffling and
/// dropout; the split is fixed by train.split_seed) and evaluates on the test
/// split.
std::vector<AblationRow> run_ablation(const AblationSpec& spec, const AblationOptions& options,
                                      const Dataset& dataset, const RunCallback& on_run = {});
std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace vvit
