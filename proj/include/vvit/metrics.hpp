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
#include <filesystem>
#include <nlohmann/json.hpp>
#include <span>
#include <vector>

namespace vvit {

/// Soft labels are binarised at 0.5; an exact 0.5 counts as positive.
int hard_label_from_soft(double soft_label);

struct EvalRecord {
  double prob = 0.0;
  double soft_label = 0.0;
  int hard_label = 0;

  static EvalRecord from_soft(double prob, double soft_label) {
    return EvalRecord{prob, soft_label, hard_label_from_soft(soft_label)};
  }
};

struct ReliabilityPoint {
  double bin_center = 0.0;
  double mean_prob = 0.0;
  double empirical_freq = 0.0;
  std::size_t count = 0;
};

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // +inf for the (0, 0) anchor
};

struct ClassificationMetrics {
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  bool zero_denominator = false;  // recall, precision or F1 fell back to 0
};

struct CalibrationReport {
  std::size_t count = 0;
  std::size_t num_bins = 10;
  double threshold = 0.5;
  double ece = 0.0;
  double brier = 0.0;
  double auroc = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  bool classification_warning = false;
  std::vector<ReliabilityPoint> reliability_points;
  std::vector<RocPoint> roc_points;
};

/// Equal-width, right-closed bins over [0, 1]: bin b holds (b/B, (b+1)/B],
/// and prob == 0 falls in bin 0.
std::size_t calibration_bin(double prob, std::size_t num_bins);

double ece(std::span<const EvalRecord> records, std::size_t num_bins = 10);
double brier(std::span<const EvalRecord> records);
/// Mann-Whitney AUROC with ties counted one half.
double auroc(std::span<const EvalRecord> records);
ClassificationMetrics classification_metrics(std::span<const EvalRecord> records, double threshold = 0.5);
/// One point per non-empty bin, in bin order.
std::vector<ReliabilityPoint> reliability_curve(std::span<const EvalRecord> records, std::size_t num_bins = 10);
/// One point per distinct probability (descending thresholds), plus the
/// (0, 0) anchor; the final point is (1, 1).
std::vector<RocPoint> roc_curve(std::span<const EvalRecord> records);
double trapezoid_area(std::span<const RocPoint> points);

CalibrationReport calibration_report(std::span<const EvalRecord> records, std::size_t num_bins = 10,
                                     double threshold = 0.5);

nlohmann::ordered_json report_json(const CalibrationReport& report);
std::string reliability_csv(const CalibrationReport& report);
std::string roc_csv(const CalibrationReport& report);
/// metrics.json, reliability.csv and roc.csv under `dir`.
void write_report(const std::filesystem::path& dir, const CalibrationReport& report);

}  // namespace vvit
