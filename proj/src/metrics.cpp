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

#include "vvit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "vvit/error.hpp"
#include "vvit/kv_config.hpp"

namespace vvit {

namespace {

void check_records(std::span<const EvalRecord> records, const char* metric) {
  if (records.empty()) throw InputError(std::string(metric) + ": no records");
  for (const auto& r : records) {
    if (!(r.prob >= 0.0 && r.prob <= 1.0)) {
      throw InputError(std::string(metric) + ": probability outside [0, 1]: " + std::to_string(r.prob));
    }
    if (r.hard_label != 0 && r.hard_label != 1) throw LabelError(std::string(metric) + ": hard label must be 0 or 1");
  }
}

struct ClassCounts {
  std::size_t pos = 0, neg = 0;
};

ClassCounts class_counts(std::span<const EvalRecord> records, const char* metric) {
  ClassCounts c;
  for (const auto& r : records) (r.hard_label ? c.pos : c.neg)++;
  if (c.pos == 0 || c.neg == 0) {
    throw UndefinedMetricError(std::string(metric) + " needs both classes, got " + std::to_string(c.pos) +
                               " positive and " + std::to_string(c.neg) + " negative records");
  }
  return c;
}

struct BinStats {
  double prob_sum = 0.0;
  double pos_sum = 0.0;
  std::size_t count = 0;
};

std::vector<BinStats> bin_stats(std::span<const EvalRecord> records, std::size_t num_bins) {
  std::vector<BinStats> bins(num_bins);
  for (const auto& r : records) {
    auto& b = bins[calibration_bin(r.prob, num_bins)];
    b.prob_sum += r.prob;
    b.pos_sum += r.hard_label;
    ++b.count;
  }
  return bins;
}

std::string csv_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return format_double(v);
}

}  // namespace

int hard_label_from_soft(double soft_label) { return soft_label >= 0.5 ? 1 : 0; }

std::size_t calibration_bin(double prob, std::size_t num_bins) {
  if (num_bins == 0) throw ConfigError("number of calibration bins must be >= 1");
  const double scaled = std::ceil(prob * static_cast<double>(num_bins));
  std::size_t b = scaled <= 1.0 ? 0 : std::min(num_bins - 1, static_cast<std::size_t>(scaled) - 1);
  // Settle rounding at the edges against the exact boundary values b / B.
  const double nb = static_cast<double>(num_bins);
  while (b > 0 && prob <= static_cast<double>(b) / nb) --b;
  while (b + 1 < num_bins && prob > static_cast<double>(b + 1) / nb) ++b;
  return b;
}

double ece(std::span<const EvalRecord> records, std::size_t num_bins) {
  check_records(records, "ece");
  const auto bins = bin_stats(records, num_bins);
  const double n = static_cast<double>(records.size());
  double total = 0.0;
  for (const auto& b : bins) {
    if (b.count == 0) continue;
    const double c = static_cast<double>(b.count);
    total += (c / n) * std::abs(b.prob_sum / c - b.pos_sum / c);
  }
  return total;
}

double brier(std::span<const EvalRecord> records) {
  check_records(records, "brier");
  double total = 0.0;
  for (const auto& r : records) {
    const double d = r.prob - r.hard_label;
    total += d * d;
  }
  return total / static_cast<double>(records.size());
}

double auroc(std::span<const EvalRecord> records) {
  check_records(records, "auroc");
  const ClassCounts c = class_counts(records, "auroc");
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return records[a].prob < records[b].prob; });
  // Sum of (1-based, tie-averaged) ranks of the positives.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::size_t pos_in_group = 0;
    while (j < order.size() && records[order[j]].prob == records[order[i]].prob) {
      pos_in_group += records[order[j]].hard_label;
      ++j;
    }
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    rank_sum += avg_rank * static_cast<double>(pos_in_group);
    i = j;
  }
  const double p = static_cast<double>(c.pos), q = static_cast<double>(c.neg);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

ClassificationMetrics classification_metrics(std::span<const EvalRecord> records, double threshold) {
  check_records(records, "classification metrics");
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (const auto& r : records) {
    const bool predicted = r.prob >= threshold;
    if (predicted && r.hard_label) ++tp;
    else if (predicted) ++fp;
    else if (r.hard_label) ++fn;
    else ++tn;
  }
  ClassificationMetrics m;
  const double recall_den = static_cast<double>(tp + fn);
  const double precision_den = static_cast<double>(tp + fp);
  double precision = 0.0;
  if (recall_den > 0) m.recall = static_cast<double>(tp) / recall_den;
  else m.zero_denominator = true;
  if (precision_den > 0) precision = static_cast<double>(tp) / precision_den;
  else m.zero_denominator = true;
  if (precision + m.recall > 0) m.f1 = 2.0 * precision * m.recall / (precision + m.recall);
  else m.zero_denominator = true;
  m.accuracy = static_cast<double>(tp + tn) / static_cast<double>(records.size());
  return m;
}

std::vector<ReliabilityPoint> reliability_curve(std::span<const EvalRecord> records, std::size_t num_bins) {
  check_records(records, "reliability curve");
  const auto bins = bin_stats(records, num_bins);
  std::vector<ReliabilityPoint> points;
  for (std::size_t i = 0; i < bins.size(); ++i) {
    const auto& b = bins[i];
    if (b.count == 0) continue;
    const double c = static_cast<double>(b.count);
    points.push_back({(static_cast<double>(i) + 0.5) / static_cast<double>(num_bins), b.prob_sum / c,
                      b.pos_sum / c, b.count});
  }
  return points;
}

std::vector<RocPoint> roc_curve(std::span<const EvalRecord> records) {
  check_records(records, "roc curve");
  const ClassCounts c = class_counts(records, "roc curve");
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return records[a].prob > records[b].prob; });
  std::vector<RocPoint> points;
  points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double t = records[order[i]].prob;
    while (i < order.size() && records[order[i]].prob == t) {
      (records[order[i]].hard_label ? tp : fp)++;
      ++i;
    }
    points.push_back({static_cast<double>(fp) / static_cast<double>(c.neg),
                      static_cast<double>(tp) / static_cast<double>(c.pos), t});
  }
  return points;
}

double trapezoid_area(std::span<const RocPoint> points) {
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    area += (points[i].fpr - points[i - 1].fpr) * (points[i].tpr + points[i - 1].tpr) / 2.0;
  }
  return area;
}

CalibrationReport calibration_report(std::span<const EvalRecord> records, std::size_t num_bins, double threshold) {
  CalibrationReport r;
  r.count = records.size();
  r.num_bins = num_bins;
  r.threshold = threshold;
  r.ece = ece(records, num_bins);
  r.brier = brier(records);
  r.auroc = auroc(records);
  const auto cls = classification_metrics(records, threshold);
  r.recall = cls.recall;
  r.f1 = cls.f1;
  r.accuracy = cls.accuracy;
  r.classification_warning = cls.zero_denominator;
  r.reliability_points = reliability_curve(records, num_bins);
  r.roc_points = roc_curve(records);
  return r;
}

nlohmann::ordered_json report_json(const CalibrationReport& r) {
  nlohmann::ordered_json j;
  j["count"] = r.count;
  j["bins"] = r.num_bins;
  j["threshold"] = r.threshold;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  j["brier"] = r.brier;
  j["auroc"] = r.auroc;
  j["ece"] = r.ece;
  j["accuracy"] = r.accuracy;
  j["classification_warning"] = r.classification_warning;
  return j;
}

std::string reliability_csv(const CalibrationReport& r) {
  std::string out = "bin_center,mean_prob,empirical_freq,count\n";
  for (const auto& p : r.reliability_points) {
    out += csv_number(p.bin_center) + "," + csv_number(p.mean_prob) + "," + csv_number(p.empirical_freq) + "," +
           std::to_string(p.count) + "\n";
  }
  return out;
}

std::string roc_csv(const CalibrationReport& r) {
  std::string out = "fpr,tpr,threshold\n";
  for (const auto& p : r.roc_points) {
    out += csv_number(p.fpr) + "," + csv_number(p.tpr) + "," + csv_number(p.threshold) + "\n";
  }
  return out;
}

void write_report(const std::filesystem::path& dir, const CalibrationReport& report) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream os(dir / name, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write " + (dir / name).string());
    os << text;
  };
  write("metrics.json", report_json(report).dump(2) + "\n");
  write("reliability.csv", reliability_csv(report));
  write("roc.csv", roc_csv(report));
}

}  // namespace vvit
