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
#include <map>
#include <span>
#include <string>
#include <vector>

#include "vvit/kv_config.hpp"
#include "vvit/tensor.hpp"

namespace vvit {

/// Where the bright disc was drawn, in pixel coordinates (x = column).
struct DiscGeometry {
  double cx = 0.0;
  double cy = 0.0;
  double radius = 0.0;

  bool operator==(const DiscGeometry&) const = default;
};

/// One patient: two eye images, metadata and the rater panel.
struct BinocularSample {
  std::string id;
  std::vector<double> target_img;  // C*H*W, row-major, values in [0, 1]
  std::vector<double> fellow_img;
  double age_years = 0.0;
  int sex = 0;
  std::vector<int> rater_votes;
  double y_vote = 0.0;       // mean of rater_votes
  double sigma2_vote = 0.0;  // population variance of rater_votes
  double latent_severity = 0.0;
  double fellow_severity = 0.0;
  DiscGeometry target_disc;
  DiscGeometry fellow_disc;

  int hard_label() const;
  std::size_t rater_count() const { return rater_votes.size(); }
  bool operator==(const BinocularSample&) const = default;
};

/// Recomputes y_vote and sigma2_vote from the votes.
void set_vote_statistics(BinocularSample& sample);

struct ImageShape {
  std::size_t channels = 1;
  std::size_t height = 32;
  std::size_t width = 32;

  std::size_t numel() const { return channels * height * width; }
  bool operator==(const ImageShape&) const = default;
};

struct Dataset {
  ImageShape image_shape;
  std::vector<BinocularSample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  /// Position of the sample with this id; IndexError when absent.
  std::size_t index_of(const std::string& id) const;
  Dataset subset(std::span<const std::size_t> indices) const;
  bool operator==(const Dataset&) const = default;
};

struct GeneratorConfig {
  std::size_t n_samples = 2400;
  std::size_t image_channels = 1;
  std::size_t image_height = 32;
  std::size_t image_width = 32;
  double mean_raters = 3.0;
  double rho = 0.6;          // target/fellow correlation of the latent liability
  double age_effect = 0.5;   // correlation of the liability with standardised age
  double rater_noise = 0.1;  // temperature of each rater's vote probability
  double texture_amplitude = 0.06;
  double pixel_noise = 0.03;
  std::uint64_t seed = 0;

  void validate() const;
  KeyValues to_key_values() const;
  static GeneratorConfig from_key_values(const KeyValues& kv, const std::string& source);
};

Dataset generate_dataset(const GeneratorConfig& config);

/// Index lists into a dataset.
struct Splits {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Stratified by hard label: each class is shuffled with `seed` and cut at
/// round(frac * class size). The test split takes the remainder.
Splits split(const Dataset& dataset, double train_frac, double val_frac, std::uint64_t seed);

/// JSON lines: a header object, then one record per sample.
void write_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& path);
std::string dataset_to_jsonl(const Dataset& dataset);
Dataset dataset_from_jsonl(const std::string& text, const std::string& source);

struct DatasetSummary {
  std::size_t count = 0;
  std::size_t positives = 0;
  double positive_rate = 0.0;
  double disagreement_rate = 0.0;  // fraction with 0 < y_vote < 1
  std::map<std::size_t, std::size_t> rater_histogram;
};

DatasetSummary summarize(const Dataset& dataset);
std::string format_summary(const DatasetSummary& summary);

/// [B, C, H, W] stack of the chosen eye for the given samples.
Tensor stack_images(const Dataset& dataset, std::span<const std::size_t> indices, bool fellow);

/// Split manifest: the sample ids in each split.
std::string splits_to_json(const Dataset& dataset, const Splits& splits);
Splits splits_from_json(const Dataset& dataset, const std::string& text, const std::string& source);

}  // namespace vvit
