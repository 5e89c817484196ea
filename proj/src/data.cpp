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

#include "vvit/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numbers>
#include <sstream>

#include "vvit/error.hpp"
#include "vvit/metrics.hpp"
#include "vvit/rng.hpp"

namespace vvit {

using nlohmann::ordered_json;

int BinocularSample::hard_label() const { return hard_label_from_soft(y_vote); }

void set_vote_statistics(BinocularSample& s) {
  if (s.rater_votes.empty()) throw LabelError("sample " + s.id + " has no rater votes");
  double total = 0.0;
  for (int v : s.rater_votes) total += v;
  const double k = static_cast<double>(s.rater_votes.size());
  s.y_vote = total / k;
  double sq = 0.0;
  for (int v : s.rater_votes) sq += (v - s.y_vote) * (v - s.y_vote);
  s.sigma2_vote = sq / k;
}

std::size_t Dataset::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].id == id) return i;
  }
  throw IndexError("no sample with id '" + id + "'");
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.image_shape = image_shape;
  out.samples.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= samples.size()) throw IndexError("sample index " + std::to_string(i) + " out of range");
    out.samples.push_back(samples[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Generator configuration

void GeneratorConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("generator config: " + msg); };
  if (image_channels == 0) fail("image_channels must be >= 1");
  if (image_height < 8 || image_width < 8) fail("images must be at least 8x8 pixels");
  if (!(mean_raters >= 1.0 && mean_raters <= 100.0)) fail("mean_raters must lie in [1, 100]");
  if (!(rho >= 0.0 && rho <= 1.0)) fail("rho must lie in [0, 1]");
  if (!(age_effect >= 0.0 && age_effect <= 1.0)) fail("age_effect must lie in [0, 1]");
  if (!(rater_noise >= 0.0 && std::isfinite(rater_noise))) fail("rater_noise must be finite and >= 0");
  if (!(texture_amplitude >= 0.0 && texture_amplitude <= 1.0)) fail("texture_amplitude must lie in [0, 1]");
  if (!(pixel_noise >= 0.0 && pixel_noise <= 1.0)) fail("pixel_noise must lie in [0, 1]");
}

KeyValues GeneratorConfig::to_key_values() const {
  return {
      {"n_samples", std::to_string(n_samples)},
      {"image_channels", std::to_string(image_channels)},
      {"image_height", std::to_string(image_height)},
      {"image_width", std::to_string(image_width)},
      {"mean_raters", format_double(mean_raters)},
      {"rho", format_double(rho)},
      {"age_effect", format_double(age_effect)},
      {"rater_noise", format_double(rater_noise)},
      {"texture_amplitude", format_double(texture_amplitude)},
      {"pixel_noise", format_double(pixel_noise)},
      {"seed", std::to_string(seed)},
  };
}

GeneratorConfig GeneratorConfig::from_key_values(const KeyValues& kv, const std::string& source) {
  GeneratorConfig c;
  KeyValueReader r(kv, source);
  r.read("n_samples", c.n_samples);
  r.read("image_channels", c.image_channels);
  r.read("image_height", c.image_height);
  r.read("image_width", c.image_width);
  r.read("mean_raters", c.mean_raters);
  r.read("rho", c.rho);
  r.read("age_effect", c.age_effect);
  r.read("rater_noise", c.rater_noise);
  r.read("texture_amplitude", c.texture_amplitude);
  r.read("pixel_noise", c.pixel_noise);
  std::size_t seed = c.seed;
  r.read("seed", seed);
  c.seed = seed;
  r.finish();
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Generation

namespace {

constexpr double kMeanAge = 60.0;
constexpr double kAgeSd = 10.0;
// Severity is a logistic function of a standard-normal liability; with this
// offset roughly one sample in six ends up with a positive majority vote.
constexpr double kSeverityOffset = -1.0;

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double rater_probability(double severity, double noise) {
  if (noise == 0.0) return severity > 0.5 ? 1.0 : (severity < 0.5 ? 0.0 : 0.5);
  return logistic((severity - 0.5) / noise);
}

struct EyeImage {
  std::vector<double> pixels;
  DiscGeometry disc;
};

// A dark, textured fundus-like background with a bright disc and a brighter
// central cup. The cup-to-disc ratio grows with severity; mean brightness
// drifts with age and sex so the metadata heads have a visual cue.
EyeImage render_eye(const GeneratorConfig& cfg, double severity, double age_z, int sex, Rng rng) {
  const std::size_t h = cfg.image_height, w = cfg.image_width, c = cfg.image_channels;
  const double m = static_cast<double>(std::min(h, w));
  EyeImage out;
  out.disc.cx = rng.uniform(0.34 * static_cast<double>(w), 0.66 * static_cast<double>(w));
  out.disc.cy = rng.uniform(0.34 * static_cast<double>(h), 0.66 * static_cast<double>(h));
  out.disc.radius = rng.uniform(0.19 * m, 0.25 * m);
  const double cup_ratio = std::clamp(0.15 + 0.7 * severity + rng.normal(0.0, 0.03), 0.1, 0.9);
  const double cup_radius = cup_ratio * out.disc.radius;

  struct Wave {
    double fx, fy, phase;
  };
  std::vector<Wave> waves(3);
  for (auto& wave : waves) {
    const double freq = rng.uniform(0.2, 0.8);
    const double angle = rng.uniform(0.0, std::numbers::pi);
    wave = {freq * std::cos(angle), freq * std::sin(angle), rng.uniform(0.0, 2.0 * std::numbers::pi)};
  }
  const double base = 0.18 + 0.04 * std::clamp(age_z, -3.0, 3.0) + (sex == 1 ? 0.02 : -0.02);
  const double half = m / 2.0;

  out.pixels.resize(c * h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
      double texture = 0.0;
      for (const auto& wave : waves) texture += std::sin(wave.fx * px + wave.fy * py + wave.phase);
      texture *= cfg.texture_amplitude / static_cast<double>(waves.size());
      const double rx = (px - static_cast<double>(w) / 2.0) / half, ry = (py - static_cast<double>(h) / 2.0) / half;
      const double vignette = -0.08 * (rx * rx + ry * ry);
      const double d = std::hypot(px - out.disc.cx, py - out.disc.cy);
      const double disc = std::clamp(out.disc.radius - d + 0.5, 0.0, 1.0);
      const double cup = std::clamp(cup_radius - d + 0.5, 0.0, 1.0);
      const double value = base + texture + vignette + 0.4 * disc + 0.35 * cup + rng.normal(0.0, cfg.pixel_noise);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double tinted = value * (1.0 - 0.15 * static_cast<double>(ch));
        // Two decimal places keep the JSON lines compact.
        out.pixels[(ch * h + y) * w + x] = std::round(std::clamp(tinted, 0.0, 1.0) * 100.0) / 100.0;
      }
    }
  }
  return out;
}

std::string sample_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "s%06zu", i);
  return buf;
}

}  // namespace

Dataset generate_dataset(const GeneratorConfig& config) {
  config.validate();
  Dataset ds;
  ds.image_shape = {config.image_channels, config.image_height, config.image_width};
  ds.samples.reserve(config.n_samples);
  const Rng root(config.seed);
  const double a = config.age_effect;
  for (std::size_t i = 0; i < config.n_samples; ++i) {
    Rng rng = root.derive(static_cast<std::uint64_t>(i));
    BinocularSample s;
    s.id = sample_id(i);
    s.age_years = std::clamp(rng.normal(kMeanAge, kAgeSd), 30.0, 90.0);
    s.sex = rng.bernoulli(0.5) ? 1 : 0;
    const double age_z = (s.age_years - kMeanAge) / kAgeSd;
    const double g_target = a * age_z + std::sqrt(1.0 - a * a) * rng.normal();
    const double g_fellow = config.rho * g_target + std::sqrt(1.0 - config.rho * config.rho) * rng.normal();
    s.latent_severity = logistic(kSeverityOffset + g_target);
    s.fellow_severity = logistic(kSeverityOffset + g_fellow);

    const std::size_t raters = 1 + static_cast<std::size_t>(rng.poisson(config.mean_raters - 1.0));
    const double p = rater_probability(s.latent_severity, config.rater_noise);
    s.rater_votes.resize(raters);
    for (int& v : s.rater_votes) v = rng.bernoulli(p) ? 1 : 0;
    set_vote_statistics(s);

    EyeImage target = render_eye(config, s.latent_severity, age_z, s.sex, rng.derive("target"));
    EyeImage fellow = render_eye(config, s.fellow_severity, age_z, s.sex, rng.derive("fellow"));
    s.target_img = std::move(target.pixels);
    s.target_disc = target.disc;
    s.fellow_img = std::move(fellow.pixels);
    s.fellow_disc = fellow.disc;
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Splits

Splits split(const Dataset& dataset, double train_frac, double val_frac, std::uint64_t seed) {
  if (!(train_frac >= 0.0 && val_frac >= 0.0 && train_frac + val_frac <= 1.0 + 1e-12)) {
    throw ConfigError("split fractions must be non-negative and sum to at most 1, got train=" +
                      format_double(train_frac) + " val=" + format_double(val_frac));
  }
  Splits out;
  const Rng root = Rng(seed).derive("split");
  for (int label = 0; label <= 1; ++label) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      if (dataset.samples[i].hard_label() == label) members.push_back(i);
    }
    Rng rng = root.derive(static_cast<std::uint64_t>(label));
    for (std::size_t i = members.size(); i > 1; --i) std::swap(members[i - 1], members[rng.index(i)]);
    const double n = static_cast<double>(members.size());
    const std::size_t n_train = std::min(members.size(), static_cast<std::size_t>(std::llround(train_frac * n)));
    const std::size_t n_val =
        std::min(members.size() - n_train, static_cast<std::size_t>(std::llround(val_frac * n)));
    out.train.insert(out.train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.val.insert(out.val.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train),
                   members.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    out.test.insert(out.test.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), members.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

// ---------------------------------------------------------------------------
// JSON lines

namespace {

constexpr const char* kFormat = "vvit-dataset";
constexpr int kVersion = 1;

ordered_json image_json(const std::vector<double>& pixels, const ImageShape& shape) {
  ordered_json img = ordered_json::array();
  for (std::size_t c = 0; c < shape.channels; ++c) {
    ordered_json plane = ordered_json::array();
    for (std::size_t y = 0; y < shape.height; ++y) {
      const auto* row = pixels.data() + (c * shape.height + y) * shape.width;
      plane.push_back(std::vector<double>(row, row + shape.width));
    }
    img.push_back(std::move(plane));
  }
  return img;
}

ordered_json disc_json(const DiscGeometry& d) { return {{"cx", d.cx}, {"cy", d.cy}, {"radius", d.radius}}; }

class RecordReader {
 public:
  RecordReader(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {}

  const nlohmann::json& field(const char* name) const {
    auto it = j_.find(name);
    if (it == j_.end()) throw ParseError(where_ + ": missing field '" + name + "'");
    return *it;
  }
  double number(const char* name) const { return number_of(field(name), name); }
  double number_of(const nlohmann::json& v, const std::string& name) const {
    if (!v.is_number()) throw ParseError(where_ + ": field '" + name + "' must be a number");
    return v.get<double>();
  }
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(where_ + ": " + msg); }

  std::vector<double> image(const char* name, const ImageShape& shape) const {
    const auto& img = field(name);
    const std::string bad = std::string("field '") + name + "' must be a " + std::to_string(shape.channels) + "x" +
                            std::to_string(shape.height) + "x" + std::to_string(shape.width) + " nested array";
    if (!img.is_array() || img.size() != shape.channels) fail(bad);
    std::vector<double> out;
    out.reserve(shape.numel());
    for (const auto& plane : img) {
      if (!plane.is_array() || plane.size() != shape.height) fail(bad);
      for (const auto& row : plane) {
        if (!row.is_array() || row.size() != shape.width) fail(bad);
        for (const auto& v : row) {
          const double x = number_of(v, name);
          if (!(x >= 0.0 && x <= 1.0)) fail(std::string("field '") + name + "' has a pixel outside [0, 1]");
          out.push_back(x);
        }
      }
    }
    return out;
  }

  DiscGeometry disc(const nlohmann::json& d, const std::string& name) const {
    if (!d.is_object()) fail("field '" + name + "' must be an object");
    for (const char* k : {"cx", "cy", "radius"}) {
      if (!d.contains(k)) fail("missing field '" + name + "." + k + "'");
    }
    return {number_of(d["cx"], name + ".cx"), number_of(d["cy"], name + ".cy"),
            number_of(d["radius"], name + ".radius")};
  }

 private:
  const nlohmann::json& j_;
  std::string where_;
};

BinocularSample parse_record(const nlohmann::json& j, const ImageShape& shape, const std::string& where) {
  if (!j.is_object()) throw ParseError(where + ": record must be a JSON object");
  RecordReader r(j, where);
  BinocularSample s;
  const auto& id = r.field("id");
  if (!id.is_string()) r.fail("field 'id' must be a string");
  s.id = id.get<std::string>();
  s.age_years = r.number("age_years");
  const auto& sex = r.field("sex");
  if (!sex.is_number_integer() || (sex.get<int>() != 0 && sex.get<int>() != 1)) r.fail("field 'sex' must be 0 or 1");
  s.sex = sex.get<int>();
  const auto& votes = r.field("rater_votes");
  if (!votes.is_array() || votes.empty()) r.fail("field 'rater_votes' must be a non-empty array");
  for (const auto& v : votes) {
    if (!v.is_number_integer() || (v.get<int>() != 0 && v.get<int>() != 1)) {
      r.fail("field 'rater_votes' must contain only 0 and 1");
    }
    s.rater_votes.push_back(v.get<int>());
  }
  set_vote_statistics(s);
  if (r.number("y_vote") != s.y_vote) r.fail("field 'y_vote' is not the mean of rater_votes");
  if (r.number("sigma2_vote") != s.sigma2_vote) r.fail("field 'sigma2_vote' is not the variance of rater_votes");
  s.latent_severity = r.number("latent_severity");
  s.fellow_severity = r.number("fellow_severity");
  const auto& disc = r.field("disc");
  if (!disc.is_object() || !disc.contains("target") || !disc.contains("fellow")) {
    r.fail("field 'disc' must hold 'target' and 'fellow' objects");
  }
  s.target_disc = r.disc(disc["target"], "disc.target");
  s.fellow_disc = r.disc(disc["fellow"], "disc.fellow");
  s.target_img = r.image("target_img", shape);
  s.fellow_img = r.image("fellow_img", shape);
  return s;
}

}  // namespace

std::string dataset_to_jsonl(const Dataset& dataset) {
  const ImageShape& shape = dataset.image_shape;
  std::string out;
  ordered_json header = {{"format", kFormat},
                         {"version", kVersion},
                         {"count", dataset.size()},
                         {"image_shape", {shape.channels, shape.height, shape.width}}};
  out += header.dump() + "\n";
  for (const auto& s : dataset.samples) {
    if (s.target_img.size() != shape.numel() || s.fellow_img.size() != shape.numel()) {
      throw ShapeError("sample " + s.id + " does not match the dataset image shape");
    }
    ordered_json rec;
    rec["id"] = s.id;
    rec["age_years"] = s.age_years;
    rec["sex"] = s.sex;
    rec["rater_votes"] = s.rater_votes;
    rec["y_vote"] = s.y_vote;
    rec["sigma2_vote"] = s.sigma2_vote;
    rec["latent_severity"] = s.latent_severity;
    rec["fellow_severity"] = s.fellow_severity;
    rec["disc"] = {{"target", disc_json(s.target_disc)}, {"fellow", disc_json(s.fellow_disc)}};
    rec["target_img"] = image_json(s.target_img, shape);
    rec["fellow_img"] = image_json(s.fellow_img, shape);
    out += rec.dump() + "\n";
  }
  return out;
}

Dataset dataset_from_jsonl(const std::string& text, const std::string& source) {
  Dataset ds;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::size_t expected = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string where = source + ":" + std::to_string(line_no);
    if (line.find_first_not_of(" \t") == std::string::npos) {
      throw ParseError(where + ": blank line");
    }
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(where + ": invalid JSON: " + e.what());
    }
    if (!have_header) {
      if (!j.is_object() || j.value("format", "") != kFormat) throw ParseError(where + ": missing dataset header");
      if (j.value("version", 0) != kVersion) {
        throw ParseError(where + ": unsupported dataset version " + j.value("version", nlohmann::json()).dump());
      }
      const auto& shape = j.value("image_shape", nlohmann::json());
      if (!shape.is_array() || shape.size() != 3 || !j.contains("count") || !j["count"].is_number_unsigned()) {
        throw ParseError(where + ": header needs 'count' and a 3-element 'image_shape'");
      }
      for (const auto& d : shape) {
        if (!d.is_number_unsigned() || d.get<std::size_t>() == 0) {
          throw ParseError(where + ": image_shape entries must be positive integers");
        }
      }
      ds.image_shape = {shape[0].get<std::size_t>(), shape[1].get<std::size_t>(), shape[2].get<std::size_t>()};
      expected = j["count"].get<std::size_t>();
      have_header = true;
      continue;
    }
    ds.samples.push_back(parse_record(j, ds.image_shape, where));
  }
  if (have_header && ds.samples.size() != expected) {
    throw ParseError(source + ": header announces " + std::to_string(expected) + " records, found " +
                     std::to_string(ds.samples.size()));
  }
  return ds;
}

void write_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  const std::string text = dataset_to_jsonl(dataset);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write dataset " + path.string());
  os << text;
  if (!os) throw IoError("failed writing dataset " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read dataset " + path.string());
  std::stringstream buf;
  buf << is.rdbuf();
  return dataset_from_jsonl(buf.str(), path.string());
}

// ---------------------------------------------------------------------------
// Summary, batching, manifests

DatasetSummary summarize(const Dataset& dataset) {
  DatasetSummary s;
  s.count = dataset.size();
  std::size_t disagree = 0;
  for (const auto& sample : dataset.samples) {
    s.positives += static_cast<std::size_t>(sample.hard_label());
    if (sample.y_vote > 0.0 && sample.y_vote < 1.0) ++disagree;
    ++s.rater_histogram[sample.rater_count()];
  }
  if (s.count > 0) {
    s.positive_rate = static_cast<double>(s.positives) / static_cast<double>(s.count);
    s.disagreement_rate = static_cast<double>(disagree) / static_cast<double>(s.count);
  }
  return s;
}

std::string format_summary(const DatasetSummary& s) {
  char buf[160];
  std::string out;
  std::snprintf(buf, sizeof buf, "samples: %zu\npositives: %zu (%.1f%%)\nrater disagreement: %.1f%%\n", s.count,
                s.positives, 100.0 * s.positive_rate, 100.0 * s.disagreement_rate);
  out += buf;
  out += "raters per sample:";
  for (const auto& [k, n] : s.rater_histogram) out += " " + std::to_string(k) + ":" + std::to_string(n);
  out += "\n";
  return out;
}

Tensor stack_images(const Dataset& dataset, std::span<const std::size_t> indices, bool fellow) {
  if (indices.empty()) throw InputError("cannot stack an empty batch");
  const ImageShape& shape = dataset.image_shape;
  std::vector<double> values;
  values.reserve(indices.size() * shape.numel());
  for (std::size_t i : indices) {
    if (i >= dataset.size()) throw IndexError("sample index " + std::to_string(i) + " out of range");
    const auto& img = fellow ? dataset.samples[i].fellow_img : dataset.samples[i].target_img;
    values.insert(values.end(), img.begin(), img.end());
  }
  return Tensor({indices.size(), shape.channels, shape.height, shape.width}, std::move(values));
}

std::string splits_to_json(const Dataset& dataset, const Splits& splits) {
  auto ids = [&](const std::vector<std::size_t>& idx) {
    std::vector<std::string> out;
    for (std::size_t i : idx) out.push_back(dataset.samples.at(i).id);
    return out;
  };
  ordered_json j = {{"train", ids(splits.train)}, {"val", ids(splits.val)}, {"test", ids(splits.test)}};
  return j.dump(2) + "\n";
}

Splits splits_from_json(const Dataset& dataset, const std::string& text, const std::string& source) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(source + ": invalid JSON: " + e.what());
  }
  auto indices = [&](const char* key) {
    if (!j.is_object() || !j.contains(key) || !j[key].is_array()) {
      throw ParseError(source + ": missing field '" + std::string(key) + "'");
    }
    std::vector<std::size_t> out;
    for (const auto& id : j[key]) {
      if (!id.is_string()) throw ParseError(source + ": split ids must be strings");
      out.push_back(dataset.index_of(id.get<std::string>()));
    }
    return out;
  };
  return Splits{indices("train"), indices("val"), indices("test")};
}

}  // namespace vvit
