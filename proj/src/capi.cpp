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

#include "vvit/vvit.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <memory>
#include <new>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>

#include "vvit/data.hpp"
#include "vvit/error.hpp"
#include "vvit/metrics.hpp"
#include "vvit/model.hpp"
#include "vvit/report.hpp"
#include "vvit/train.hpp"

struct vvit_dataset {
  vvit::Dataset value;
};

struct vvit_model {
  vvit::VVitModel value;
};

namespace {

thread_local std::string g_last_error;

vvit_status status_of(vvit::ErrorKind kind) {
  switch (kind) {
    case vvit::ErrorKind::Config: return VVIT_ERR_CONFIG;
    case vvit::ErrorKind::Shape: return VVIT_ERR_SHAPE;
    case vvit::ErrorKind::Input: return VVIT_ERR_INPUT;
    case vvit::ErrorKind::Label: return VVIT_ERR_LABEL;
    case vvit::ErrorKind::Parse: return VVIT_ERR_PARSE;
    case vvit::ErrorKind::Io: return VVIT_ERR_IO;
    case vvit::ErrorKind::Index: return VVIT_ERR_INDEX;
    case vvit::ErrorKind::UndefinedMetric: return VVIT_ERR_UNDEFINED_METRIC;
    case vvit::ErrorKind::Numeric: return VVIT_ERR_NUMERIC;
  }
  return VVIT_ERR_INTERNAL;
}

template <typename Fn>
vvit_status guarded(Fn&& fn) {
  g_last_error.clear();
  try {
    fn();
    return VVIT_OK;
  } catch (const vvit::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::exception& e) {
    g_last_error = std::string("internal error: ") + e.what();
  } catch (...) {
    g_last_error = "internal error";
  }
  return VVIT_ERR_INTERNAL;
}

void require(const void* p, const char* what) {
  if (p == nullptr) throw vvit::InputError(std::string(what) + " must not be NULL");
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw vvit::IoError("cannot write " + path.string());
  os << text;
  if (!os) throw vvit::IoError("failed writing " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw vvit::IoError("cannot read " + path.string());
  std::stringstream buf;
  buf << is.rdbuf();
  return buf.str();
}

void make_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw vvit::IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

vvit::VVitConfig model_config(const char* path) {
  if (path == nullptr) return vvit::VVitConfig{};
  return vvit::VVitConfig::from_key_values(vvit::load_key_values(path), path);
}

vvit::TrainConfig train_config(const char* path) {
  if (path == nullptr) return vvit::TrainConfig{};
  return vvit::TrainConfig::from_key_values(vvit::load_key_values(path), path);
}

void emit(vvit_log_fn log, void* user, const std::string& line) {
  if (log != nullptr) log(line.c_str(), user);
}

std::string triple_label(const vvit::AblationTriple& t) {
  return std::string(t.use_binocular ? "1" : "0") + "," + (t.use_voting ? "1" : "0") + "," +
         (t.use_metadata ? "1" : "0");
}

vvit::Eye to_eye(vvit_eye eye) {
  if (eye == VVIT_EYE_TARGET) return vvit::Eye::Target;
  if (eye == VVIT_EYE_FELLOW) return vvit::Eye::Fellow;
  throw vvit::InputError("eye must be VVIT_EYE_TARGET or VVIT_EYE_FELLOW");
}

}  // namespace

extern "C" {

const char* vvit_version(void) { return "0.1.0"; }

const char* vvit_last_error(void) { return g_last_error.c_str(); }

const char* vvit_status_name(vvit_status status) {
  switch (status) {
    case VVIT_OK: return "ok";
    case VVIT_ERR_CONFIG: return "configuration error";
    case VVIT_ERR_SHAPE: return "shape error";
    case VVIT_ERR_INPUT: return "input error";
    case VVIT_ERR_LABEL: return "label error";
    case VVIT_ERR_PARSE: return "parse error";
    case VVIT_ERR_IO: return "i/o error";
    case VVIT_ERR_INDEX: return "index error";
    case VVIT_ERR_UNDEFINED_METRIC: return "undefined metric";
    case VVIT_ERR_NUMERIC: return "numerical failure";
    case VVIT_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void vvit_string_free(char* text) { std::free(text); }

vvit_status vvit_dataset_generate(const char* config_path, const uint64_t* seed, vvit_dataset** out) {
  return guarded([&] {
    require(out, "out");
    vvit::GeneratorConfig cfg;
    if (config_path != nullptr) {
      cfg = vvit::GeneratorConfig::from_key_values(vvit::load_key_values(config_path), config_path);
    }
    if (seed != nullptr) cfg.seed = *seed;
    *out = new vvit_dataset{vvit::generate_dataset(cfg)};
  });
}

vvit_status vvit_dataset_read(const char* path, vvit_dataset** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new vvit_dataset{vvit::read_dataset(path)};
  });
}

vvit_status vvit_dataset_write(const vvit_dataset* dataset, const char* path) {
  return guarded([&] {
    require(dataset, "dataset");
    require(path, "path");
    vvit::write_dataset(path, dataset->value);
  });
}

vvit_status vvit_dataset_size(const vvit_dataset* dataset, size_t* out) {
  return guarded([&] {
    require(dataset, "dataset");
    require(out, "out");
    *out = dataset->value.size();
  });
}

vvit_status vvit_dataset_summary(const vvit_dataset* dataset, char** text) {
  return guarded([&] {
    require(dataset, "dataset");
    require(text, "text");
    *text = copy_string(vvit::format_summary(vvit::summarize(dataset->value)));
  });
}

void vvit_dataset_free(vvit_dataset* dataset) { delete dataset; }

vvit_status vvit_train(const vvit_dataset* dataset, const char* model_config_path, const char* train_config_path,
                       const char* out_dir, vvit_log_fn log, void* user, vvit_model** model) {
  return guarded([&] {
    require(dataset, "dataset");
    require(out_dir, "out_dir");
    const vvit::VVitConfig mc = model_config(model_config_path);
    vvit::TrainConfig tc = train_config(train_config_path);
    const std::filesystem::path dir(out_dir);
    make_dir(dir);
    if (tc.checkpoint_path.empty()) tc.checkpoint_path = (dir / "model.ckpt").string();

    const vvit::Dataset& ds = dataset->value;
    const vvit::Splits splits = vvit::split(ds, tc.train_frac, tc.val_frac, tc.split_seed);
    write_text(dir / "splits.json", vvit::splits_to_json(ds, splits));
    emit(log, user,
         "split: " + std::to_string(splits.train.size()) + " train, " + std::to_string(splits.val.size()) +
             " val, " + std::to_string(splits.test.size()) + " test");

    const vvit::TrainResult result = vvit::train(mc, tc, ds, splits, [&](const vvit::EpochLog& e) {
      std::string line = "epoch " + std::to_string(e.epoch) + "/" + std::to_string(tc.epochs) +
                         " total=" + vvit::format_double(e.train.total);
      if (e.evaluated) line += " val_brier=" + vvit::format_double(e.val_brier);
      emit(log, user, line);
    });
    write_text(dir / "loss.csv", vvit::loss_log_csv(result.log));
    emit(log, user,
         "best epoch " + std::to_string(result.best_epoch) + " (val Brier " +
             vvit::format_double(result.best_val_brier) + "), checkpoint " + tc.checkpoint_path);
    if (model != nullptr) *model = new vvit_model{result.model};
  });
}

vvit_status vvit_model_load(const char* path, vvit_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new vvit_model{vvit::VVitModel::load(path)};
  });
}

vvit_status vvit_model_save(const vvit_model* model, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    model->value.save(path);
  });
}

void vvit_model_free(vvit_model* model) { delete model; }

vvit_status vvit_evaluate(const vvit_model* model, const vvit_dataset* dataset, const char* manifest_path,
                          const char* split_name, size_t bins, double threshold, uint64_t seed, const char* out_dir,
                          vvit_metrics* metrics) {
  return guarded([&] {
    require(model, "model");
    require(dataset, "dataset");
    if (bins == 0) throw vvit::ConfigError("bins must be >= 1");
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw vvit::ConfigError("threshold must lie in [0, 1]");
    const vvit::Dataset& ds = dataset->value;
    std::vector<std::size_t> indices;
    if (manifest_path != nullptr) {
      const vvit::Splits splits = vvit::splits_from_json(ds, read_text(manifest_path), manifest_path);
      const std::string name = split_name != nullptr ? split_name : "test";
      if (name == "train") indices = splits.train;
      else if (name == "val") indices = splits.val;
      else if (name == "test") indices = splits.test;
      else throw vvit::InputError("unknown split '" + name + "' (expected train, val or test)");
    } else {
      if (split_name != nullptr) throw vvit::InputError("a split name needs a split manifest");
      indices.resize(ds.size());
      for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
    }
    if (indices.empty()) throw vvit::InputError("nothing to evaluate: the selected samples are empty");
    const vvit::Prediction pred = vvit::predict(model->value, ds, indices, seed);
    const vvit::CalibrationReport report = vvit::calibration_report(pred.records, bins, threshold);
    if (out_dir != nullptr) vvit::write_report(out_dir, report);
    if (metrics != nullptr) {
      *metrics = vvit_metrics{report.count, report.recall, report.f1, report.brier, report.auroc,
                              report.ece,   report.accuracy, report.classification_warning ? 1 : 0};
    }
  });
}

vvit_status vvit_ablate(const vvit_dataset* dataset, const char* model_config_path, const char* train_config_path,
                        const uint64_t* seeds, size_t seed_count, const char* triples, size_t jobs, size_t bins,
                        double threshold, const char* out_dir, vvit_log_fn log, void* user) {
  return guarded([&] {
    require(dataset, "dataset");
    require(out_dir, "out_dir");
    if (seed_count == 0) throw vvit::ConfigError("ablation needs at least one seed");
    require(seeds, "seeds");
    const vvit::AblationSpec spec =
        triples != nullptr ? vvit::parse_triples(triples) : vvit::AblationSpec::standard();
    vvit::AblationOptions options;
    options.base_model = model_config(model_config_path);
    options.train = train_config(train_config_path);
    options.seeds.assign(seeds, seeds + seed_count);
    options.jobs = jobs;
    options.bins = bins;
    options.threshold = threshold;
    const std::filesystem::path dir(out_dir);
    make_dir(dir);

    const auto rows = vvit::run_ablation(spec, options, dataset->value, [&](const vvit::AblationRun& run) {
      emit(log, user,
           "run B,V,M=" + triple_label(run.triple) + " seed=" + std::to_string(run.seed) +
               " auroc=" + vvit::format_double(run.report.auroc) + " brier=" + vvit::format_double(run.report.brier) +
               " ece=" + vvit::format_double(run.report.ece));
    });
    write_text(dir / "ablation.csv", vvit::ablation_csv(rows));
    std::string runs = "B,V,M,seed,recall,f1,brier,auroc,ece,acc\n";
    for (const auto& row : rows) {
      for (std::size_t s = 0; s < row.per_seed.size(); ++s) {
        const auto& r = row.per_seed[s];
        runs += triple_label(row.triple) + "," + std::to_string(options.seeds[s]) + "," +
                vvit::format_double(r.recall) + "," + vvit::format_double(r.f1) + "," + vvit::format_double(r.brier) +
                "," + vvit::format_double(r.auroc) + "," + vvit::format_double(r.ece) + "," +
                vvit::format_double(r.accuracy) + "\n";
      }
    }
    write_text(dir / "ablation_runs.csv", runs);
  });
}

vvit_status vvit_attention_map(const vvit_model* model, const vvit_dataset* dataset, const char* sample_id,
                               size_t block, vvit_eye eye, double* grid, size_t capacity, size_t* rows, size_t* cols) {
  return guarded([&] {
    require(model, "model");
    require(dataset, "dataset");
    require(sample_id, "sample_id");
    const std::size_t index = dataset->value.index_of(sample_id);
    const vvit::Tensor map = vvit::sample_attention_map(model->value, dataset->value, index, block, to_eye(eye));
    if (rows != nullptr) *rows = map.dim(0);
    if (cols != nullptr) *cols = map.dim(1);
    if (grid != nullptr) {
      if (capacity < map.numel()) throw vvit::InputError("grid buffer too small");
      const auto v = map.values();
      std::copy(v.begin(), v.end(), grid);
    }
  });
}

vvit_status vvit_attention_write(const vvit_model* model, const vvit_dataset* dataset, const char* sample_id,
                                 size_t block, vvit_eye eye, const char* csv_path) {
  return guarded([&] {
    require(model, "model");
    require(dataset, "dataset");
    require(sample_id, "sample_id");
    require(csv_path, "csv_path");
    const vvit::Dataset& ds = dataset->value;
    const std::size_t index = ds.index_of(sample_id);
    const vvit::Eye which = to_eye(eye);
    const vvit::Tensor map = vvit::sample_attention_map(model->value, ds, index, block, which);
    const std::size_t rows = map.dim(0), cols = map.dim(1);
    const auto v = map.values();

    std::string csv;
    std::size_t best = 0;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        csv += (c ? "," : "") + vvit::format_double(v[r * cols + c]);
        if (v[r * cols + c] > v[best]) best = r * cols + c;
      }
      csv += "\n";
    }
    const std::filesystem::path path(csv_path);
    if (path.extension() == ".json") throw vvit::InputError("attention CSV path must not end in .json");
    if (path.has_parent_path()) make_dir(path.parent_path());
    write_text(path, csv);

    const vvit::BinocularSample& s = ds.samples[index];
    const vvit::DiscGeometry& disc = which == vvit::Eye::Target ? s.target_disc : s.fellow_disc;
    const double cell_h = static_cast<double>(ds.image_shape.height) / static_cast<double>(rows);
    const double cell_w = static_cast<double>(ds.image_shape.width) / static_cast<double>(cols);
    const double cy = (static_cast<double>(best / cols) + 0.5) * cell_h;
    const double cx = (static_cast<double>(best % cols) + 0.5) * cell_w;
    nlohmann::ordered_json meta;
    meta["sample_id"] = s.id;
    meta["eye"] = which == vvit::Eye::Target ? "target" : "fellow";
    if (block == VVIT_ALL_BLOCKS) meta["block"] = "all";
    else meta["block"] = block;
    meta["grid_rows"] = rows;
    meta["grid_cols"] = cols;
    meta["cell_height"] = cell_h;
    meta["cell_width"] = cell_w;
    meta["disc"] = {{"cx", disc.cx}, {"cy", disc.cy}, {"radius", disc.radius}};
    meta["argmax"] = {{"row", best / cols}, {"col", best % cols}, {"cx", cx}, {"cy", cy}};
    meta["argmax_in_disc"] = std::hypot(cx - disc.cx, cy - disc.cy) <= disc.radius;
    meta["hard_label"] = s.hard_label();
    std::filesystem::path sidecar = path;
    sidecar.replace_extension(".json");
    write_text(sidecar, meta.dump(2) + "\n");
  });
}

vvit_status vvit_report_render(const char* path, char** text) {
  return guarded([&] {
    require(path, "path");
    require(text, "text");
    *text = copy_string(vvit::render_report_file(path));
  });
}

}  // extern "C"
