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

// Command-line front end. Everything goes through the C API in vvit/vvit.h.
//
// Exit codes: 0 success, 2 usage or input error, 3 numerical failure,
// 1 internal error.

#include <CLI11.hpp>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vvit/vvit.h"

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitInternal = 1;

struct DatasetDeleter {
  void operator()(vvit_dataset* d) const { vvit_dataset_free(d); }
};
struct ModelDeleter {
  void operator()(vvit_model* m) const { vvit_model_free(m); }
};
using DatasetPtr = std::unique_ptr<vvit_dataset, DatasetDeleter>;
using ModelPtr = std::unique_ptr<vvit_model, ModelDeleter>;

// Carries a failed C API status up to main.
struct Failure {
  vvit_status status;
};

void check(vvit_status status) {
  if (status == VVIT_OK) return;
  std::fprintf(stderr, "vvit: %s: %s\n", vvit_status_name(status), vvit_last_error());
  throw Failure{status};
}

[[noreturn]] void usage_error(const std::string& message) {
  std::fprintf(stderr, "vvit: %s\n", message.c_str());
  throw Failure{VVIT_ERR_INPUT};
}

int exit_code(vvit_status status) {
  switch (status) {
    case VVIT_OK: return 0;
    case VVIT_ERR_NUMERIC: return kExitNumeric;
    case VVIT_ERR_INTERNAL: return kExitInternal;
    default: return kExitUsage;
  }
}

void log_line(const char* line, void*) {
  std::fprintf(stderr, "%s\n", line);
  std::fflush(stderr);
}

const char* opt(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

// Falls back to $VVIT_OUT_DIR (joined with `leaf` when given).
std::string output_path(const std::string& given, const std::string& leaf, const char* flag) {
  if (!given.empty()) return given;
  const char* env = std::getenv("VVIT_OUT_DIR");
  if (env == nullptr || *env == '\0') usage_error(std::string(flag) + " is required when VVIT_OUT_DIR is not set");
  std::filesystem::path p(env);
  if (!leaf.empty()) p /= leaf;
  return p.string();
}

DatasetPtr load_dataset(const std::string& path) {
  vvit_dataset* d = nullptr;
  check(vvit_dataset_read(path.c_str(), &d));
  return DatasetPtr(d);
}

ModelPtr load_model(const std::string& path) {
  vvit_model* m = nullptr;
  check(vvit_model_load(path.c_str(), &m));
  return ModelPtr(m);
}

void print_and_free(char* text) {
  std::fputs(text, stdout);
  vvit_string_free(text);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vvit: binocular vision transformer with a dropout voting head, on synthetic fundus data.\n"
               "Outputs default to $VVIT_OUT_DIR when --out is omitted."};
  app.set_version_flag("--version", std::string(vvit_version()));
  app.require_subcommand(1, 1);

  // gen-data
  std::string gen_config, gen_out;
  std::optional<std::uint64_t> gen_seed;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic binocular dataset (JSON lines)");
  gen->add_option("--config", gen_config, "Generator key-value config (defaults when omitted)")->check(CLI::ExistingFile);
  gen->add_option("--out", gen_out, "Output dataset path (default $VVIT_OUT_DIR/dataset.jsonl)");
  gen->add_option("--seed", gen_seed, "Override the generator seed");

  // train
  std::string tr_data, tr_model_cfg, tr_train_cfg, tr_out;
  auto* tr = app.add_subcommand("train", "Train a model; writes model.ckpt, loss.csv and splits.json");
  tr->add_option("--data", tr_data, "Dataset file")->required();
  tr->add_option("--model-config", tr_model_cfg, "Model key-value config (defaults when omitted)");
  tr->add_option("--train-config", tr_train_cfg, "Training key-value config (defaults when omitted)");
  tr->add_option("--out", tr_out, "Output directory (default $VVIT_OUT_DIR)");

  // eval
  std::string ev_ckpt, ev_data, ev_out, ev_manifest, ev_split;
  std::size_t ev_bins = 10;
  double ev_threshold = 0.5;
  std::uint64_t ev_seed = 0;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint; writes metrics.json, reliability.csv, roc.csv");
  ev->add_option("--checkpoint", ev_ckpt, "Model checkpoint")->required();
  ev->add_option("--data", ev_data, "Dataset file")->required();
  ev->add_option("--out", ev_out, "Output directory (default $VVIT_OUT_DIR)");
  ev->add_option("--bins", ev_bins, "Calibration bins")->capture_default_str();
  ev->add_option("--threshold", ev_threshold, "Decision threshold for recall/F1/accuracy")->capture_default_str();
  ev->add_option("--seed", ev_seed, "Seed for the voting dropout masks")->capture_default_str();
  ev->add_option("--splits", ev_manifest, "Split manifest from `train`; restricts scoring to --split");
  ev->add_option("--split", ev_split, "train, val or test (default test when --splits is given)");

  // ablate
  std::string ab_data, ab_out, ab_model_cfg, ab_train_cfg, ab_triples;
  std::vector<std::uint64_t> ab_seeds;
  std::size_t ab_jobs = 1, ab_bins = 10;
  double ab_threshold = 0.5;
  auto* ab = app.add_subcommand("ablate", "Train the (B, V, M) ablation grid; writes ablation.csv");
  ab->add_option("--data", ab_data, "Dataset file")->required();
  ab->add_option("--seeds", ab_seeds, "Comma-separated training seeds")->required()->delimiter(',');
  ab->add_option("--out", ab_out, "Output directory (default $VVIT_OUT_DIR)");
  ab->add_option("--model-config", ab_model_cfg, "Base model config; the B, V, M flags are overridden per row");
  ab->add_option("--train-config", ab_train_cfg, "Training config");
  ab->add_option("--triples", ab_triples, "Rows as \"B,V,M;B,V,M\" (default 0,0,0;1,0,0;1,1,0;1,1,1)");
  ab->add_option("--jobs", ab_jobs, "Concurrent training runs")->capture_default_str();
  ab->add_option("--bins", ab_bins, "Calibration bins")->capture_default_str();
  ab->add_option("--threshold", ab_threshold, "Decision threshold")->capture_default_str();

  // report
  std::string rp_in;
  auto* rp = app.add_subcommand("report", "Print metrics.json, an ablation CSV or a loss CSV as a table");
  rp->add_option("--in", rp_in, "File, or a directory holding metrics.json")->required();

  // attn
  std::string at_ckpt, at_data, at_id, at_block = "0", at_eye = "target", at_out;
  auto* at = app.add_subcommand("attn", "Write a sample's cross-attention map as a grid CSV plus disc JSON");
  at->add_option("--checkpoint", at_ckpt, "Model checkpoint")->required();
  at->add_option("--data", at_data, "Dataset file")->required();
  at->add_option("--sample-id", at_id, "Sample id, e.g. s000042")->required();
  at->add_option("--block", at_block, "Cross-attention block index, or 'all' for the mean map")->capture_default_str();
  at->add_option("--eye", at_eye, "Image the map covers: target or fellow")->capture_default_str();
  at->add_option("--out", at_out, "CSV path (default $VVIT_OUT_DIR/attention.csv); disc info goes to .json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (gen->parsed()) {
      const std::string out = output_path(gen_out, "dataset.jsonl", "--out");
      vvit_dataset* d = nullptr;
      const std::uint64_t seed = gen_seed.value_or(0);
      check(vvit_dataset_generate(opt(gen_config), gen_seed ? &seed : nullptr, &d));
      DatasetPtr ds(d);
      const std::filesystem::path parent = std::filesystem::path(out).parent_path();
      if (!parent.empty()) std::filesystem::create_directories(parent);
      check(vvit_dataset_write(ds.get(), out.c_str()));
      char* summary = nullptr;
      check(vvit_dataset_summary(ds.get(), &summary));
      print_and_free(summary);
      std::printf("wrote %s\n", out.c_str());
    } else if (tr->parsed()) {
      const std::string out = output_path(tr_out, "", "--out");
      DatasetPtr ds = load_dataset(tr_data);
      check(vvit_train(ds.get(), opt(tr_model_cfg), opt(tr_train_cfg), out.c_str(), log_line, nullptr, nullptr));
      std::printf("wrote %s\n", out.c_str());
    } else if (ev->parsed()) {
      const std::string out = output_path(ev_out, "", "--out");
      if (!ev_split.empty() && ev_manifest.empty()) usage_error("--split needs --splits");
      ModelPtr model = load_model(ev_ckpt);
      DatasetPtr ds = load_dataset(ev_data);
      vvit_metrics m{};
      check(vvit_evaluate(model.get(), ds.get(), opt(ev_manifest), opt(ev_split), ev_bins, ev_threshold, ev_seed,
                          out.c_str(), &m));
      std::printf("records %zu\nrecall %.4f\nf1 %.4f\nbrier %.4f\nauroc %.4f\nece %.4f\naccuracy %.4f\n", m.count,
                  m.recall, m.f1, m.brier, m.auroc, m.ece, m.accuracy);
      if (m.classification_warning) {
        std::fprintf(stderr, "vvit: warning: zero denominator in recall/precision; reported as 0\n");
      }
      std::printf("wrote %s\n", out.c_str());
    } else if (ab->parsed()) {
      const std::string out = output_path(ab_out, "", "--out");
      DatasetPtr ds = load_dataset(ab_data);
      check(vvit_ablate(ds.get(), opt(ab_model_cfg), opt(ab_train_cfg), ab_seeds.data(), ab_seeds.size(),
                        opt(ab_triples), ab_jobs, ab_bins, ab_threshold, out.c_str(), log_line, nullptr));
      char* table = nullptr;
      check(vvit_report_render((std::filesystem::path(out) / "ablation.csv").c_str(), &table));
      print_and_free(table);
    } else if (rp->parsed()) {
      char* table = nullptr;
      check(vvit_report_render(rp_in.c_str(), &table));
      print_and_free(table);
    } else if (at->parsed()) {
      const std::string out = output_path(at_out, "attention.csv", "--out");
      std::size_t block = VVIT_ALL_BLOCKS;
      if (at_block != "all") {
        try {
          std::size_t used = 0;
          const long long b = std::stoll(at_block, &used);
          if (used != at_block.size() || b < 0) throw std::invalid_argument(at_block);
          block = static_cast<std::size_t>(b);
        } catch (const std::exception&) {
          usage_error("--block must be a non-negative integer or 'all'");
        }
      }
      vvit_eye eye = VVIT_EYE_TARGET;
      if (at_eye == "fellow") eye = VVIT_EYE_FELLOW;
      else if (at_eye != "target") usage_error("--eye must be 'target' or 'fellow'");
      ModelPtr model = load_model(at_ckpt);
      DatasetPtr ds = load_dataset(at_data);
      check(vvit_attention_write(model.get(), ds.get(), at_id.c_str(), block, eye, out.c_str()));
      std::printf("wrote %s\n", out.c_str());
    }
  } catch (const Failure& f) {
    return exit_code(f.status);
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "vvit: %s\n", e.what());
    return kExitUsage;
  }
  return 0;
}
