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

#include "vvit/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include "vvit/error.hpp"
#include "vvit/optim.hpp"

namespace vvit {

// ---------------------------------------------------------------------------
// Configuration

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("train config: " + msg); };
  if (epochs == 0) fail("epochs must be >= 1");
  if (batch_size == 0) fail("batch_size must be >= 1");
  if (!(learning_rate >= 0.0 && std::isfinite(learning_rate))) fail("learning_rate must be finite and >= 0");
  if (optimizer != "adam" && optimizer != "sgd") fail("optimizer must be 'adam' or 'sgd', got '" + optimizer + "'");
  if (eval_every == 0) fail("eval_every must be >= 1");
  if (!(train_frac > 0.0 && val_frac > 0.0 && train_frac + val_frac <= 1.0 + 1e-12)) {
    fail("train_frac and val_frac must be positive and sum to at most 1");
  }
}

KeyValues TrainConfig::to_key_values() const {
  return {
      {"epochs", std::to_string(epochs)},
      {"batch_size", std::to_string(batch_size)},
      {"learning_rate", format_double(learning_rate)},
      {"optimizer", optimizer},
      {"seed", std::to_string(seed)},
      {"eval_every", std::to_string(eval_every)},
      {"checkpoint_path", checkpoint_path},
      {"train_frac", format_double(train_frac)},
      {"val_frac", format_double(val_frac)},
      {"split_seed", std::to_string(split_seed)},
  };
}

TrainConfig TrainConfig::from_key_values(const KeyValues& kv, const std::string& source) {
  TrainConfig c;
  KeyValueReader r(kv, source);
  r.read("epochs", c.epochs);
  r.read("batch_size", c.batch_size);
  r.read("learning_rate", c.learning_rate);
  r.read("optimizer", c.optimizer);
  std::size_t seed = c.seed, split_seed = c.split_seed;
  r.read("seed", seed);
  r.read("split_seed", split_seed);
  c.seed = seed;
  c.split_seed = split_seed;
  r.read("eval_every", c.eval_every);
  r.read("checkpoint_path", c.checkpoint_path);
  r.read("train_frac", c.train_frac);
  r.read("val_frac", c.val_frac);
  r.finish();
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Helpers

LossTargets loss_targets(const BinocularSample& s, const AgeScaler& scaler) {
  LossTargets t;
  t.y_vote = s.y_vote;
  t.sigma2_vote = s.sigma2_vote;
  t.rater_count = s.rater_count();
  t.age_standardized = scaler.standardize(s.age_years);
  t.sex = s.sex;
  return t;
}

AgeScaler fit_age_scaler(const Dataset& dataset, std::span<const std::size_t> indices) {
  AgeScaler scaler;
  if (indices.empty()) return scaler;
  double total = 0.0;
  for (std::size_t i : indices) total += dataset.samples.at(i).age_years;
  scaler.mean = total / static_cast<double>(indices.size());
  double sq = 0.0;
  for (std::size_t i : indices) {
    const double d = dataset.samples[i].age_years - scaler.mean;
    sq += d * d;
  }
  const double sd = std::sqrt(sq / static_cast<double>(indices.size()));
  scaler.stddev = sd > 1e-9 ? sd : 1.0;
  return scaler;
}

namespace {

void check_compatible(const VVitConfig& config, const Dataset& dataset) {
  const ImageShape& s = dataset.image_shape;
  if (config.image_channels != s.channels || config.image_height != s.height || config.image_width != s.width) {
    throw InputError("model expects " + std::to_string(config.image_channels) + "x" +
                     std::to_string(config.image_height) + "x" + std::to_string(config.image_width) +
                     " images, dataset has " + std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" +
                     std::to_string(s.width));
  }
}

std::unique_ptr<Optimizer> make_optimizer(const TrainConfig& config) {
  if (config.optimizer == "sgd") return std::make_unique<Sgd>(config.learning_rate);
  return std::make_unique<Adam>(config.learning_rate);
}

constexpr std::size_t kEvalChunk = 64;

// Runs the backbone in eval mode over `indices` in fixed-size chunks.
template <typename Fn>
void for_each_chunk(const VVitModel& model, const Dataset& dataset, std::span<const std::size_t> indices, Fn&& fn) {
  check_compatible(model.config(), dataset);
  NoGradGuard no_grad;
  Rng unused(0);  // eval mode draws nothing from the backbone stream
  for (std::size_t start = 0; start < indices.size(); start += kEvalChunk) {
    const auto chunk = indices.subspan(start, std::min(kEvalChunk, indices.size() - start));
    const Tensor target = stack_images(dataset, chunk, false);
    Tensor fellow;
    if (model.config().use_binocular) fellow = stack_images(dataset, chunk, true);
    ModelOutput out;
    out.representation = model.encode(target, model.config().use_binocular ? &fellow : nullptr, unused, false);
    fn(chunk, out);
  }
}

Tensor mean_attention_map(const ModelOutput& out, Eye eye, std::size_t sample) {
  const std::size_t blocks = out.representation.attention.size();
  if (blocks == 0) throw IndexError("attention map: model has no cross-attention blocks (single-eye config)");
  Tensor total = attention_map(out, 0, eye, sample);
  for (std::size_t b = 1; b < blocks; ++b) total = total + attention_map(out, b, eye, sample);
  return total * (1.0 / static_cast<double>(blocks));
}

}  // namespace

// ---------------------------------------------------------------------------
// Prediction

Prediction predict(const VVitModel& model, const Dataset& dataset, std::span<const std::size_t> indices,
                   std::uint64_t seed) {
  Prediction p;
  p.bundles.reserve(indices.size());
  p.records.reserve(indices.size());
  for_each_chunk(model, dataset, indices, [&](std::span<const std::size_t> chunk, const ModelOutput& out) {
    for (std::size_t j = 0; j < chunk.size(); ++j) {
      const BinocularSample& s = dataset.samples[chunk[j]];
      Rng rng(Rng::combine(seed, Rng::hash(s.id)));
      VoteResult v = model.predict_votes(slice(out.representation.z, 0, j, 1), rng);
      p.records.push_back(EvalRecord::from_soft(predict_probability(v.bundles[0]), s.y_vote));
      p.bundles.push_back(std::move(v.bundles[0]));
    }
  });
  return p;
}

Prediction predict(const VVitModel& model, const Dataset& dataset, std::uint64_t seed) {
  std::vector<std::size_t> all(dataset.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return predict(model, dataset, all, seed);
}

Tensor sample_attention_map(const VVitModel& model, const Dataset& dataset, std::size_t index, std::size_t block,
                            Eye eye) {
  if (index >= dataset.size()) throw IndexError("sample index " + std::to_string(index) + " out of range");
  Tensor map;
  const std::size_t one[] = {index};
  for_each_chunk(model, dataset, one,
                 [&](std::span<const std::size_t>, const ModelOutput& out) {
                   map = block == kAllBlocks ? mean_attention_map(out, eye, 0) : attention_map(out, block, eye, 0);
                 });
  return map;
}

LocalizationResult attention_localization(const VVitModel& model, const Dataset& dataset,
                                          std::span<const std::size_t> indices, std::size_t block) {
  std::vector<std::size_t> positives;
  for (std::size_t i : indices) {
    if (dataset.samples.at(i).hard_label() == 1) positives.push_back(i);
  }
  LocalizationResult r;
  r.positives = positives.size();
  if (positives.empty()) return r;
  const double cell_h = static_cast<double>(dataset.image_shape.height) /
                        static_cast<double>(model.embedding().grid_rows());
  const double cell_w = static_cast<double>(dataset.image_shape.width) /
                        static_cast<double>(model.embedding().grid_cols());
  for_each_chunk(model, dataset, positives, [&](std::span<const std::size_t> chunk, const ModelOutput& out) {
    for (std::size_t j = 0; j < chunk.size(); ++j) {
      const Tensor map = block == kAllBlocks ? mean_attention_map(out, Eye::Target, j)
                                             : attention_map(out, block, Eye::Target, j);
      const auto v = map.values();
      const std::size_t cell = static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
      const double cy = (static_cast<double>(cell / map.dim(1)) + 0.5) * cell_h;
      const double cx = (static_cast<double>(cell % map.dim(1)) + 0.5) * cell_w;
      const DiscGeometry& disc = dataset.samples[chunk[j]].target_disc;
      if (std::hypot(cx - disc.cx, cy - disc.cy) <= disc.radius) ++r.hits;
    }
  });
  r.rate = static_cast<double>(r.hits) / static_cast<double>(r.positives);
  return r;
}

// ---------------------------------------------------------------------------
// Training

TrainResult train(const VVitConfig& model_config, const TrainConfig& train_config, const Dataset& dataset,
                  const Splits& splits, const ProgressCallback& progress) {
  model_config.validate();
  train_config.validate();
  check_compatible(model_config, dataset);
  if (splits.train.empty() || splits.val.empty()) throw InputError("training needs non-empty train and val splits");

  VVitModel model = VVitModel::create(model_config, train_config.seed);
  model.age_scaler = fit_age_scaler(dataset, splits.train);
  NamedParameters params = model.parameters();
  auto optimizer = make_optimizer(train_config);

  const Rng root(train_config.seed);
  const Rng shuffle_root = root.derive("shuffle");
  const Rng step_root = root.derive("step");
  const bool binocular = model_config.use_binocular;

  TrainResult result;
  bool have_best = false;
  std::uint64_t step = 0;
  for (std::size_t epoch = 1; epoch <= train_config.epochs; ++epoch) {
    std::vector<std::size_t> order = splits.train;
    Rng shuffle = shuffle_root.derive(static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.index(i)]);

    EpochLog log;
    log.epoch = epoch;
    std::size_t batches = 0;
    try {
      for (std::size_t start = 0; start < order.size(); start += train_config.batch_size) {
        const std::span<const std::size_t> batch(order.data() + start,
                                                 std::min(train_config.batch_size, order.size() - start));
        std::vector<LossTargets> targets;
        targets.reserve(batch.size());
        for (std::size_t i : batch) targets.push_back(loss_targets(dataset.samples[i], model.age_scaler));
        const Tensor target = stack_images(dataset, batch, false);
        Tensor fellow;
        if (binocular) fellow = stack_images(dataset, batch, true);

        zero_grad(params);
        Rng rng = step_root.derive(step++);
        const ModelOutput out = model.forward(target, binocular ? &fellow : nullptr, rng, true);
        const LossResult loss = loss_total(targets, out, params, model_config);
        if (!std::isfinite(loss.breakdown.total)) throw NumericError("non-finite total loss");
        backward(loss.total);
        optimizer->step(params);

        log.train.l_vote += loss.breakdown.l_vote;
        log.train.l_age += loss.breakdown.l_age;
        log.train.l_sex += loss.breakdown.l_sex;
        log.train.l_reg += loss.breakdown.l_reg;
        log.train.l_wd += loss.breakdown.l_wd;
        log.train.total += loss.breakdown.total;
        ++batches;
      }
    } catch (const NumericError& e) {
      throw NumericError("training diverged in epoch " + std::to_string(epoch) + ": " + e.what());
    }
    const double nb = static_cast<double>(batches);
    log.train.l_vote /= nb;
    log.train.l_age /= nb;
    log.train.l_sex /= nb;
    log.train.l_reg /= nb;
    log.train.l_wd /= nb;
    log.train.total /= nb;

    if (epoch % train_config.eval_every == 0 || epoch == train_config.epochs) {
      const Prediction val = predict(model, dataset, splits.val, train_config.seed);
      log.val_brier = brier(val.records);
      log.evaluated = true;
      if (!have_best || log.val_brier < result.best_val_brier) {
        result.model = model.clone();
        result.best_epoch = epoch;
        result.best_val_brier = log.val_brier;
        have_best = true;
      }
    }
    result.log.push_back(log);
    if (progress) progress(log);
  }
  if (!train_config.checkpoint_path.empty()) result.model.save(train_config.checkpoint_path);
  return result;
}

std::string loss_log_csv(const std::vector<EpochLog>& log) {
  std::string out = "epoch,l_vote,l_age,l_sex,l_reg,l_wd,total,val_brier\n";
  for (const auto& e : log) {
    out += std::to_string(e.epoch) + "," + format_double(e.train.l_vote) + "," + format_double(e.train.l_age) + "," +
           format_double(e.train.l_sex) + "," + format_double(e.train.l_reg) + "," + format_double(e.train.l_wd) +
           "," + format_double(e.train.total) + "," + (e.evaluated ? format_double(e.val_brier) : "") + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ablation

AblationSpec AblationSpec::standard() {
  return AblationSpec{{{false, false, false}, {true, false, false}, {true, true, false}, {true, true, true}}};
}

void AblationSpec::validate() const {
  if (triples.empty()) throw ConfigError("ablation spec needs at least one (B, V, M) triple");
  for (std::size_t i = 0; i < triples.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (triples[i] == triples[j]) throw ConfigError("ablation spec lists a triple twice");
    }
  }
}

AblationSpec parse_triples(const std::string& text) {
  AblationSpec spec;
  std::string normalized = text;
  std::replace(normalized.begin(), normalized.end(), ';', ' ');
  std::istringstream in(normalized);
  std::string item;
  while (in >> item) {
    int b = -1, v = -1, m = -1;
    char tail = 0;
    if (std::sscanf(item.c_str(), "%d,%d,%d%c", &b, &v, &m, &tail) != 3 || b < 0 || b > 1 || v < 0 || v > 1 ||
        m < 0 || m > 1) {
      throw ConfigError("bad triple '" + item + "': expected B,V,M with each 0 or 1");
    }
    spec.triples.push_back({b == 1, v == 1, m == 1});
  }
  spec.validate();
  return spec;
}

namespace {

MetricSummary summarize_metric(const std::vector<CalibrationReport>& reports, double CalibrationReport::*field) {
  MetricSummary s;
  const double n = static_cast<double>(reports.size());
  for (const auto& r : reports) s.mean += r.*field;
  s.mean /= n;
  if (reports.size() > 1) {
    double sq = 0.0;
    for (const auto& r : reports) sq += (r.*field - s.mean) * (r.*field - s.mean);
    s.sd = std::sqrt(sq / (n - 1.0));
  }
  return s;
}

}  // namespace

std::vector<AblationRow> run_ablation(const AblationSpec& spec, const AblationOptions& options,
                                      const Dataset& dataset, const RunCallback& on_run) {
  spec.validate();
  if (options.seeds.empty()) throw ConfigError("ablation needs at least one seed");
  const Splits splits = split(dataset, options.train.train_frac, options.train.val_frac, options.train.split_seed);
  if (splits.test.empty()) throw InputError("ablation needs a non-empty test split");

  const std::size_t n_seeds = options.seeds.size();
  const std::size_t n_tasks = spec.triples.size() * n_seeds;
  std::vector<CalibrationReport> reports(n_tasks);
  std::atomic<std::size_t> next{0};
  std::mutex callback_mutex;
  std::exception_ptr failure;

  auto worker = [&] {
    for (std::size_t task = next++; task < n_tasks; task = next++) {
      try {
        const AblationTriple& triple = spec.triples[task / n_seeds];
        const std::uint64_t seed = options.seeds[task % n_seeds];
        VVitConfig mc = options.base_model;
        mc.use_binocular = triple.use_binocular;
        mc.use_voting = triple.use_voting;
        mc.use_metadata = triple.use_metadata;
        TrainConfig tc = options.train;
        tc.seed = seed;
        tc.checkpoint_path.clear();
        TrainResult trained = train(mc, tc, dataset, splits);
        const Prediction pred = predict(trained.model, dataset, splits.test, seed);
        reports[task] = calibration_report(pred.records, options.bins, options.threshold);
        if (on_run) {
          std::lock_guard lock(callback_mutex);
          on_run(AblationRun{triple, seed, reports[task], std::move(trained.model)});
        }
      } catch (...) {
        std::lock_guard lock(callback_mutex);
        if (!failure) failure = std::current_exception();
        next = n_tasks;
      }
    }
  };

  const std::size_t jobs = std::clamp<std::size_t>(options.jobs, 1, n_tasks);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < jobs; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<AblationRow> rows;
  for (std::size_t t = 0; t < spec.triples.size(); ++t) {
    AblationRow row;
    row.triple = spec.triples[t];
    row.per_seed.assign(reports.begin() + static_cast<std::ptrdiff_t>(t * n_seeds),
                        reports.begin() + static_cast<std::ptrdiff_t>((t + 1) * n_seeds));
    row.recall = summarize_metric(row.per_seed, &CalibrationReport::recall);
    row.f1 = summarize_metric(row.per_seed, &CalibrationReport::f1);
    row.brier = summarize_metric(row.per_seed, &CalibrationReport::brier);
    row.auroc = summarize_metric(row.per_seed, &CalibrationReport::auroc);
    row.ece = summarize_metric(row.per_seed, &CalibrationReport::ece);
    row.accuracy = summarize_metric(row.per_seed, &CalibrationReport::accuracy);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "B,V,M,recall,recall_sd,f1,f1_sd,brier,brier_sd,auroc,auroc_sd,ece,ece_sd,acc,acc_sd\n";
  auto cell = [](const MetricSummary& m) { return format_double(m.mean) + "," + format_double(m.sd); };
  for (const auto& r : rows) {
    out += std::string(r.triple.use_binocular ? "1" : "0") + "," + (r.triple.use_voting ? "1" : "0") + "," +
           (r.triple.use_metadata ? "1" : "0") + "," + cell(r.recall) + "," + cell(r.f1) + "," + cell(r.brier) +
           "," + cell(r.auroc) + "," + cell(r.ece) + "," + cell(r.accuracy) + "\n";
  }
  return out;
}

}  // namespace vvit
