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

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include "test_support.hpp"
#include "vvit/data.hpp"
#include "vvit/metrics.hpp"
#include "vvit/model.hpp"
#include "vvit/train.hpp"

namespace vvit {
namespace {

namespace fs = std::filesystem;
using testing::read_file;
using testing::run_command;
using testing::write_file;

constexpr const char* kCli = VVIT_CLI_PATH;

constexpr const char* kTinyGenerator = "n_samples = 40\nimage_height = 16\nimage_width = 16\nseed = 3\n";
constexpr const char* kTinyModel =
    "model_dim = 16\nnum_heads = 2\nffn_dim = 32\nhead_hidden = 16\nencoder_depth = 1\n"
    "cross_blocks = 2\nimage_height = 16\nimage_width = 16\npatch_size = 4\nvotes = 4\n";
constexpr const char* kTinyTrain = "epochs = 2\nbatch_size = 16\nseed = 1\n";

std::size_t count_lines(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

testing::CommandResult cli(std::vector<std::string> args, const std::vector<std::string>& env = {}) {
  args.insert(args.begin(), kCli);
  return run_command(args, env);
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = testing::make_temp_dir("cli");
    write_file(dir_ / "gen.cfg", kTinyGenerator);
    write_file(dir_ / "model.cfg", kTinyModel);
    write_file(dir_ / "train.cfg", kTinyTrain);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string p(const std::string& leaf) const { return (dir_ / leaf).string(); }

  // gen-data + train into `run`; returns the dataset path.
  std::string trained(const std::string& run) {
    const std::string data = p(run + ".jsonl");
    auto g = cli({"gen-data", "--config", p("gen.cfg"), "--out", data});
    EXPECT_EQ(g.exit_code, 0) << g.err;
    auto t = cli({"train", "--data", data, "--model-config", p("model.cfg"), "--train-config", p("train.cfg"),
                  "--out", p(run)});
    EXPECT_EQ(t.exit_code, 0) << t.err;
    return data;
  }

  fs::path dir_;
};

TEST_F(CliTest, HelpListsSubcommandsAndFlags) {
  auto r = cli({"--help"});
  EXPECT_EQ(r.exit_code, 0);
  for (const char* sub : {"gen-data", "train", "eval", "ablate", "report", "attn"}) {
    EXPECT_NE(r.out.find(sub), std::string::npos) << sub;
  }
  auto e = cli({"eval", "--help"});
  EXPECT_EQ(e.exit_code, 0);
  for (const char* flag : {"--checkpoint", "--data", "--out", "--bins", "--threshold"}) {
    EXPECT_NE(e.out.find(flag), std::string::npos) << flag;
  }
  auto a = cli({"attn", "--help"});
  for (const char* flag : {"--sample-id", "--block", "--eye"}) EXPECT_NE(a.out.find(flag), std::string::npos) << flag;
}

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(cli({}).exit_code, 2);
  EXPECT_EQ(cli({"frobnicate"}).exit_code, 2);
  EXPECT_EQ(cli({"eval", "--data", p("x.jsonl")}).exit_code, 2);
  EXPECT_EQ(cli({"gen-data", "--config", p("nope.cfg"), "--out", p("d.jsonl")}).exit_code, 2);
}

TEST_F(CliTest, MissingDataFileNamesThePath) {
  const std::string missing = p("absent.jsonl");
  auto r = cli({"train", "--data", missing, "--out", p("run")});
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find(missing), std::string::npos) << r.err;
}

TEST_F(CliTest, BadGeneratorConfigExitsTwo) {
  write_file(dir_ / "bad.cfg", "rho = 7\n");
  auto r = cli({"gen-data", "--config", p("bad.cfg"), "--out", p("d.jsonl")});
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find("rho"), std::string::npos) << r.err;
}

TEST_F(CliTest, GenDataWritesConfiguredCountAndSummary) {
  auto r = cli({"gen-data", "--config", p("gen.cfg"), "--out", p("d.jsonl")});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_EQ(count_lines(read_file(dir_ / "d.jsonl")), 41u);  // header + 40 samples
  EXPECT_NE(r.out.find("40"), std::string::npos);
}

TEST_F(CliTest, GenDataWithZeroSamplesWritesHeaderOnly) {
  write_file(dir_ / "zero.cfg", "n_samples = 0\n");
  auto r = cli({"gen-data", "--config", p("zero.cfg"), "--out", p("z.jsonl")});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_EQ(count_lines(read_file(dir_ / "z.jsonl")), 1u);
  EXPECT_EQ(read_dataset(dir_ / "z.jsonl").size(), 0u);
}

TEST_F(CliTest, GenDataSeedIsDeterministic) {
  ASSERT_EQ(cli({"gen-data", "--config", p("gen.cfg"), "--seed", "11", "--out", p("a.jsonl")}).exit_code, 0);
  ASSERT_EQ(cli({"gen-data", "--config", p("gen.cfg"), "--seed", "11", "--out", p("b.jsonl")}).exit_code, 0);
  ASSERT_EQ(cli({"gen-data", "--config", p("gen.cfg"), "--seed", "12", "--out", p("c.jsonl")}).exit_code, 0);
  EXPECT_EQ(read_file(dir_ / "a.jsonl"), read_file(dir_ / "b.jsonl"));
  EXPECT_NE(read_file(dir_ / "a.jsonl"), read_file(dir_ / "c.jsonl"));
}

TEST_F(CliTest, OutDirectoryFallsBackToEnvironment) {
  const std::string env_dir = p("envout");
  auto r = cli({"gen-data", "--config", p("gen.cfg")}, {"VVIT_OUT_DIR=" + env_dir});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_TRUE(fs::exists(fs::path(env_dir) / "dataset.jsonl"));
  EXPECT_EQ(cli({"gen-data", "--config", p("gen.cfg")}, {"VVIT_OUT_DIR="}).exit_code, 2);
}

TEST_F(CliTest, TrainAndEvalRerunsAreByteIdentical) {
  const std::string data = trained("run1");
  ASSERT_EQ(cli({"train", "--data", data, "--model-config", p("model.cfg"), "--train-config", p("train.cfg"),
                 "--out", p("run2")})
                .exit_code,
            0);
  for (const char* f : {"model.ckpt", "loss.csv", "splits.json"}) {
    ASSERT_TRUE(fs::exists(dir_ / "run1" / f)) << f;
    EXPECT_EQ(read_file(dir_ / "run1" / f), read_file(dir_ / "run2" / f)) << f;
  }
  for (const char* run : {"run1", "run2"}) {
    auto e = cli({"eval", "--checkpoint", p(std::string(run) + "/model.ckpt"), "--data", data, "--out",
                  p(std::string(run) + "/eval")});
    ASSERT_EQ(e.exit_code, 0) << e.err;
  }
  for (const char* f : {"metrics.json", "reliability.csv", "roc.csv"}) {
    EXPECT_EQ(read_file(dir_ / "run1" / "eval" / f), read_file(dir_ / "run2" / "eval" / f)) << f;
  }
}

TEST_F(CliTest, EvalMatchesDirectLibraryCall) {
  const std::string data = trained("run");
  auto e = cli({"eval", "--checkpoint", p("run/model.ckpt"), "--data", data, "--out", p("eval"), "--bins", "7",
                "--threshold", "0.4", "--seed", "9", "--splits", p("run/splits.json"), "--split", "val"});
  ASSERT_EQ(e.exit_code, 0) << e.err;

  const Dataset ds = read_dataset(data);
  const VVitModel model = VVitModel::load(dir_ / "run" / "model.ckpt");
  const Splits splits = splits_from_json(ds, read_file(dir_ / "run" / "splits.json"), "splits.json");
  const Prediction pred = predict(model, ds, splits.val, 9);
  const CalibrationReport report = calibration_report(pred.records, 7, 0.4);
  write_report(dir_ / "lib", report);
  for (const char* f : {"metrics.json", "reliability.csv", "roc.csv"}) {
    EXPECT_EQ(read_file(dir_ / "eval" / f), read_file(dir_ / "lib" / f)) << f;
  }
}

TEST_F(CliTest, PerfectOracleCheckpointScoresPerfectly) {
  write_dataset(dir_ / "sep.jsonl", testing::make_separable_dataset(12, 20));
  testing::make_oracle_model().save(dir_ / "oracle.ckpt");
  auto e = cli({"eval", "--checkpoint", p("oracle.ckpt"), "--data", p("sep.jsonl"), "--out", p("eval")});
  ASSERT_EQ(e.exit_code, 0) << e.err;
  EXPECT_NE(e.out.find("ece 0.0000"), std::string::npos) << e.out;
  EXPECT_NE(e.out.find("auroc 1.0000"), std::string::npos) << e.out;
  const auto metrics = read_file(dir_ / "eval" / "metrics.json");
  EXPECT_NE(metrics.find("\"ece\": 0.0"), std::string::npos) << metrics;
  EXPECT_NE(metrics.find("\"auroc\": 1.0"), std::string::npos) << metrics;

  auto one = cli({"eval", "--checkpoint", p("oracle.ckpt"), "--data", p("sep.jsonl"), "--out", p("one"), "--bins",
                  "1"});
  ASSERT_EQ(one.exit_code, 0) << one.err;
  EXPECT_EQ(count_lines(read_file(dir_ / "one" / "reliability.csv")), 2u);  // header + one bin
}

TEST_F(CliTest, IncompatibleCheckpointExitsTwo) {
  const std::string data = trained("run");
  testing::make_oracle_model().save(dir_ / "oracle.ckpt");  // 8x8 images against a 16x16 dataset
  auto e = cli({"eval", "--checkpoint", p("oracle.ckpt"), "--data", data, "--out", p("eval")});
  EXPECT_EQ(e.exit_code, 2) << e.err;
  write_file(dir_ / "junk.ckpt", "not a checkpoint");
  EXPECT_EQ(cli({"eval", "--checkpoint", p("junk.ckpt"), "--data", data, "--out", p("eval")}).exit_code, 2);
  EXPECT_EQ(cli({"eval", "--checkpoint", p("run/model.ckpt"), "--data", data, "--split", "val"}).exit_code, 2);
}

TEST_F(CliTest, AttnWritesGridAndRejectsBadBlocks) {
  const std::string data = trained("run");
  const std::vector<std::string> base = {"attn", "--checkpoint", p("run/model.ckpt"), "--data", data};
  auto with = [&](std::vector<std::string> extra) {
    std::vector<std::string> args = base;
    args.insert(args.end(), extra.begin(), extra.end());
    return cli(args);
  };
  auto ok = with({"--sample-id", "s000002", "--block", "1", "--out", p("a/map.csv")});
  ASSERT_EQ(ok.exit_code, 0) << ok.err;
  const std::string grid = read_file(dir_ / "a" / "map.csv");
  EXPECT_EQ(count_lines(grid), 4u);
  double sum = 0.0;
  for (std::size_t pos = 0; pos < grid.size();) {
    std::size_t used = 0;
    const double v = std::stod(grid.substr(pos), &used);
    EXPECT_GE(v, 0.0);
    sum += v;
    pos += used + 1;
  }
  EXPECT_LE(sum, 1.0 + 1e-9);
  EXPECT_NE(read_file(dir_ / "a" / "map.json").find("\"disc\""), std::string::npos);

  EXPECT_EQ(with({"--sample-id", "s000002", "--block", "2", "--out", p("b.csv")}).exit_code, 2);
  EXPECT_EQ(with({"--sample-id", "s000002", "--block", "-1", "--out", p("b.csv")}).exit_code, 2);
  EXPECT_EQ(with({"--sample-id", "s000002", "--eye", "left", "--out", p("b.csv")}).exit_code, 2);
  EXPECT_EQ(with({"--sample-id", "nobody", "--out", p("b.csv")}).exit_code, 2);
  EXPECT_EQ(with({"--sample-id", "s000002", "--block", "all", "--eye", "fellow", "--out", p("c.csv")}).exit_code, 0);
}

TEST_F(CliTest, AblateSingleTripleGivesOneRow) {
  ASSERT_EQ(cli({"gen-data", "--config", p("gen.cfg"), "--out", p("d.jsonl")}).exit_code, 0);
  write_file(dir_ / "train1.cfg", "epochs = 1\nbatch_size = 16\n");
  auto r = cli({"ablate", "--data", p("d.jsonl"), "--seeds", "4", "--triples", "1,1,0", "--model-config",
                p("model.cfg"), "--train-config", p("train1.cfg"), "--out", p("abl")});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const std::string csv = read_file(dir_ / "abl" / "ablation.csv");
  EXPECT_EQ(count_lines(csv), 2u);
  EXPECT_EQ(csv.substr(csv.find('\n') + 1, 6), "1,1,0,");
  EXPECT_NE(r.out.find("AUROC"), std::string::npos);

  auto rep = cli({"report", "--in", p("abl/ablation.csv")});
  EXPECT_EQ(rep.exit_code, 0);
  EXPECT_EQ(rep.out, r.out);
  EXPECT_EQ(cli({"ablate", "--data", p("d.jsonl"), "--seeds", "1", "--triples", "1,2,0", "--out", p("x")}).exit_code,
            2);
}

TEST_F(CliTest, DivergentTrainingExitsThree) {
  const std::string data = p("d.jsonl");
  ASSERT_EQ(cli({"gen-data", "--config", p("gen.cfg"), "--out", data}).exit_code, 0);
  write_file(dir_ / "wild.cfg", "epochs = 3\nbatch_size = 16\noptimizer = sgd\nlearning_rate = 1e300\n");
  auto r = cli({"train", "--data", data, "--model-config", p("model.cfg"), "--train-config", p("wild.cfg"), "--out",
                p("run")});
  EXPECT_EQ(r.exit_code, 3) << r.err;
}

}  // namespace
}  // namespace vvit
