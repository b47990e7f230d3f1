// Copyright 2026 The minstp Authors.
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


#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "minstp/error.h"
#include "minstp_cli/cli.h"

namespace minstp::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("minstp_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  Outcome call(std::vector<std::string> args) const {
    args.push_back("--run-dir");
    args.push_back(path("runs"));
    std::ostringstream out, err;
    const int code = run(args, out, err);
    return {code, out.str(), err.str()};
  }

  static std::string slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }

  fs::path dir_;
};

TEST_F(CliTest, GenThenEvalOnIdenticalMeasures) {
  const std::string r = path("r.csv");
  ASSERT_EQ(call({"gen", "--family", "rings", "--n", "8", "--seed", "0", "--out", r}).code, kExitOk);
  const Outcome e = call({"eval", "--mu", r, "--nu", r, "--slicer", "random", "--seed", "1"});
  ASSERT_EQ(e.code, kExitOk) << e.err;
  const json j = json::parse(e.out);
  EXPECT_EQ(j["stp_cost"].get<double>(), 0.0);
  EXPECT_EQ(j["ot_cost"].get<double>(), 0.0);
  EXPECT_TRUE(fs::exists(fs::path(j["run_dir"].get<std::string>()) / "config.json"));
  EXPECT_TRUE(fs::exists(fs::path(j["run_dir"].get<std::string>()) / "report.json"));
}

TEST_F(CliTest, BatchLargerThanDataIsConfigError) {
  const std::string r = path("r.csv");
  ASSERT_EQ(call({"gen", "--family", "rings", "--n", "16", "--out", r}).code, kExitOk);
  const Outcome t = call({"train", "--mu", r, "--nu", r, "--batch-size", "32"});
  EXPECT_EQ(t.code, kExitConfig);
  const json e = json::parse(t.err);
  EXPECT_EQ(e["error"], "config");
  EXPECT_NE(e["field"].get<std::string>().find("batch_size"), std::string::npos);
  EXPECT_NE(e["message"].get<std::string>().find("batch_size"), std::string::npos);
  EXPECT_FALSE(fs::exists(path("runs")));
}

TEST_F(CliTest, MissingFile) {
  const Outcome e = call({"eval", "--mu", path("nope.csv"), "--nu", path("nope.csv")});
  EXPECT_EQ(e.code, kExitMissingFile);
  EXPECT_EQ(json::parse(e.err)["error"], "io");
}

TEST_F(CliTest, UnknownKeyRejected) {
  const Outcome e = call({"eval", "--set", "train.learning_rate=3"});
  EXPECT_EQ(e.code, kExitConfig);
  std::ofstream(path("c.cfg")) << "# comment\ntrain.lr = 0.1\nbogus.key = 1\n";
  EXPECT_EQ(call({"train", "--config", path("c.cfg")}).code, kExitConfig);
}

TEST_F(CliTest, UnknownFlagAndMalformedValue) {
  EXPECT_EQ(call({"train", "--no-such-flag"}).code, kExitConfig);
  EXPECT_EQ(call({"train", "--family", "rings", "--n", "8", "--lr", "fast"}).code, kExitConfig);
}

TEST_F(CliTest, DivergenceIsNumericalFailure) {
  // Finite coordinates whose squared distances overflow.
  const std::string mu = path("huge_mu.csv"), nu = path("huge_nu.csv");
  {
    std::ofstream a(mu), b(nu);
    for (int i = 0; i < 8; ++i) {
      a << i * 1e200 << "," << -i * 1e200 << "\n";
      b << -i * 1e200 << "," << i * 1e200 << "\n";
    }
  }
  const Outcome t = call({"train", "--mu", mu, "--nu", nu, "--epochs", "5", "--batch-size", "4"});
  EXPECT_EQ(t.code, kExitNumerical) << t.out << t.err;
  EXPECT_EQ(json::parse(t.err)["error"], "numerical");
}

TEST_F(CliTest, TrainIsReproducibleAndLeavesInputsAlone) {
  const std::string mu = path("mu.csv"), nu = path("nu.csv");
  ASSERT_EQ(call({"gen", "--family", "moons", "--n", "32", "--out", mu}).code, kExitOk);
  ASSERT_EQ(call({"gen", "--family", "moons", "--n", "32", "--side", "target", "--out", nu}).code,
            kExitOk);
  const std::string before_mu = slurp(mu), before_nu = slurp(nu);
  const std::vector<std::string> args{"train", "--mu", mu, "--nu", nu, "--epochs", "5",
                                      "--batch-size", "8", "--batches", "2", "--seed", "3"};
  const Outcome a = call(args);
  ASSERT_EQ(a.code, kExitOk) << a.err;
  const fs::path run_a = json::parse(a.out)["run_dir"].get<std::string>();
  const std::string slicer_a = slurp((run_a / "slicer.json").string());
  const std::string trace_a = slurp((run_a / "trace.jsonl").string());
  fs::remove_all(run_a);
  const Outcome b = call(args);
  ASSERT_EQ(b.code, kExitOk);
  const fs::path run_b = json::parse(b.out)["run_dir"].get<std::string>();
  EXPECT_EQ(run_a, run_b);
  EXPECT_EQ(slurp((run_b / "slicer.json").string()), slicer_a);
  // Losses match exactly; only wall-clock fields may differ.
  std::istringstream la(trace_a), lb(slurp((run_b / "trace.jsonl").string()));
  std::string x, y;
  std::size_t lines = 0;
  while (std::getline(la, x) && std::getline(lb, y)) {
    EXPECT_EQ(json::parse(x)["minibatch_loss"], json::parse(y)["minibatch_loss"]);
    ++lines;
  }
  EXPECT_EQ(lines, 5u);
  EXPECT_EQ(slurp(mu), before_mu);
  EXPECT_EQ(slurp(nu), before_nu);

  // A checkpoint written by train evaluates to the reported final cost.
  const Outcome e = call({"eval", "--mu", mu, "--nu", nu, "--slicer",
                          (run_b / "slicer.json").string()});
  ASSERT_EQ(e.code, kExitOk);
  EXPECT_EQ(json::parse(e.out)["stp_cost"], json::parse(b.out)["final_cost"]);

  // Refuse to overwrite an input.
  EXPECT_NE(call({"export-plan", "--mu", mu, "--nu", nu, "--out", mu}).code, kExitOk);
  EXPECT_EQ(slurp(mu), before_mu);
}

TEST_F(CliTest, ExportPlan) {
  const std::string r = path("r.csv"), plan = path("plan.csv");
  ASSERT_EQ(call({"gen", "--family", "blobs", "--n", "6", "--out", r}).code, kExitOk);
  const Outcome o = call({"export-plan", "--mu", r, "--nu", r, "--method", "ot", "--out", plan});
  ASSERT_EQ(o.code, kExitOk) << o.err;
  std::istringstream lines(slurp(plan));
  std::string line;
  std::size_t count = 0;
  while (std::getline(lines, line)) ++count;
  EXPECT_EQ(count, 6u);
  EXPECT_EQ(call({"export-plan", "--mu", r, "--nu", r, "--method", "sinkhorn", "--out", plan}).code,
            kExitConfig);
}

TEST_F(CliTest, StudyTheoryPasses) {
  const Outcome o = call({"study", "theory", "--seed", "0"});
  ASSERT_EQ(o.code, kExitOk) << o.err;
  const fs::path run = json::parse(o.out)["run_dir"].get<std::string>();
  const json report = json::parse(slurp((run / "report.json").string()));
  ASSERT_FALSE(report["checks"].empty());
  for (const auto& c : report["checks"]) EXPECT_TRUE(c["passed"].get<bool>()) << c.dump();
}

TEST(Settings, ParseAndHash) {
  const Settings s = Settings::parse("# header\n\ntrain.lr = 0.5  # trailing\ndata.n=12\n");
  EXPECT_EQ(s.get("train.lr"), "0.5");
  EXPECT_EQ(s.get("data.n"), "12");
  EXPECT_THROW(Settings::parse("train.lr 0.5\n"), ConfigError);
  EXPECT_THROW(Settings::parse("nope = 1\n"), ConfigError);
  Settings a = s, b = s;
  a.set("run.dir", "/tmp/a");
  b.set("run.dir", "/tmp/b");
  b.set("run.jobs", "4");
  EXPECT_EQ(config_hash("train", a), config_hash("train", b));
  EXPECT_NE(config_hash("train", a), config_hash("eval", a));
  b.set("train.lr", "0.25");
  EXPECT_NE(config_hash("train", a), config_hash("train", b));
  EXPECT_EQ(config_hash("train", a).size(), 16u);
  for (const auto& k : {"train.lr", "data.family", "run.seed", "output.path"})
    EXPECT_NE(std::find(known_keys().begin(), known_keys().end(), k), known_keys().end());
}

}  // namespace
}  // namespace minstp::cli
