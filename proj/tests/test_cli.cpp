/* Copyright 2026 The SegPL Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "segpl/cli.hpp"
#include "test_util.hpp"

namespace segpl {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

nlohmann::json load(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

class CliTest : public ::testing::Test {
 protected:
  testing::TempDir tmp{"cli"};
  std::string root() const { return tmp.path().string(); }
  std::string data() const { return (tmp / "data").string(); }

  void SetUp() override {
    setenv(cli::kOutputRootEnv, root().c_str(), 1);
    ASSERT_EQ(run({"generate", "--out", data(), "--image-size", "32", "--n-labelled", "2",
                   "--n-unlabelled", "4", "--n-val", "2", "--n-test", "4"}),
              0)
        << err.str();
  }
  void TearDown() override { unsetenv(cli::kOutputRootEnv); }

  int run(std::vector<std::string> args) {
    out.str("");
    err.str("");
    return cli::run(std::move(args), out, err);
  }

  int train(const std::string& dir, const std::string& variant, std::vector<std::string> extra = {}) {
    std::vector<std::string> a = {"train", "--data", data(), "--out", dir, "--variant", variant,
                                  "--steps", "6", "--base-width", "4", "--depth", "2",
                                  "--ratio", "1", "--alpha", "0.3", "--val-every", "3"};
    a.insert(a.end(), extra.begin(), extra.end());
    return run(a);
  }

  std::ostringstream out, err;
};

int run_binary(const std::string& args) {
  const std::string cmd = std::string(SEGPL_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(CliPresetTest, GeneratePresetSizes) {
  testing::TempDir tmp("cli-preset");
  std::ostringstream out, err;
  ASSERT_EQ(cli::run({"generate", "--preset", "synthetic-fast", "--out", (tmp / "d").string(),
                      "--n-unlabelled", "3", "--n-test", "2"},
                     out, err),
            0);
  const auto m = load(tmp / "d" / "dataset.json");
  EXPECT_EQ(m["splits"]["labelled"].size(), 4u);
  EXPECT_EQ(m["splits"]["unlabelled"].size(), 3u);
  EXPECT_EQ(m["splits"]["val"].size(), 8u);
  EXPECT_EQ(m["splits"]["test"].size(), 2u);
  EXPECT_EQ(m["image_size"], 64);
  EXPECT_EQ(out.str(), fs::absolute(tmp / "d" / "dataset.json").string() + "\n");
}

TEST_F(CliTest, GenerateRefusesOverwriteWithoutForce) {
  EXPECT_EQ(run({"generate", "--out", data()}), 2);
  EXPECT_NE(err.str().find("--force"), std::string::npos);
  EXPECT_EQ(run({"generate", "--out", data(), "--image-size", "32", "--n-test", "1", "--force"}), 0);
  EXPECT_EQ(load(tmp / "data" / "dataset.json")["splits"]["test"].size(), 1u);
}

TEST_F(CliTest, TrainWritesRunDirectoryUnderOutputRoot) {
  ASSERT_EQ(run({"train", "--data", data(), "--steps", "2", "--base-width", "4", "--depth", "2",
                 "--ratio", "1"}),
            0)
      << err.str();
  const fs::path dir = tmp / "train-segpl-seed0";
  for (const char* f : {"final.ckpt", "train_log.csv", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  EXPECT_FALSE(fs::exists(dir / ".lock"));
  const auto m = load(dir / "manifest.json");
  EXPECT_EQ(m["command"], "train");
  EXPECT_EQ(m["seed"], 0);
  EXPECT_EQ(m["argv"][0], "train");
  EXPECT_EQ(m["data"], fs::absolute(data()).string());
  EXPECT_TRUE(m.contains("started_at") && m.contains("finished_at") && m.contains("code_version"));
}

TEST_F(CliTest, TrainTwiceGivesIdenticalLog) {
  ASSERT_EQ(train(root() + "/a", "segpl"), 0) << err.str();
  ASSERT_EQ(train(root() + "/b", "segpl"), 0) << err.str();
  EXPECT_EQ(slurp(tmp / "a" / "train_log.csv"), slurp(tmp / "b" / "train_log.csv"));
  EXPECT_EQ(load(tmp / "a" / "manifest.json")["metrics"], load(tmp / "b" / "manifest.json")["metrics"]);
}

TEST_F(CliTest, SupervisedOnlyLogsZeroUnsupervisedLoss) {
  ASSERT_EQ(train(root() + "/sup", "supervised_only"), 0) << err.str();
  std::istringstream log(slurp(tmp / "sup" / "train_log.csv"));
  std::string line;
  std::getline(log, line);
  std::vector<std::string> header;
  {
    std::istringstream h(line.substr(0, line.find('\r')));
    for (std::string c; std::getline(h, c, ',');) header.push_back(c);
  }
  const auto col = std::find(header.begin(), header.end(), "unsupervised") - header.begin();
  ASSERT_LT(col, static_cast<long>(header.size()));
  int rows = 0;
  while (std::getline(log, line)) {
    std::istringstream r(line);
    std::string c;
    for (long i = 0; i <= col; ++i) std::getline(r, c, ',');
    EXPECT_EQ(std::stod(c), 0.0);
    ++rows;
  }
  EXPECT_EQ(rows, 6);
}

TEST_F(CliTest, PriorFlagRecordedInManifest) {
  ASSERT_EQ(train(root() + "/vi", "segpl_vi", {"--prior", "0.4,0.2"}), 0) << err.str();
  const auto cfg = load(tmp / "vi" / "manifest.json")["config"];
  EXPECT_EQ(cfg["variant"], "segpl_vi");
  EXPECT_DOUBLE_EQ(cfg["prior"]["mu_beta"].get<double>(), 0.4);
  EXPECT_DOUBLE_EQ(cfg["prior"]["sigma_beta"].get<double>(), 0.2);
  EXPECT_EQ(train(root() + "/bad", "segpl_vi", {"--prior", "0.4"}), 2);
  EXPECT_EQ(train(root() + "/bad", "segpl_vi", {"--prior", "1.4,0.1"}), 2);
}

TEST_F(CliTest, ConfigFileOverlaidByFlags) {
  std::ofstream(tmp / "c.json") << R"({"total_steps": 3, "learning_rate": 0.02, "base_width": 4, "depth": 2})";
  ASSERT_EQ(run({"train", "--data", data(), "--config", root() + "/c.json", "--out", root() + "/c",
                 "--lr", "0.05", "--ratio", "1"}),
            0)
      << err.str();
  const auto cfg = load(tmp / "c" / "manifest.json")["config"];
  EXPECT_EQ(cfg["total_steps"], 3);
  EXPECT_DOUBLE_EQ(cfg["learning_rate"].get<double>(), 0.05);
  std::ofstream(tmp / "bad.json") << R"({"total_step": 3})";
  EXPECT_EQ(run({"train", "--data", data(), "--config", root() + "/bad.json", "--out", root() + "/x"}), 2);
  EXPECT_NE(err.str().find("total_step"), std::string::npos);
}

TEST_F(CliTest, RunDirectoryRefusedWithoutForceAndWhileLocked) {
  ASSERT_EQ(train(root() + "/r", "segpl"), 0);
  EXPECT_EQ(train(root() + "/r", "segpl"), 2);
  EXPECT_NE(err.str().find("--force"), std::string::npos);
  EXPECT_EQ(train(root() + "/r", "segpl", {"--force"}), 0);
  std::ofstream(tmp / "r" / ".lock") << "";
  EXPECT_EQ(train(root() + "/r", "segpl", {"--force"}), 2);
  EXPECT_NE(err.str().find("locked"), std::string::npos);
}

TEST_F(CliTest, EvalPerfectPredictorAndBaseline) {
  // Constant-foreground model on a test set whose labels are all foreground.
  Tensor<float> ones(Shape4{1, 1, 32, 32});
  ones.fill(1.0f);
  const auto manifest = load(tmp / "data" / "dataset.json");
  for (const auto& e : manifest["splits"]["test"]) {
    write_array(tmp / "data" / e["label"].get<std::string>(), ones, ArrayKind::kLabel);
  }
  TrainConfig tc;
  tc.base_width = 4;
  tc.depth = 2;
  UNet<float> m(tc.model_config(1, 1));
  m.zero_output_layer();
  for (auto* p : m.parameters()) {
    if (p->name == "output.bias") std::fill(p->value.begin(), p->value.end(), 20.0f);
  }
  save_checkpoint(tmp / "oracle.ckpt", m, tc);

  ASSERT_EQ(run({"eval", "--checkpoint", root() + "/oracle.ckpt", "--data", data(), "--out", root() + "/e"}),
            0)
      << err.str();
  const auto s = load(tmp / "e" / "summary.json");
  EXPECT_EQ(s["mean_iou"], 1.0);
  EXPECT_EQ(s["std_iou"], 0.0);
  EXPECT_EQ(s["cases"], 4);
  EXPECT_EQ(slurp(tmp / "e" / "per_case.csv"),
            "case,iou\r\n000000,1\r\n000001,1\r\n000002,1\r\n000003,1\r\n");

  ASSERT_EQ(run({"eval", "--checkpoint", root() + "/oracle.ckpt", "--data", data(), "--out", root() + "/e2",
                 "--baseline", root() + "/e/per_case.csv"}),
            0)
      << err.str();
  std::istringstream ba(slurp(tmp / "e2" / "bland_altman.csv"));
  std::string line;
  std::getline(ba, line);
  int rows = 0;
  while (std::getline(ba, line)) {
    EXPECT_EQ(line, "1,0\r");
    ++rows;
  }
  EXPECT_EQ(rows, 4);
}

TEST_F(CliTest, EvalToolsOnTrainedCheckpoints) {
  ASSERT_EQ(train(root() + "/seg", "segpl"), 0);
  ASSERT_EQ(train(root() + "/vi", "segpl_vi"), 0);
  const std::string seg = root() + "/seg/final.ckpt", vi = root() + "/vi/final.ckpt";

  ASSERT_EQ(run({"attack", "--checkpoint", seg, "--data", data(), "--out", root() + "/att"}), 0) << err.str();
  std::istringstream att(slurp(tmp / "att" / "attack_curve.csv"));
  std::string line;
  std::getline(att, line);
  EXPECT_EQ(line.rfind("epsilon,", 0), 0u);
  int rows = 0;
  while (std::getline(att, line)) ++rows;
  EXPECT_EQ(rows, 4);

  ASSERT_EQ(run({"ood", "--checkpoint", seg, "--data", data(), "--out", root() + "/ood", "--gammas", "0,1"}), 0)
      << err.str();
  EXPECT_EQ(load(tmp / "ood" / "manifest.json")["metrics"]["curve"].size(), 2u);

  EXPECT_EQ(run({"uncertainty", "--checkpoint", seg, "--data", data(), "--out", root() + "/u0"}), 2);
  EXPECT_NE(err.str().find("threshold head"), std::string::npos);
  EXPECT_EQ(run({"eval", "--checkpoint", seg, "--data", data(), "--posterior-mean", "--out", root() + "/pm"}),
            2);

  ASSERT_EQ(run({"uncertainty", "--checkpoint", vi, "--data", data(), "--out", root() + "/u"}), 0) << err.str();
  const auto s = load(tmp / "u" / "summary.json");
  EXPECT_EQ(s["samples"], 5);
  const StoredArray f = read_array(tmp / "u" / "frequency" / "000000_frequency");
  for (float v : f.data.storage()) EXPECT_EQ(v * 5.0f, std::round(v * 5.0f));
}

TEST_F(CliTest, ReplayFromManifestReproducesOutputs) {
  ASSERT_EQ(train(root() + "/t", "segpl"), 0);
  ASSERT_EQ(run({"eval", "--checkpoint", root() + "/t/final.ckpt", "--data", data(), "--out", root() + "/e"}), 0);
  ASSERT_EQ(run({"--from-manifest", root() + "/t/manifest.json", "--replay-out", root() + "/t2"}), 0)
      << err.str();
  EXPECT_EQ(slurp(tmp / "t" / "train_log.csv"), slurp(tmp / "t2" / "train_log.csv"));
  EXPECT_EQ(slurp(tmp / "t" / "final.ckpt"), slurp(tmp / "t2" / "final.ckpt"));
  ASSERT_EQ(run({"--from-manifest", root() + "/e/manifest.json", "--replay-out", root() + "/e2"}), 0)
      << err.str();
  EXPECT_EQ(slurp(tmp / "e" / "per_case.csv"), slurp(tmp / "e2" / "per_case.csv"));
  EXPECT_EQ(run({"eval", "--from-manifest", root() + "/e/manifest.json"}), 2);
}

TEST_F(CliTest, BinaryExitCodes) {
  EXPECT_EQ(run_binary("--help"), 0);
  EXPECT_EQ(run_binary("train"), 2);
  EXPECT_EQ(run_binary("train --data " + data() + " --variant nonsense --out " + root() + "/x"), 2);
  EXPECT_EQ(run_binary("eval --checkpoint " + root() + "/missing.ckpt --data " + data() + " --out " + root() +
                       "/x"),
            3);
  EXPECT_EQ(run_binary("train --data " + root() + "/nowhere --out " + root() + "/x"), 3);
  EXPECT_EQ(run_binary("generate --out " + root() + "/g --image-size 32 --n-labelled 1 --n-unlabelled 1"
                       " --n-val 0 --n-test 1"),
            0);
  EXPECT_TRUE(fs::exists(tmp / "g" / "dataset.json"));
}

TEST_F(CliTest, DivergenceExitsFourAndSavesParameters) {
  EXPECT_EQ(train(root() + "/nan", "segpl", {"--lr", "1e30"}), 4) << err.str();
  EXPECT_TRUE(fs::exists(tmp / "nan" / "last.ckpt"));
  EXPECT_TRUE(load(tmp / "nan" / "manifest.json").contains("error"));
}

}  // namespace
}  // namespace segpl
