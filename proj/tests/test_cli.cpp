#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "nmnet/eval.hpp"
#include "nmnet/synth.hpp"

namespace fs = std::filesystem;
using nmnet::cli::run;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result call(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("nmnet_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

std::size_t count_lines(const std::string& text) { return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')); }

}  // namespace

TEST_F(CliTest, SynthCountAndDeterminism) {
  const auto args = std::vector<std::string>{"synth", "--scenes", "50", "--n", "500", "--inlier-ratio", "0.4", "--seed", "7", "--out"};
  auto a = args, b = args;
  a.push_back(path("a.jsonl"));
  b.push_back(path("b.jsonl"));
  ASSERT_EQ(call(a).code, 0);
  ASSERT_EQ(call(b).code, 0);
  EXPECT_EQ(count_lines(slurp(path("a.jsonl"))), 50u);
  EXPECT_EQ(slurp(path("a.jsonl")), slurp(path("b.jsonl")));
}

TEST_F(CliTest, UsageErrors) {
  const auto r = call({"synth", "--inlier-ratio", "0", "--out", path("x.jsonl")});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(count_lines(r.err), 1u);
  EXPECT_EQ(call({"synth", "--bogus", "1", "--out", path("x.jsonl")}).code, 1);
  EXPECT_EQ(call({}).code, 1);
  EXPECT_EQ(call({"stats", "--data", path("missing.jsonl")}).code, 2);
}

TEST_F(CliTest, HelpListsEveryFlagWithDefault) {
  for (const std::string sub : {"synth", "stats", "mine", "train", "infer", "baseline", "eval"}) {
    const auto r = call({sub, "--help"});
    EXPECT_EQ(r.code, 0);
    std::istringstream lines(r.out);
    std::string line;
    bool in_options = false;
    std::string pending;
    while (std::getline(lines, line)) {
      if (line.rfind("Options:", 0) == 0) {
        in_options = true;
        continue;
      }
      if (!in_options || line.find("--") == std::string::npos || line.find("--help") != std::string::npos) continue;
      // Every flag shows a [default] unless it is required or a bare path.
      const bool ok = line.find('[') != std::string::npos || line.find("REQUIRED") != std::string::npos ||
                      line.find("TEXT") != std::string::npos;
      EXPECT_TRUE(ok) << sub << ": " << line;
    }
    const std::string snapshot = slurp(fs::path(NMNET_SNAPSHOT_DIR) / ("help_" + sub + ".txt"));
    EXPECT_EQ(r.out, snapshot) << sub;
  }
}

TEST_F(CliTest, ConfigFileAndOverride) {
  {
    std::ofstream cfg(path("run.cfg"));
    cfg << "# dataset settings\nscenes = 3\nn = 40\n\ninlier-ratio = 0.5\n";
  }
  ASSERT_EQ(call({"synth", "--config", path("run.cfg"), "--n", "30", "--out", path("d.jsonl")}).code, 0);
  const auto data = nmnet::read_dataset(path("d.jsonl"));
  ASSERT_EQ(data.size(), 3u);
  EXPECT_EQ(data[0].size(), 30u);
  EXPECT_DOUBLE_EQ(data[0].inlier_ratio(), 0.5);
  {
    std::ofstream cfg(path("bad.cfg"));
    cfg << "unknown-key = 1\n";
  }
  EXPECT_EQ(call({"synth", "--config", path("bad.cfg"), "--out", path("e.jsonl")}).code, 1);
}

TEST_F(CliTest, StatsOnAllInlierData) {
  ASSERT_EQ(call({"synth", "--scenes", "2", "--n", "40", "--inlier-ratio", "1", "--out", path("d.jsonl")}).code, 0);
  const auto r = call({"stats", "--data", path("d.jsonl"), "--ks", "4,8"});
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find(">50%          4    1.0000    1.0000"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find(">50%          8    1.0000    1.0000"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("n/a"), std::string::npos);

  const auto big = call({"stats", "--data", path("d.jsonl"), "--ks", "4,64"});
  EXPECT_EQ(big.code, 0);
  EXPECT_NE(big.err.find("InsufficientCorrespondences"), std::string::npos);
}

TEST_F(CliTest, MineWritesGraphs) {
  ASSERT_EQ(call({"synth", "--scenes", "2", "--n", "20", "--out", path("d.jsonl")}).code, 0);
  ASSERT_EQ(call({"mine", "--data", path("d.jsonl"), "--k", "4", "--out", path("g.jsonl")}).code, 0);
  const std::string first = slurp(path("g.jsonl"));
  EXPECT_EQ(count_lines(first), 2u);
  ASSERT_EQ(call({"mine", "--data", path("d.jsonl"), "--k", "4", "--out", path("g2.jsonl")}).code, 0);
  EXPECT_EQ(first, slurp(path("g2.jsonl")));
  EXPECT_EQ(call({"mine", "--data", path("d.jsonl"), "--k", "40", "--out", path("g3.jsonl")}).code, 2);
}

TEST_F(CliTest, TrainInferEvalEndToEnd) {
  ASSERT_EQ(call({"synth", "--scenes", "4", "--n", "40", "--seed", "1", "--out", path("train.jsonl")}).code, 0);
  ASSERT_EQ(call({"synth", "--scenes", "2", "--n", "40", "--seed", "2", "--out", path("test.jsonl")}).code, 0);
  const std::vector<std::string> train_args{"train", "--data", path("train.jsonl"), "--arch", "tiny", "--epochs", "2",
                                            "--k", "4", "--seed", "3", "--batch", "2"};
  auto t1 = train_args, t2 = train_args;
  t1.insert(t1.end(), {"--out", path("m1.ckpt")});
  t2.insert(t2.end(), {"--out", path("m2.ckpt"), "--log", path("log.jsonl")});
  ASSERT_EQ(call(t1).code, 0);
  ASSERT_EQ(call(t2).code, 0);
  EXPECT_EQ(slurp(path("m1.ckpt")), slurp(path("m2.ckpt")));
  EXPECT_EQ(count_lines(slurp(path("log.jsonl"))), 2u);

  ASSERT_EQ(call({"infer", "--checkpoint", path("m1.ckpt"), "--data", path("test.jsonl"), "--out", path("l.jsonl")}).code, 0);
  EXPECT_EQ(count_lines(slurp(path("l.jsonl"))), 2u);
  const auto mismatch =
      call({"infer", "--checkpoint", path("m1.ckpt"), "--data", path("test.jsonl"), "--k", "8", "--out", path("l2.jsonl")});
  EXPECT_EQ(mismatch.code, 1);
  EXPECT_NE(mismatch.err.find("ConfigError"), std::string::npos);

  const auto ev = call({"eval", "--data", path("test.jsonl"), "--selector", "nmnet", "--selector", "score_sum",
                        "--checkpoint", path("m1.ckpt"), "--out", path("r.json")});
  ASSERT_EQ(ev.code, 0) << ev.err;
  const auto report = nmnet::report_from_json(slurp(path("r.json")));
  ASSERT_EQ(report.selectors.size(), 2u);
  EXPECT_EQ(report.selectors[0].selector, "nmnet");
  EXPECT_EQ(call({"eval", "--data", path("test.jsonl"), "--selector", "nmnet_sp", "--checkpoint-sp", path("m1.ckpt")}).code, 1);
}

TEST_F(CliTest, RansacBaselineAndEval) {
  ASSERT_EQ(call({"synth", "--scenes", "3", "--n", "100", "--inlier-ratio", "0.6", "--keypoint-noise", "0",
                  "--frame-noise", "0", "--out", path("d.jsonl")})
                .code,
            0);
  ASSERT_EQ(call({"baseline", "--data", path("d.jsonl"), "--out", path("b1.jsonl")}).code, 0);
  ASSERT_EQ(call({"baseline", "--data", path("d.jsonl"), "--out", path("b2.jsonl")}).code, 0);
  EXPECT_EQ(slurp(path("b1.jsonl")), slurp(path("b2.jsonl")));
  ASSERT_EQ(call({"eval", "--data", path("d.jsonl"), "--selector", "ransac", "--out", path("r.json")}).code, 0);
  const auto report = nmnet::report_from_json(slurp(path("r.json")));
  EXPECT_GE(report.selectors[0].f_measure, 0.99);
}
