#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

#include "instab/trace_io.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kCli = INSTAB_CLI;
const fs::path kData = INSTAB_TEST_DATA;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("instab_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Runs the CLI with stdout/stderr captured into files; returns the exit code.
  int run(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + " \"" + kCli + "\" " + args + " > \"" + (dir_ / "stdout").string() +
                            "\" 2> \"" + (dir_ / "stderr").string() + "\"";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  std::string err() const { return slurp(dir_ / "stderr"); }
  std::string out() const { return slurp(dir_ / "stdout"); }

  std::string fixture() const { return "--input \"" + (kData / "fixture.jsonl").string() + "\""; }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, AnalyzeMatchesGoldenOutputs) {
  ASSERT_EQ(run("analyze " + fixture() + " --out \"" + (dir_ / "a").string() + "\""), 0) << err();
  EXPECT_EQ(slurp(dir_ / "a" / "diagnostics.jsonl"), slurp(kData / "golden" / "diagnostics.jsonl"));
  EXPECT_EQ(slurp(dir_ / "a" / "buckets.csv"), slurp(kData / "golden" / "buckets.csv"));
  const auto report = nlohmann::ordered_json::parse(slurp(dir_ / "a" / "report.json"));
  const auto golden = nlohmann::ordered_json::parse(slurp(kData / "golden" / "reports.json"));
  EXPECT_EQ(report.at("reports"), golden);
  EXPECT_NE(out().find("AUC_wrong(S)"), std::string::npos);
}

TEST_F(Cli, GoldenDiagnosticsAreCanonicalJsonLines) {
  std::istringstream in(slurp(kData / "golden" / "diagnostics.jsonl"));
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::ordered_json::parse(line);
    EXPECT_EQ(j.begin().key(), "id");
    ++n;
  }
  EXPECT_EQ(n, 10u);
}

TEST_F(Cli, FixtureRoundTripsThroughCanonicalWriter) {
  const auto traces = instab::parse_trace_file((kData / "fixture.jsonl").string());
  const auto copy = dir_ / "copy.jsonl";
  instab::write_trace_file(copy.string(), traces);
  EXPECT_EQ(instab::parse_trace_file(copy.string()), traces);
}

TEST_F(Cli, OutputDirectoryFromEnvironment) {
  ASSERT_EQ(run("analyze " + fixture(), "INSTAB_OUT=\"" + (dir_ / "env").string() + "\""), 0) << err();
  EXPECT_TRUE(fs::exists(dir_ / "env" / "diagnostics.jsonl"));
}

TEST_F(Cli, EmitSeriesAddsPerStepArrays) {
  ASSERT_EQ(run("analyze " + fixture() + " --emit-series --kappa --out \"" + (dir_ / "s").string() + "\""), 0);
  std::istringstream in(slurp(dir_ / "s" / "diagnostics.jsonl"));
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  const auto j = nlohmann::json::parse(line);
  ASSERT_TRUE(j.contains("series"));
  EXPECT_EQ(j["series"]["I"].size(), j["T"].get<std::size_t>());
  EXPECT_TRUE(j.contains("kappa_at_peak"));
}

TEST_F(Cli, MissingInputIsDataError) {
  EXPECT_EQ(run("analyze --input \"" + (dir_ / "missing.jsonl").string() + "\""), 1);
  const auto j = nlohmann::json::parse(err());
  EXPECT_EQ(j["error"]["type"], "data_error");
}

TEST_F(Cli, InvalidTraceReportsLine) {
  std::ofstream(dir_ / "bad.jsonl") << slurp(kData / "fixture.jsonl") << "{\"id\":\"x\"}\n";
  EXPECT_EQ(run("analyze --input \"" + (dir_ / "bad.jsonl").string() + "\" --out \"" + dir_.string() + "\""), 1);
  const auto j = nlohmann::json::parse(err());
  EXPECT_EQ(j["error"]["line"], 11);
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run("analyze " + fixture() + " --lambda -1"), 2);
  EXPECT_EQ(run("controls " + fixture() + " --kind nope"), 2);
  EXPECT_EQ(run("timing " + fixture() + " --early 0.6 --late 0.5"), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("analyze"), 2);
  EXPECT_EQ(nlohmann::json::parse(err())["error"]["type"], "usage_error");
}

TEST_F(Cli, ControlsWriteCsvAndJson) {
  ASSERT_EQ(run("controls " + fixture() + " --kind lambda_ablation --lambdas 0,0.5,1 --bootstrap-n 0 --out \"" +
                dir_.string() + "\""),
            0)
      << err();
  const auto csv = slurp(dir_ / "controls_lambda_ablation.csv");
  EXPECT_EQ(csv.rfind("corpus,control,setting,statistic,n,accuracy,auc_wrong,spearman,bucket_slope\n", 0), 0u);
  EXPECT_NE(csv.find("lambda=0.5"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir_ / "controls_lambda_ablation.json"));
}

TEST_F(Cli, TimingWritesTables) {
  ASSERT_EQ(run("timing " + fixture() + " --out \"" + dir_.string() + "\""), 0) << err();
  EXPECT_NE(out().find("thresholds early=0.25 late=0.5"), std::string::npos);
  for (const char* f : {"timing.json", "classes.csv", "threshold_sweep.csv", "rho_bins.csv"}) {
    EXPECT_TRUE(fs::exists(dir_ / f)) << f;
  }
  // 9 sweep rows per scheme plus the header.
  const auto sweep = slurp(dir_ / "threshold_sweep.csv");
  EXPECT_EQ(std::count(sweep.begin(), sweep.end(), '\n'), 19);
}

TEST_F(Cli, SynthThenAnalyze) {
  ASSERT_EQ(run("synth --preset two_population --n 60 --seed 3 --out \"" + dir_.string() + "\" --name planted"), 0)
      << err();
  EXPECT_TRUE(fs::exists(dir_ / "planted.populations.jsonl"));
  ASSERT_EQ(run("analyze --input \"" + (dir_ / "planted.jsonl").string() + "\" --bootstrap-n 100 --out \"" +
                (dir_ / "a").string() + "\""),
            0)
      << err();
  const auto report = nlohmann::json::parse(slurp(dir_ / "a" / "report.json"));
  EXPECT_GT(report["reports"]["S"]["auc_wrong"].get<double>(), 0.95);
}

TEST_F(Cli, VerifySmall) {
  ASSERT_EQ(run("verify --trials 30 --dims 3,5 --out \"" + dir_.string() + "\""), 0) << err();
  EXPECT_NE(out().find("0 violations"), std::string::npos);
  const auto j = nlohmann::json::parse(slurp(dir_ / "verify.json"));
  EXPECT_EQ(j.size(), 4u);
}

TEST_F(Cli, ConfigFileSectionsFeedSubcommands) {
  std::ofstream(dir_ / "run.toml") << "[analyze]\nlambda = 0.5\nbuckets = 2\n";
  ASSERT_EQ(run("--config \"" + (dir_ / "run.toml").string() + "\" analyze " + fixture() + " --out \"" +
                dir_.string() + "\""),
            0)
      << err();
  const auto j = nlohmann::json::parse(slurp(dir_ / "report.json"));
  EXPECT_EQ(j["config"]["lambda"], 0.5);
  EXPECT_EQ(j["reports"]["S"]["buckets"].size(), 2u);
}
