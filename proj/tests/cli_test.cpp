#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string output;
};

Result run_cli(const std::string& args) {
  const std::string cmd = std::string(BNP_CLI_PATH) + " " + args + " 2>&1";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe)) r.output += buf.data();
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::ifstream f(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(f, line);)
    if (!line.empty()) out.push_back(line);
  return out;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
  return out;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("bnp_cli_test_" + name);
  fs::remove_all(d);
  return d;
}

std::string config(const std::string& name) { return std::string(BNP_CONFIG_DIR) + "/" + name; }

}  // namespace

TEST(Cli, RunWritesTraceAndSummary) {
  const fs::path out = fresh_dir("run");
  const auto r = run_cli("run --scenario " + config("atc.cfg") + " --planner bnp --seed 7 --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(out / "trace.jsonl"));
  EXPECT_TRUE(fs::exists(out / "summary.csv"));
  EXPECT_NE(r.output.find("permutation: ("), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("social_cost:"), std::string::npos);
  EXPECT_FALSE(lines_of(out / "trace.jsonl").empty());
  fs::remove_all(out);
}

TEST(Cli, ExplicitStatesConfigRuns) {
  const fs::path out = fresh_dir("head_on");
  const auto r = run_cli("run --scenario " + config("head_on.cfg") + " --planner fcfs --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("timed_out: no"), std::string::npos) << r.output;
  fs::remove_all(out);
}

TEST(Cli, OpenLoopWritesNodeLog) {
  const fs::path out = fresh_dir("open_loop");
  const auto r = run_cli("run --n 3 --seed 2 --planner bnp --open-loop --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(out / "nodes.csv"));
  fs::remove_all(out);
}

TEST(Cli, MissingScenarioIsAConfigError) {
  const auto r = run_cli("run --scenario /nonexistent/dir/none.cfg --planner bnp");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("/nonexistent/dir/none.cfg"), std::string::npos) << r.output;
}

TEST(Cli, BruteForceRejectsLargeGroups) {
  const auto r = run_cli("run --planner brute --n 9 --out " + fresh_dir("brute").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("CapExceeded"), std::string::npos) << r.output;
}

TEST(Cli, UnknownPlannerAndEmptyListAreRejected) {
  EXPECT_EQ(run_cli("run --planner nash --n 3").code, 2);
  const auto r = run_cli("sweep --planners , --ns 3 --seeds 1 --out " + fresh_dir("empty").string());
  EXPECT_EQ(r.code, 2) << r.output;
  EXPECT_NE(r.output.find("planner list is empty"), std::string::npos) << r.output;
}

TEST(Cli, SweepWritesOneRowPerPlannerAndTrial) {
  const fs::path out = fresh_dir("sweep");
  const auto r = run_cli("sweep --planners bnp,fcfs,random --ns 4 --seeds 20 --threads 4 --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.output;
  const auto summary = lines_of(out / "summary.csv");
  const auto trials = lines_of(out / "trials.csv");
  EXPECT_EQ(summary.size(), 1u + 3u);
  EXPECT_EQ(trials.size(), 1u + 60u);
  EXPECT_TRUE(fs::exists(out / "summary_safe.csv"));
  EXPECT_TRUE(fs::exists(out / "nodes.csv"));
  fs::remove_all(out);
}

TEST(Cli, VerifyOracleAgreesWithBruteForce) {
  const fs::path out = fresh_dir("verify");
  const auto r = run_cli("sweep --planners bnp --ns 3 --seeds 3 --verify-oracle --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.output;
  const auto trials = lines_of(out / "trials.csv");
  ASSERT_EQ(trials.size(), 4u);
  const auto header = split(trials[0]);
  const auto col = std::find(header.begin(), header.end(), "oracle_equal") - header.begin();
  ASSERT_LT(static_cast<std::size_t>(col), header.size());
  for (std::size_t i = 1; i < trials.size(); ++i) EXPECT_EQ(split(trials[i])[static_cast<std::size_t>(col)], "true") << trials[i];
  fs::remove_all(out);
}
