/* Copyright 2026 The epdsim Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

// Runs the CLI with stderr folded into the captured output.
Result cli(const std::string& args) {
  const std::string cmd = std::string(EPDSIM_CLI) + " " + args + " 2>&1";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / ("epdsim_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir_);
    trace_ = (dir_ / "trace.jsonl").string();
    const Result r = cli("synth-trace --seed 4 --requests 80 --rate 4 --images 0:2 "
                         "--prompt 10:200 --output-tokens 5:60 -o " + trace_);
    ASSERT_EQ(r.code, 0) << r.out;
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static fs::path dir_;
  static std::string trace_;
};

fs::path Cli::dir_;
std::string Cli::trace_;

TEST_F(Cli, MissingTraceIsUsageError) {
  const Result r = cli("replay --trace /nonexistent/t.jsonl");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("/nonexistent/t.jsonl"), std::string::npos);
  EXPECT_EQ(cli("replay").code, 2);
  EXPECT_EQ(cli("").code, 2);
  EXPECT_EQ(cli("frobnicate").code, 2);
}

TEST_F(Cli, BadArgumentsAreUsageErrors) {
  EXPECT_EQ(cli("goodput --trace " + trace_ + " --tolerance 0").code, 2);
  EXPECT_EQ(cli("profile --trace " + trace_ + " -n 2").code, 2);
  EXPECT_EQ(cli("sweep --trace " + trace_ + " --axis nope").code, 2);
  EXPECT_EQ(cli("replay --trace " + trace_ + " --config /nonexistent.json").code, 2);
  const fs::path bad = dir_ / "bad.json";
  std::ofstream(bad) << R"({"cluster": {"metod": "EPD:2"}})";
  const Result r = cli("replay --trace " + trace_ + " --config " + bad.string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("metod"), std::string::npos);
}

TEST_F(Cli, ReplayIsByteIdentical) {
  const fs::path cfg = dir_ / "run.json";
  std::ofstream(cfg) << R"({"cluster": {"method": "1E2P1D", "target_policy": "random"},
                          "scheduler": {"check_invariants": true}})";
  const std::string base = "replay --trace " + trace_ + " --config " + cfg.string() + " --seed 9";
  const fs::path out = dir_ / "replay";
  ASSERT_EQ(cli(base + " --out " + out.string()).code, 0);
  const std::string a = slurp(out / "report.json");
  const std::string a_csv = slurp(out / "requests.csv");
  ASSERT_EQ(cli(base + " --out " + out.string()).code, 0);
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(out / "report.json"));
  EXPECT_EQ(a_csv, slurp(out / "requests.csv"));
  EXPECT_EQ(count_lines(a_csv), 81u);
  EXPECT_NE(a.find("\"slo_attainment\""), std::string::npos);
  EXPECT_NE(a.find("\"encode_queue_s\""), std::string::npos);
}

TEST_F(Cli, FixturesReplayOnEightColocatedInstances) {
  const fs::path cfg = dir_ / "epd8.json";
  std::ofstream(cfg) << R"({"cluster": {"method": "EPD:8"},
                          "scheduler": {"policy": "stage_level", "check_invariants": true}})";
  for (const char* name : {"textcaps_like", "pope_like", "mme_like", "textvqa_like",
                           "vizwiz_like", "mixed"}) {
    const std::string trace =
        std::string(EPDSIM_SOURCE_DIR) + "/data/traces/" + name + ".jsonl";
    const Result r = cli("replay --json --trace " + trace + " --config " + cfg.string());
    ASSERT_EQ(r.code, 0) << name << r.out;
    const auto j = nlohmann::json::parse(r.out);
    const double attainment = j["aggregates"]["slo_attainment"];
    EXPECT_GE(attainment, 0.0) << name;
    EXPECT_LE(attainment, 1.0) << name;
    for (const char* part : {"encode_queue_s", "encode_exec_s", "ep_migration_s", "prefill_queue_s",
                             "prefill_exec_s", "pd_migration_s", "decode_queue_s",
                             "decode_exec_s"}) {
      EXPECT_TRUE(j["aggregates"]["breakdown_mean"].contains(part)) << name << " " << part;
    }
  }
}

TEST_F(Cli, ReplayJsonOnStdout) {
  const Result r = cli("replay --json --trace " + trace_);
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("\"report_version\": 1"), std::string::npos);
}

TEST_F(Cli, EmptyTraceWarns) {
  const fs::path empty = dir_ / "empty.jsonl";
  std::ofstream(empty) << "";
  const Result r = cli("replay --trace " + empty.string());
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("WARNING: empty trace"), std::string::npos);
}

TEST_F(Cli, BudgetsPrintsSevenRows) {
  const Result r = cli("budgets");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(count_lines(r.out), 1u + 7u);
  for (const char* t : {"E ", "P ", "D ", "EP ", "ED ", "PD ", "EPD "}) {
    EXPECT_NE(r.out.find(std::string("\n") + t), std::string::npos) << t;
  }
}

TEST_F(Cli, TightTbtFlagsDecodeInfeasible) {
  const fs::path cfg = dir_ / "tight.json";
  std::ofstream(cfg) << R"({"slo": {"tbt_max": 0.0001}})";
  const Result r = cli("budgets --config " + cfg.string());
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("\nD     1e-04     1      0      NO"), std::string::npos) << r.out;
}

TEST_F(Cli, SweepInstanceRatioRows) {
  const Result r = cli("sweep --trace " + trace_ + " --axis instance_ratio --family EP+D -n 8");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(count_lines(r.out), 1u + 7u);
  EXPECT_NE(r.out.find("1EP7D"), std::string::npos);
  EXPECT_NE(r.out.find("7EP1D"), std::string::npos);
}

TEST_F(Cli, SweepRateRows) {
  const Result r = cli("sweep --trace " + trace_ + " --axis request_rate --rates 1:8:1");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(count_lines(r.out), 1u + 8u);
}

TEST_F(Cli, ProfileRows) {
  const std::string base = "profile --trace " + trace_ + " ";
  Result r = cli(base + "-n 8 --json");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("\"winner\""), std::string::npos);
  r = cli(base + "-n 8");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(count_lines(r.out), 1u + 3u);
  r = cli(base + "-n 3 --brute-force");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(count_lines(r.out), 1u + 5u);
  EXPECT_EQ(cli(base + "-n 3 --brute-force").out, r.out);
}

TEST_F(Cli, GoodputVerbose) {
  const Result r = cli("goodput -v --trace " + trace_ + " --low 0.5 --high 8 --tolerance 0.5");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("probe rate=0.5"), std::string::npos);
  EXPECT_NE(r.out.find("goodput "), std::string::npos);
}

TEST_F(Cli, InfeasibleExitCode) {
  const fs::path cfg = dir_ / "infeasible.json";
  std::ofstream(cfg) << R"({"slo": {"ttft_max": 0.0001, "tbt_max": 0.0001}})";
  EXPECT_EQ(cli("goodput --trace " + trace_ + " --config " + cfg.string()).code, 3);
}

TEST_F(Cli, TraceUtilities) {
  EXPECT_EQ(cli("validate-trace --trace " + trace_).code, 0);
  const fs::path csv = dir_ / "t.csv";
  ASSERT_EQ(cli("convert-trace --trace " + trace_ + " -o " + csv.string()).code, 0);
  const fs::path back = dir_ / "back.jsonl";
  ASSERT_EQ(cli("convert-trace --trace " + csv.string() + " -o " + back.string()).code, 0);
  EXPECT_EQ(slurp(back), slurp(trace_));
  const fs::path broken = dir_ / "broken.jsonl";
  std::ofstream(broken) << "{\"id\":1,\"arrival_s\":0,\"prompt_tokens\":1,\"output_tokens\":0}\n";
  const Result r = cli("validate-trace --trace " + broken.string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find(":1"), std::string::npos);
}

TEST_F(Cli, SynthIsDeterministic) {
  const Result a = cli("synth-trace --seed 1 --requests 5");
  const Result b = cli("synth-trace --seed 1 --requests 5");
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(count_lines(a.out), 5u);
}

}  // namespace
