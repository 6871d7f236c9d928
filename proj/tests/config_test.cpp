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

#include "epdsim/config.h"

#include <gtest/gtest.h>

#include <sstream>

#include "epdsim/report.h"

namespace epdsim {
namespace {

using nlohmann::json;

std::string error_of(const json& doc) {
  try {
    parse_config(doc);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(Config, EmptyDocumentGivesDefaults) {
  const RunConfig c = parse_config(json::object());
  EXPECT_EQ(c.cluster.method.name(), "1EPD");
  EXPECT_EQ(c.cluster.policy, SchedulerPolicy::kStageLevel);
  EXPECT_EQ(c.cluster.execution_mode(), ExecutionMode::kDualStream);
  EXPECT_EQ(c.goodput.low, 0.1);
  EXPECT_EQ(c.goodput.high, 16.0);
  EXPECT_EQ(c.goodput.tolerance, 0.05);
  EXPECT_FALSE(c.auto_method);
}

TEST(Config, FullDocument) {
  const json doc = json::parse(R"({
    "config_version": 1,
    "model": {"preset": "llava-next-7b"},
    "hardware": {"interconnect_bandwidth": 1e11},
    "cluster": {"method": {"E": 1, "P": 3, "D": 4}, "target_policy": "least_load",
                "kv_blocks": 5000, "preprocess_delay": 0.01},
    "slo": {"preset": {"model": "llava-next-7b", "dataset": "pope"}, "ttft_max": 6},
    "scheduler": {"policy": "prefill_prioritized", "execution": "dual_stream",
                  "alpha": 0.4, "check_invariants": true},
    "goodput": {"low": 0.5, "high": 8, "tolerance": 0.1},
    "output": {"dir": "out", "request_csv": false},
    "seed": 17
  })");
  const RunConfig c = parse_config(doc);
  EXPECT_EQ(c.cluster.model.name, "llava-next-7b");
  EXPECT_EQ(c.cluster.hw.interconnect_bandwidth, 1e11);
  EXPECT_EQ(c.cluster.method.name(), "1E3P4D");
  EXPECT_EQ(c.cluster.target_policy.kind, TargetPolicy::Kind::kLeastLoad);
  EXPECT_EQ(c.cluster.target_policy.seed, 17u);
  EXPECT_EQ(*c.cluster.kv_blocks, 5000u);
  EXPECT_FALSE(c.cluster.image_blocks);
  EXPECT_EQ(c.cluster.slo.ttft_max, 6.0);
  EXPECT_EQ(c.cluster.slo.tbt_max, 0.30);
  EXPECT_EQ(c.cluster.policy, SchedulerPolicy::kPrefillPrioritized);
  EXPECT_EQ(c.cluster.execution_mode(), ExecutionMode::kDualStream);
  EXPECT_EQ(c.cluster.params.alpha, 0.4);
  EXPECT_TRUE(c.cluster.check_invariants);
  EXPECT_EQ(c.goodput.tolerance, 0.1);
  EXPECT_EQ(c.output.dir, "out");
  EXPECT_FALSE(c.output.request_csv);
  EXPECT_EQ(c.seed, 17u);
}

TEST(Config, RoundTrip) {
  const json doc = json::parse(R"({
    "cluster": {"method": "2EP+2D", "image_blocks": 40},
    "scheduler": {"policy": "stall_free_chunked"},
    "seed": 3
  })");
  const RunConfig a = parse_config(doc);
  const RunConfig b = parse_config(json(to_json(a)));
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
  EXPECT_EQ(b.cluster.execution_mode(), ExecutionMode::kSequential);
}

TEST(Config, AutoMethod) {
  const RunConfig c = parse_config(json::parse(R"({"cluster": {"method": "auto", "instances": 6}})"));
  EXPECT_TRUE(c.auto_method);
  EXPECT_EQ(c.auto_instances, 6);
  EXPECT_NE(error_of(json::parse(R"({"cluster": {"method": "auto", "instances": 2}})")), "");
}

TEST(Config, Errors) {
  EXPECT_NE(error_of(json::parse(R"({"bogus": 1})")).find("unknown key 'bogus'"),
            std::string::npos);
  EXPECT_NE(error_of(json::parse(R"({"model": {"hidden": 1}})")).find("model"),
            std::string::npos);
  EXPECT_NE(error_of(json::parse(R"({"config_version": 2})")).find("config_version"),
            std::string::npos);
  EXPECT_NE(error_of(json::parse(R"({"cluster": {"method": "3EP"}})")), "");
  EXPECT_NE(error_of(json::parse(R"({"scheduler": {"policy": "fifo"}})")), "");
  EXPECT_NE(error_of(json::parse(R"({"scheduler": {"gamma": 1.5}})")), "");
  EXPECT_NE(error_of(json::parse(R"({"slo": {"tbt_max": "fast"}})")).find("wrong type"),
            std::string::npos);
  EXPECT_NE(error_of(json::parse(R"({"goodput": {"tolerance": 0}})")), "");
  EXPECT_NE(error_of(json::parse(R"({"model": {"preset": "gpt"}})")), "");
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

// ---------------------------------------------------------------------------
// Reports

SimReport sample_report() {
  SimReport r;
  RequestMetrics m;
  m.id = std::int64_t{4};
  m.arrival = 0.5;
  m.finished = true;
  m.ttft = 0.25;
  m.completion = 1.0;
  m.tbt_values = {0.01, 0.02};
  m.slo = SloSpec{4.0, 0.08};
  m.output_tokens = 3;
  r.requests.push_back(m);
  r.makespan = 1.0;
  return r;
}

TEST(Report, CsvColumns) {
  std::ostringstream out;
  write_request_csv(sample_report(), out);
  std::istringstream in(out.str());
  std::string header;
  std::string row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header.rfind("id,arrival_s,finished,meets_slo,ttft_s", 0), 0u);
  EXPECT_NE(header.find("encode_queue_s"), std::string::npos);
  EXPECT_NE(header.find("decode_exec_s,tbt_values"), std::string::npos);
  EXPECT_EQ(row.rfind("4,0.5,1,1,0.25,1,0.5,", 0), 0u);
  EXPECT_EQ(row.substr(row.size() - 9), "0.01;0.02");
}

TEST(Report, JsonSchema) {
  RunConfig rc;
  const auto j = report_json(sample_report(), rc, "1EPD", "trace.jsonl");
  EXPECT_EQ(j["report_version"], kReportVersion);
  EXPECT_EQ(j["method"], "1EPD");
  EXPECT_EQ(j["aggregates"]["slo_attainment"], 1.0);
  EXPECT_EQ(j["aggregates"]["ep_migration_s"]["count"], 0);
  EXPECT_TRUE(j["aggregates"]["breakdown_mean"].contains("pd_migration_s"));
  EXPECT_EQ(j["config"]["cluster"]["method"], "1EPD");
}

TEST(Report, FormatDouble) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(2.0), "2");
  EXPECT_EQ(format_double(1e-7), "1e-07");
}

}  // namespace
}  // namespace epdsim
