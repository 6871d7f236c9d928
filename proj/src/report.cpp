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

#include "epdsim/report.h"

#include <charconv>
#include <cmath>
#include <iomanip>
#include <ostream>

namespace epdsim {

using nlohmann::ordered_json;

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

// JSON has no NaN; empty samples become null.
ordered_json num(double v) {
  return std::isfinite(v) ? ordered_json(v) : ordered_json();
}

}  // namespace

ordered_json stats_json(const LatencyStats& s) {
  if (s.count == 0) return ordered_json{{"count", 0}};
  return ordered_json{{"count", s.count}, {"mean", num(s.mean)},
                      {"p50", num(s.p50)},    {"p90", num(s.p90)},
                      {"p95", num(s.p95)},    {"p99", num(s.p99)},
                      {"max", num(s.max)}};
}

ordered_json aggregates_json(const Aggregates& a) {
  ordered_json j;
  j["requests"] = a.requests;
  j["finished"] = a.finished;
  j["slo_attainment"] = a.attainment;
  j["throughput_rps"] = a.throughput_rps;
  j["token_throughput"] = a.token_throughput;
  j["ttft_s"] = stats_json(a.ttft);
  j["tbt_s"] = stats_json(a.tbt);
  j["ep_migration_s"] = stats_json(a.ep_migration);
  j["pd_migration_s"] = stats_json(a.pd_migration);
  ordered_json b;
  for (std::size_t i = 0; i < StageBreakdown::kSize; ++i) {
    b[StageBreakdown::names()[i]] = a.breakdown_mean[i];
  }
  j["breakdown_mean"] = b;
  j["migration_share"] = a.migration_share;
  return j;
}

ordered_json report_json(const SimReport& report, const RunConfig& config,
                         const std::string& method,
                         const std::string& trace_name) {
  ordered_json j;
  j["report_version"] = kReportVersion;
  j["trace"] = trace_name;
  j["method"] = method;
  j["aggregates"] = aggregates_json(aggregate(report));
  ordered_json instances = ordered_json::array();
  for (const auto& s : report.instances) {
    instances.push_back({{"id", s.id},
                         {"type", s.type},
                         {"token_budget", s.token_budget},
                         {"image_budget", s.image_budget},
                         {"budget_feasible", s.feasible},
                         {"batches", s.batches},
                         {"busy_s", s.busy_time},
                         {"kv_capacity_blocks", s.kv_capacity_blocks},
                         {"image_capacity_blocks", s.image_capacity_blocks},
                         {"peak_kv_blocks", s.peak_kv_blocks},
                         {"peak_image_blocks", s.peak_image_blocks}});
  }
  j["instances"] = instances;
  j["makespan_s"] = report.makespan;
  j["max_batch_latency_s"] = report.max_batch_latency;
  j["events"] = report.events;
  j["warnings"] = report.warnings;
  j["config"] = to_json(config);
  return j;
}

void write_request_csv(const SimReport& report, std::ostream& out) {
  out << "id,arrival_s,finished,meets_slo,ttft_s,completion_s,latency_s,"
         "images,visual_tokens,prompt_tokens,output_tokens,ttft_slo_s,"
         "tbt_slo_s";
  for (const char* name : StageBreakdown::names()) out << ',' << name;
  out << ",tbt_values\n";
  for (const auto& m : report.requests) {
    out << m.id.to_string() << ',' << format_double(m.arrival) << ','
        << (m.finished ? 1 : 0) << ',' << (meets_slo(m) ? 1 : 0) << ','
        << format_double(m.ttft) << ',' << format_double(m.completion) << ','
        << format_double(m.finished ? m.latency() : 0.0) << ',' << m.images
        << ',' << m.visual_tokens << ',' << m.prompt_tokens << ','
        << m.output_tokens << ',' << format_double(m.slo.ttft_max) << ','
        << format_double(m.slo.tbt_max);
    for (double v : m.breakdown.values) out << ',' << format_double(v);
    out << ',';
    for (std::size_t k = 0; k < m.tbt_values.size(); ++k) {
      if (k) out << ';';
      out << format_double(m.tbt_values[k]);
    }
    out << '\n';
  }
}

ordered_json selection_json(const Selection& selection, bool include_partition) {
  ordered_json j;
  if (include_partition) {
    const auto& p = selection.partition;
    j["partition"] = {{"n_e", p.counts.n_e},
                      {"n_p", p.counts.n_p},
                      {"n_d", p.counts.n_d},
                      {"t_e", p.t_e},
                      {"t_p", p.t_p},
                      {"t_d", p.t_d},
                      {"tp_e", p.throughput.tp_e},
                      {"tp_p", p.throughput.tp_p},
                      {"tp_d", p.throughput.tp_d},
                      {"tau_e", p.budgets.tau_e},
                      {"tau_p", p.budgets.tau_p},
                      {"tau_d", p.budgets.tau_d},
                      {"decode_memory_cap", p.budgets.decode_memory_cap}};
  }
  ordered_json rows = ordered_json::array();
  for (std::size_t i = 0; i < selection.table.size(); ++i) {
    const auto& row = selection.table[i];
    ordered_json r = {{"method", row.method.name()},
                      {"family", row.method.family()},
                      {"goodput_rps", row.goodput},
                      {"feasible", row.feasible},
                      {"winner", i == selection.best}};
    if (!row.error.empty()) r["error"] = row.error;
    ordered_json probes = ordered_json::array();
    for (const auto& p : row.probes) {
      probes.push_back({{"rate", p.rate}, {"attainment", p.attainment}});
    }
    r["probes"] = probes;
    rows.push_back(r);
  }
  j["candidates"] = rows;
  j["winner"] = selection.winner().method.name();
  return j;
}

void print_summary(const SimReport& report, const std::string& method,
                   std::ostream& out) {
  const Aggregates a = aggregate(report);
  out << "method           " << method << '\n'
      << "requests         " << a.finished << '/' << a.requests << " finished\n"
      << "slo attainment   " << format_double(a.attainment) << '\n'
      << "throughput       " << format_double(a.throughput_rps) << " req/s\n"
      << "ttft p50/p99     " << format_double(a.ttft.p50) << " / "
      << format_double(a.ttft.p99) << " s\n"
      << "tbt p50/p99      " << format_double(a.tbt.p50) << " / "
      << format_double(a.tbt.p99) << " s\n"
      << "migration share  " << format_double(a.migration_share) << '\n';
  for (const auto& w : report.warnings) out << "WARNING: " << w << '\n';
}

}  // namespace epdsim
