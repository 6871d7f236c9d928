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

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "epdsim/workload.h"

namespace epdsim {

// Per-request latency split into eight consecutive stage intervals.
struct StageBreakdown {
  static constexpr std::size_t kSize = 8;
  // encode_queue, encode_exec, ep_migration, prefill_queue, prefill_exec,
  // pd_migration, decode_queue, decode_exec
  std::array<double, kSize> values{};

  static const std::array<const char*, kSize>& names();
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  double total() const;
  double migration() const { return values[2] + values[5]; }
};

struct RequestMetrics {
  RequestId id;
  double arrival = 0.0;
  bool finished = false;
  double ttft = 0.0;
  double completion = 0.0;  // absolute finish time
  std::vector<double> tbt_values;
  StageBreakdown breakdown;
  SloSpec slo;
  std::uint64_t images = 0;
  std::uint64_t visual_tokens = 0;
  std::uint64_t prompt_tokens = 0;
  std::uint64_t output_tokens = 0;

  double latency() const { return completion - arrival; }
};

struct InstanceSummary {
  int id = 0;
  std::string type;
  std::int64_t token_budget = 0;
  std::int64_t image_budget = 0;
  bool feasible = true;
  std::uint64_t batches = 0;
  double busy_time = 0.0;
  std::uint64_t kv_capacity_blocks = 0;
  std::uint64_t image_capacity_blocks = 0;
  std::uint64_t peak_kv_blocks = 0;
  std::uint64_t peak_image_blocks = 0;
};

struct SimReport {
  std::vector<RequestMetrics> requests;  // trace order
  std::vector<InstanceSummary> instances;
  std::vector<double> ep_migration_latencies;
  std::vector<double> pd_migration_latencies;
  double max_batch_latency = 0.0;
  double makespan = 0.0;
  std::uint64_t events = 0;
  std::uint64_t invariant_checks = 0;
  std::vector<std::string> warnings;
};

// TTFT within bound and at least 90% of TBT values within bound, both
// inclusive. Unfinished requests miss.
bool meets_slo(const RequestMetrics& m, const SloSpec& slo);
bool meets_slo(const RequestMetrics& m);

// Fraction of requests meeting their own SLO. An empty report counts as 1.0;
// `empty` is set when that happens.
double slo_attainment(const std::vector<RequestMetrics>& requests,
                      bool* empty = nullptr);
double slo_attainment(const SimReport& report, bool* empty = nullptr);

// Linear interpolation between closest ranks. NaN for an empty sample.
double percentile(std::vector<double> values, double p);

struct LatencyStats {
  double mean = 0.0;
  double p50 = 0.0;
  double p90 = 0.0;
  double p95 = 0.0;
  double p99 = 0.0;
  double max = 0.0;
  std::size_t count = 0;
};

LatencyStats summarize(const std::vector<double>& values);

struct Aggregates {
  std::size_t requests = 0;
  std::size_t finished = 0;
  double attainment = 1.0;
  double throughput_rps = 0.0;
  double token_throughput = 0.0;
  LatencyStats ttft;
  LatencyStats tbt;
  LatencyStats ep_migration;
  LatencyStats pd_migration;
  StageBreakdown breakdown_mean;
  // Total migration time over total request latency.
  double migration_share = 0.0;
};

Aggregates aggregate(const SimReport& report);

class SloInfeasible : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GoodputProbe {
  double rate = 0.0;
  double attainment = 0.0;
};

struct GoodputResult {
  double goodput = 0.0;
  std::vector<GoodputProbe> probes;
  // False when attainment rose with rate between two probes.
  bool monotone = true;
};

inline constexpr double kAttainmentTarget = 0.9;

// Bisects for the largest rate with attainment >= 0.9. The low bound is
// checked first; the high bound is assumed to fail. Throws SloInfeasible if
// the low bound fails and std::invalid_argument for bad bounds.
GoodputResult find_goodput(const std::function<double(double)>& attainment_at,
                           double low, double high, double tolerance = 0.05);

}  // namespace epdsim
