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

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "epdsim/cluster.h"
#include "epdsim/engine.h"
#include "epdsim/metrics.h"
#include "epdsim/model_cost.h"
#include "epdsim/workload.h"

namespace epdsim {

struct WorkloadSummary {
  std::uint64_t w_e = 0;  // visual tokens
  std::uint64_t w_p = 0;  // prompt + visual tokens
  std::uint64_t w_d = 0;  // output tokens
  std::uint64_t n_r = 0;
  std::uint64_t images = 0;

  double avg_image_tokens() const;
  double avg_context_tokens() const;
};

// Throws std::invalid_argument for an empty trace.
WorkloadSummary summarize_workload(const Trace& trace);

class DecodeMemoryInfeasible : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Concurrent requests that fit in gamma of the free memory at the average
// per-request KV footprint.
std::int64_t decode_concurrency_cap(const WorkloadSummary& summary,
                                    const ModelProfile& model,
                                    const HardwareProfile& hw, double gamma);

struct StageBudgets {
  std::int64_t tau_e = 0;
  std::int64_t tau_p = 1;
  std::int64_t tau_d = 1;
  std::int64_t tau_d_searched = 1;
  std::int64_t decode_memory_cap = 0;
  bool feasible_e = true;
  bool feasible_p = true;
  bool feasible_d = true;
};

StageBudgets stage_budgets(const SloSpec& slo, const ModelProfile& model,
                           const HardwareProfile& hw,
                           const WorkloadSummary& summary,
                           const SchedulerParams& params = {});

struct StageThroughputs {
  double tp_e = 0.0;
  double tp_p = 0.0;
  double tp_d = 0.0;
};

// Tokens per second of a full-budget batch of each stage.
StageThroughputs estimate_throughputs(const StageBudgets& budgets,
                                      const WorkloadSummary& summary,
                                      const ModelProfile& model,
                                      const HardwareProfile& hw);

struct Partition {
  int n_e = 1;
  int n_p = 1;
  int n_d = 1;

  friend bool operator==(const Partition&, const Partition&) = default;
};

// Proportional split with largest-remainder rounding and at least one
// instance per stage. Throws std::invalid_argument for n < 3, negative
// times, or all-zero times.
Partition partition(int n, double t_e, double t_p, double t_d);

struct PartitionResult {
  Partition counts;
  double t_e = 0.0;
  double t_p = 0.0;
  double t_d = 0.0;
  StageThroughputs throughput;
  StageBudgets budgets;
};

PartitionResult plan_partition(const Trace& trace, int n,
                               const ClusterConfig& config);

// E+P+D, EP+D, ED+P.
std::vector<DisaggregationMethod> candidate_methods(const Partition& p);

// 2(n-1) + (n-1)(n-2)/2
std::uint64_t search_space_size(int n);

// Every split of the three families, E+P+D first.
std::vector<DisaggregationMethod> enumerate_methods(int n);

struct GoodputSearch {
  double low = 0.1;
  double high = 16.0;
  double tolerance = 0.05;
};

struct CandidateResult {
  DisaggregationMethod method;
  double goodput = 0.0;
  bool feasible = false;
  std::string error;
  std::vector<GoodputProbe> probes;
};

struct Selection {
  PartitionResult partition;
  std::vector<CandidateResult> table;
  std::size_t best = 0;

  const CandidateResult& winner() const { return table.at(best); }
};

class NoFeasibleMethod : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Goodput of every method; the first strict maximum wins.
Selection evaluate_methods(const std::vector<DisaggregationMethod>& methods,
                           const Trace& trace, const ClusterConfig& config,
                           const GoodputSearch& search);

Selection select_method(const Trace& trace, int n, const ClusterConfig& config,
                        const GoodputSearch& search = {});
Selection brute_force_select(const Trace& trace, int n,
                             const ClusterConfig& config,
                             const GoodputSearch& search = {});

}  // namespace epdsim
