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
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "epdsim/engine.h"
#include "epdsim/metrics.h"
#include "epdsim/migration.h"
#include "epdsim/model_cost.h"
#include "epdsim/workload.h"

namespace epdsim {

// Instance counts per type, e.g. {E:1, P:3, D:4}. Groups are kept in
// InstanceType order.
class DisaggregationMethod {
 public:
  DisaggregationMethod() = default;
  // Throws std::invalid_argument on a zero count, a repeated type, or a set
  // of types that misses a stage.
  explicit DisaggregationMethod(std::vector<std::pair<InstanceType, int>> groups);

  // "1E3P4D", "4EP+4D", "EPD:8" and "E:1,P:3,D:4" are all accepted.
  static DisaggregationMethod parse(const std::string& text);

  const std::vector<std::pair<InstanceType, int>>& groups() const {
    return groups_;
  }
  int total() const;
  int count(InstanceType type) const;
  // "1E3P4D"
  std::string name() const;
  // "E+P+D"
  std::string family() const;
  // One entry per instance, in id order.
  std::vector<InstanceType> expand() const;

  friend bool operator==(const DisaggregationMethod&,
                         const DisaggregationMethod&) = default;

 private:
  std::vector<std::pair<InstanceType, int>> groups_;
};

struct ClusterConfig {
  ModelProfile model;
  HardwareProfile hw;
  DisaggregationMethod method = DisaggregationMethod::parse("EPD:1");
  SchedulerPolicy policy = SchedulerPolicy::kStageLevel;
  // Unset means dual-stream under stage_level and sequential otherwise.
  std::optional<ExecutionMode> execution;
  SloSpec slo;
  SchedulerParams params;
  double preprocess_delay = 0.0;
  TargetPolicy target_policy;
  // Per-instance pool sizes; derived from free GPU memory when unset.
  std::optional<std::uint64_t> kv_blocks;
  std::optional<std::uint64_t> image_blocks;
  // Share of the cache memory given to image blocks when an instance has
  // both pools.
  double image_memory_fraction = 0.1;
  // Verify conservation and cache accounting after every event.
  bool check_invariants = false;

  void validate() const;
  ExecutionMode execution_mode() const;
};

struct PoolSizes {
  std::uint64_t kv_blocks = 0;
  std::uint64_t image_blocks = 0;
};

PoolSizes pool_sizes(InstanceType type, const ClusterConfig& config);

// Profiling reference for a trace: its largest image and longest context.
BudgetQuery budget_query(InstanceType type, const ClusterConfig& config,
                         const Trace& trace);
std::map<InstanceType, BudgetPair> search_cluster_budgets(
    const ClusterConfig& config, const Trace& trace);

// Entry routing: image requests round-robin over encode-capable instances,
// text-only requests over prefill-capable ones.
class Router {
 public:
  explicit Router(const std::vector<InstanceType>& instances);
  int route(bool has_images);

 private:
  std::vector<int> encoders_;
  std::vector<int> prefillers_;
  std::size_t next_encoder_ = 0;
  std::size_t next_prefiller_ = 0;
};

class SimulationDeadlock : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Runs the trace to completion. Deterministic in its inputs.
SimReport run(const ClusterConfig& config, const Trace& trace);

// Attainment of the trace rescaled to `rate`.
double attainment_at_rate(const ClusterConfig& config, const Trace& trace,
                          double rate);

GoodputResult cluster_goodput(const ClusterConfig& config, const Trace& trace,
                              double low, double high, double tolerance);

}  // namespace epdsim
