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
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "epdsim/engine.h"
#include "epdsim/model_cost.h"

namespace epdsim {

enum class MigrationKind { kEncodeToPrefill, kPrefillToDecode };
enum class MigrationPhase { kControlSent, kScheduled, kTransferring, kDone };

const char* to_string(MigrationKind kind);
const char* to_string(MigrationPhase phase);

struct MigrationJob {
  JobId id = 0;
  RequestIndex req = 0;
  MigrationKind kind = MigrationKind::kEncodeToPrefill;
  int source = -1;
  int target = -1;
  double kv_bytes = 0.0;
  double image_bytes = 0.0;
  BlockDemand demand;
  MigrationPhase phase = MigrationPhase::kControlSent;

  double sent_at = 0.0;
  double scheduled_at = 0.0;  // control message reached the target queue
  double transfer_start = 0.0;
  double done_at = 0.0;

  double bytes() const { return kv_bytes + image_bytes; }
  // Control plus transfer time; excludes waiting for target blocks.
  double active_latency() const;
  // Throws std::logic_error unless `next` is the phase right after this one.
  void advance(MigrationPhase next);
};

// Sizes the job from the request's cursor and what the source holds.
MigrationJob make_migration(JobId id, RequestIndex req, MigrationKind kind,
                            int source, int target,
                            const RequestProgress& progress,
                            const Instance& source_instance,
                            const ModelProfile& model);

double transfer_duration(double bytes, const HardwareProfile& hw);

struct TargetPolicy {
  enum class Kind { kRoundRobin, kRandom, kLeastLoad };
  Kind kind = Kind::kRoundRobin;
  std::uint64_t seed = 0;

  static TargetPolicy parse(const std::string& name, std::uint64_t seed = 0);
  std::string name() const;
};

// Stateful target chooser. Round-robin keeps one cursor per candidate list.
class TargetSelector {
 public:
  explicit TargetSelector(TargetPolicy policy = {});

  // `loads[i]` is the outstanding token count of candidates[i]. Throws
  // std::invalid_argument for an empty candidate list.
  int select(const std::vector<int>& candidates,
             const std::vector<std::uint64_t>& loads);

  const TargetPolicy& policy() const { return policy_; }

 private:
  TargetPolicy policy_;
  std::map<std::vector<int>, std::size_t> cursors_;
  std::mt19937_64 rng_;
};

// Serializes transfers per (source, target) pair.
class Interconnect {
 public:
  // Returns the completion time of a transfer requested at `now`.
  double schedule(int source, int target, double now, double duration);

 private:
  std::map<std::pair<int, int>, double> busy_until_;
};

}  // namespace epdsim
