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

#include "epdsim/migration.h"

#include <algorithm>
#include <stdexcept>

namespace epdsim {

const char* to_string(MigrationKind kind) {
  return kind == MigrationKind::kEncodeToPrefill ? "ep" : "pd";
}

const char* to_string(MigrationPhase phase) {
  switch (phase) {
    case MigrationPhase::kControlSent:
      return "control_sent";
    case MigrationPhase::kScheduled:
      return "scheduled";
    case MigrationPhase::kTransferring:
      return "transferring";
    case MigrationPhase::kDone:
      return "done";
  }
  return "?";
}

double MigrationJob::active_latency() const {
  return (scheduled_at - sent_at) + (done_at - transfer_start);
}

void MigrationJob::advance(MigrationPhase next) {
  if (static_cast<int>(next) != static_cast<int>(phase) + 1) {
    throw std::logic_error(std::string("migration job ") + std::to_string(id) +
                           ": illegal phase change " + to_string(phase) +
                           " -> " + to_string(next));
  }
  phase = next;
}

MigrationJob make_migration(JobId id, RequestIndex req, MigrationKind kind,
                            int source, int target,
                            const RequestProgress& progress,
                            const Instance& source_instance,
                            const ModelProfile& model) {
  MigrationJob job;
  job.id = id;
  job.req = req;
  job.kind = kind;
  job.source = source;
  job.target = target;
  job.demand.kv_blocks = source_instance.kv_pool().held(req);
  job.demand.image_blocks = source_instance.image_pool().held(req);
  // Bytes follow the exact token counts; blocks only round the allocation.
  if (kind == MigrationKind::kEncodeToPrefill) {
    job.image_bytes = image_cache_bytes(
        progress.image_tokens_through(progress.images_done), model);
  } else {
    job.kv_bytes = kv_cache_bytes(progress.kv_len, model);
  }
  return job;
}

double transfer_duration(double bytes, const HardwareProfile& hw) {
  return bytes / hw.interconnect_bandwidth;
}

TargetPolicy TargetPolicy::parse(const std::string& name, std::uint64_t seed) {
  if (name == "round_robin") return {Kind::kRoundRobin, seed};
  if (name == "random") return {Kind::kRandom, seed};
  if (name == "least_load") return {Kind::kLeastLoad, seed};
  throw std::invalid_argument("unknown target policy '" + name + "'");
}

std::string TargetPolicy::name() const {
  switch (kind) {
    case Kind::kRoundRobin:
      return "round_robin";
    case Kind::kRandom:
      return "random";
    case Kind::kLeastLoad:
      return "least_load";
  }
  return "?";
}

TargetSelector::TargetSelector(TargetPolicy policy)
    : policy_(policy), rng_(policy.seed) {}

int TargetSelector::select(const std::vector<int>& candidates,
                           const std::vector<std::uint64_t>& loads) {
  if (candidates.empty()) {
    throw std::invalid_argument("select_target: no candidate instances");
  }
  switch (policy_.kind) {
    case TargetPolicy::Kind::kRoundRobin: {
      auto& cursor = cursors_[candidates];
      const int chosen = candidates[cursor % candidates.size()];
      cursor = (cursor + 1) % candidates.size();
      return chosen;
    }
    case TargetPolicy::Kind::kRandom:
      return candidates[rng_() % candidates.size()];
    case TargetPolicy::Kind::kLeastLoad: {
      if (loads.size() != candidates.size()) {
        throw std::invalid_argument("select_target: one load per candidate");
      }
      const auto it = std::min_element(loads.begin(), loads.end());
      return candidates[static_cast<std::size_t>(it - loads.begin())];
    }
  }
  return candidates.front();
}

double Interconnect::schedule(int source, int target, double now,
                              double duration) {
  double& busy = busy_until_[{source, target}];
  const double start = std::max(now, busy);
  busy = start + duration;
  return busy;
}

}  // namespace epdsim
