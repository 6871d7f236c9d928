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

#include "epdsim/cluster.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <regex>
#include <set>
#include <sstream>

namespace epdsim {

// ---------------------------------------------------------------------------
// Disaggregation method

DisaggregationMethod::DisaggregationMethod(
    std::vector<std::pair<InstanceType, int>> groups)
    : groups_(std::move(groups)) {
  if (groups_.empty()) {
    throw std::invalid_argument("disaggregation method has no instances");
  }
  // Pipeline order: by earliest stage served, then type order.
  auto first_stage = [](InstanceType t) { return t.encodes() ? 0 : t.prefills() ? 1 : 2; };
  std::sort(groups_.begin(), groups_.end(), [&](const auto& a, const auto& b) {
    const int fa = first_stage(a.first);
    const int fb = first_stage(b.first);
    return fa != fb ? fa < fb : a.first < b.first;
  });
  std::uint8_t caps = 0;
  for (std::size_t i = 0; i < groups_.size(); ++i) {
    if (groups_[i].second < 1) {
      throw std::invalid_argument("instance count for " +
                                  groups_[i].first.name() + " must be >= 1");
    }
    if (i > 0 && groups_[i].first == groups_[i - 1].first) {
      throw std::invalid_argument("instance type " + groups_[i].first.name() +
                                  " listed twice");
    }
    caps |= groups_[i].first.caps();
  }
  if (caps != (InstanceType::kE | InstanceType::kP | InstanceType::kD)) {
    throw std::invalid_argument("method " + name() +
                                " does not cover encode, prefill and decode");
  }
}

DisaggregationMethod DisaggregationMethod::parse(const std::string& text) {
  std::vector<std::pair<InstanceType, int>> groups;
  auto count_of = [&](const std::string& digits) {
    const long n = std::stol(digits);
    if (n > 4096) throw std::invalid_argument("instance count too large");
    return static_cast<int>(n);
  };
  if (text.find(':') != std::string::npos) {
    static const std::regex item(R"(\s*([EPDepd]+)\s*:\s*(\d+)\s*)");
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) {
      std::smatch m;
      if (!std::regex_match(part, m, item)) {
        throw std::invalid_argument("bad method item '" + part + "' in '" +
                                    text + "'");
      }
      groups.emplace_back(InstanceType::parse(m[1]), count_of(m[2]));
    }
  } else {
    static const std::regex whole(R"((\+?\d+[EPDepd]+)+)");
    static const std::regex item(R"((\d+)([EPDepd]+))");
    if (!std::regex_match(text, whole)) {
      throw std::invalid_argument("bad disaggregation method '" + text + "'");
    }
    for (auto it = std::sregex_iterator(text.begin(), text.end(), item);
         it != std::sregex_iterator(); ++it) {
      groups.emplace_back(InstanceType::parse((*it)[2]), count_of((*it)[1]));
    }
  }
  return DisaggregationMethod(std::move(groups));
}

int DisaggregationMethod::total() const {
  int n = 0;
  for (const auto& [type, count] : groups_) n += count;
  return n;
}

int DisaggregationMethod::count(InstanceType type) const {
  for (const auto& [t, count] : groups_) {
    if (t == type) return count;
  }
  return 0;
}

std::string DisaggregationMethod::name() const {
  std::string s;
  for (const auto& [type, count] : groups_) {
    s += std::to_string(count) + type.name();
  }
  return s;
}

std::string DisaggregationMethod::family() const {
  std::string s;
  for (const auto& [type, count] : groups_) {
    if (!s.empty()) s += '+';
    s += type.name();
  }
  return s;
}

std::vector<InstanceType> DisaggregationMethod::expand() const {
  std::vector<InstanceType> out;
  for (const auto& [type, count] : groups_) {
    out.insert(out.end(), static_cast<std::size_t>(count), type);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Configuration helpers

void ClusterConfig::validate() const {
  model.validate();
  hw.validate();
  slo.validate();
  params.validate();
  if (preprocess_delay < 0) {
    throw std::invalid_argument("preprocess_delay must be >= 0");
  }
  if (!(image_memory_fraction > 0 && image_memory_fraction < 1)) {
    throw std::invalid_argument("image_memory_fraction must be in (0, 1)");
  }
  if (method.groups().empty()) {
    throw std::invalid_argument("disaggregation method is empty");
  }
}

ExecutionMode ClusterConfig::execution_mode() const {
  if (execution) return *execution;
  return policy == SchedulerPolicy::kStageLevel ? ExecutionMode::kDualStream
                                                : ExecutionMode::kSequential;
}

PoolSizes pool_sizes(InstanceType type, const ClusterConfig& config) {
  const bool images = type.encodes() || type.prefills();
  const bool kv = type.prefills() || type.decodes();
  const double memory = config.params.gamma *
                        (config.hw.gpu_memory_bytes - config.hw.model_weight_bytes);
  const double image_block_bytes =
      static_cast<double>(kImageBlockTokens) * image_bytes_per_token(config.model);
  const double kv_block_bytes =
      static_cast<double>(kKvBlockTokens) * kv_bytes_per_token(config.model);
  const double image_share =
      images && kv ? config.image_memory_fraction : (images ? 1.0 : 0.0);

  PoolSizes sizes;
  if (images) {
    sizes.image_blocks = config.image_blocks
                             ? *config.image_blocks
                             : static_cast<std::uint64_t>(
                                   std::floor(memory * image_share / image_block_bytes));
  }
  if (kv) {
    sizes.kv_blocks = config.kv_blocks
                          ? *config.kv_blocks
                          : static_cast<std::uint64_t>(std::floor(
                                memory * (1.0 - image_share) / kv_block_bytes));
  }
  return sizes;
}

BudgetQuery budget_query(InstanceType type, const ClusterConfig& config,
                         const Trace& trace) {
  BudgetQuery q;
  q.type = type;
  q.cap = derive_latency_cap(type, config.slo, config.params.alpha);
  q.token_ceiling = config.params.token_ceiling;
  q.image_ceiling = type.encodes() ? config.params.image_ceiling : 0;
  q.execution = config.execution_mode();
  std::uint64_t max_image = 0;
  std::uint64_t max_context = 0;
  for (const auto& r : trace.requests) {
    for (auto t : r.image_token_counts) max_image = std::max(max_image, t);
    const StagePlan plan = plan_stages(r, 0.0);
    max_context = std::max(max_context,
                           plan.prefill_total_tokens + plan.decode_steps);
  }
  if (max_image > 0) q.reference_image_tokens = max_image;
  if (max_context > 0) q.reference_context_tokens = max_context;
  return q;
}

std::map<InstanceType, BudgetPair> search_cluster_budgets(
    const ClusterConfig& config, const Trace& trace) {
  std::map<InstanceType, BudgetPair> out;
  for (const auto& [type, count] : config.method.groups()) {
    out[type] = search_budgets(budget_query(type, config, trace), config.model,
                               config.hw);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Router

Router::Router(const std::vector<InstanceType>& instances) {
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (instances[i].encodes()) encoders_.push_back(static_cast<int>(i));
    if (instances[i].prefills()) prefillers_.push_back(static_cast<int>(i));
  }
  if (encoders_.empty() || prefillers_.empty()) {
    throw std::invalid_argument("cluster needs encode- and prefill-capable instances");
  }
}

int Router::route(bool has_images) {
  if (has_images) {
    const int i = encoders_[next_encoder_];
    next_encoder_ = (next_encoder_ + 1) % encoders_.size();
    return i;
  }
  const int i = prefillers_[next_prefiller_];
  next_prefiller_ = (next_prefiller_ + 1) % prefillers_.size();
  return i;
}

// ---------------------------------------------------------------------------
// Simulator

namespace {

constexpr double kUnset = std::numeric_limits<double>::quiet_NaN();
constexpr std::uint64_t kFullScanEvery = 1024;

enum class EventKind { kArrival, kBatchComplete, kMigrationControl, kTransferDone };

struct Event {
  double time = 0.0;
  std::uint64_t seq = 0;
  EventKind kind = EventKind::kArrival;
  std::uint32_t target = 0;

  bool operator>(const Event& o) const {
    return time != o.time ? time > o.time : seq > o.seq;
  }
};

struct Timeline {
  double arrival = 0.0;
  double encode_start = kUnset;
  double encode_done = kUnset;
  double prefill_start = kUnset;
  double first_token = kUnset;
  double decode_start = kUnset;
  double done = kUnset;
  std::optional<JobId> ep_job;
  std::optional<JobId> pd_job;
  int encode_origin = -1;
  std::vector<double> token_times;
  bool arrived = false;
  bool finished = false;
};

class Simulator {
 public:
  Simulator(const ClusterConfig& config, const Trace& trace)
      : config_(config),
        trace_(trace),
        types_(config.method.expand()),
        router_(types_),
        selector_(config.target_policy) {
    config_.validate();
    budgets_ = search_cluster_budgets(config_, trace_);
    progress_.reserve(trace_.size());
    for (const auto& r : trace_.requests) {
      progress_.push_back(RequestProgress::from_plan(r));
    }
    timelines_.resize(trace_.size());
    instances_.reserve(types_.size());
    for (std::size_t i = 0; i < types_.size(); ++i) {
      InstanceConfig ic;
      ic.type = types_[i];
      ic.policy = config_.policy;
      ic.budgets = budgets_.at(types_[i]);
      const PoolSizes pools = pool_sizes(types_[i], config_);
      ic.kv_capacity_blocks = pools.kv_blocks;
      ic.image_capacity_blocks = pools.image_blocks;
      ic.token_ceiling = config_.params.token_ceiling;
      ic.image_ceiling = config_.params.image_ceiling;
      instances_.emplace_back(static_cast<int>(i), ic, &progress_);
    }
    current_.resize(types_.size());
    busy_.assign(types_.size(), false);
    batch_start_.assign(types_.size(), 0.0);
    summaries_.resize(types_.size());
    for (std::size_t i = 0; i < types_.size(); ++i) {
      auto& s = summaries_[i];
      const auto& ic = instances_[i].config();
      s.id = static_cast<int>(i);
      s.type = types_[i].name();
      s.token_budget = ic.budgets.token_budget;
      s.image_budget = ic.budgets.image_budget;
      s.feasible = ic.budgets.feasible;
      s.kv_capacity_blocks = ic.kv_capacity_blocks;
      s.image_capacity_blocks = ic.image_capacity_blocks;
    }
  }

  SimReport run() {
    SimReport report;
    if (trace_.empty()) {
      report.warnings.push_back("empty trace: SLO attainment reported as 1.0");
    }
    for (const auto& [type, b] : budgets_) {
      if (!b.feasible) {
        report.warnings.push_back("instance type " + type.name() +
                                  " cannot meet its latency cap even at the "
                                  "floor budget");
      }
    }
    for (std::size_t r = 0; r < trace_.size(); ++r) {
      push(trace_.requests[r].arrival_time + config_.preprocess_delay,
           EventKind::kArrival, static_cast<std::uint32_t>(r));
    }

    while (!events_.empty()) {
      const Event ev = events_.top();
      events_.pop();
      now_ = ev.time;
      ++report.events;
      switch (ev.kind) {
        case EventKind::kArrival:
          on_arrival(ev.target);
          break;
        case EventKind::kBatchComplete:
          on_batch_complete(static_cast<int>(ev.target));
          break;
        case EventKind::kMigrationControl:
          on_control(ev.target);
          break;
        case EventKind::kTransferDone:
          on_transfer_done(ev.target);
          break;
      }
      if (config_.check_invariants) {
        check(report.events % kFullScanEvery == 0);
        ++report.invariant_checks;
      }
      touched_.clear();
    }
    if (finished_ != trace_.size()) throw SimulationDeadlock(diagnose());
    if (config_.check_invariants) check(true);

    report.makespan = now_;
    report.max_batch_latency = max_batch_latency_;
    report.instances = summaries_;
    for (const auto& job : jobs_) {
      auto& out = job.kind == MigrationKind::kEncodeToPrefill
                      ? report.ep_migration_latencies
                      : report.pd_migration_latencies;
      out.push_back(job.active_latency());
    }
    report.requests.reserve(trace_.size());
    for (std::size_t r = 0; r < trace_.size(); ++r) {
      report.requests.push_back(metrics_for(static_cast<RequestIndex>(r)));
    }
    return report;
  }

 private:
  void push(double time, EventKind kind, std::uint32_t target) {
    events_.push(Event{time, next_seq_++, kind, target});
  }

  void on_arrival(RequestIndex r) {
    auto& tl = timelines_[r];
    tl.arrival = trace_.requests[r].arrival_time;
    tl.arrived = true;
    ++arrived_;
    const bool images = !progress_[r].image_tokens.empty();
    const int i = router_.route(images);
    if (images) tl.encode_origin = i;
    instances_[i].enqueue(r);
    kick(i);
  }

  void on_batch_complete(int i) {
    busy_[i] = false;
    const Batch batch = std::move(current_[i]);
    current_[i] = Batch{};
    const BatchOutcome out = instances_[i].complete_batch(batch);

    for (auto r : out.encodes_finished) timelines_[r].encode_done = now_;
    for (auto r : out.first_tokens) {
      timelines_[r].first_token = now_;
      timelines_[r].token_times.push_back(now_);
    }
    for (auto r : out.decode_tokens) timelines_[r].token_times.push_back(now_);
    for (auto r : out.finished) {
      timelines_[r].done = now_;
      timelines_[r].finished = true;
      ++finished_;
    }
    for (auto r : out.leave_for_prefill) {
      start_migration(r, i, MigrationKind::kEncodeToPrefill);
    }
    for (auto r : out.leave_for_decode) {
      start_migration(r, i, MigrationKind::kPrefillToDecode);
    }
    kick(i);
  }

  void start_migration(RequestIndex r, int source, MigrationKind kind) {
    int target = -1;
    if (kind == MigrationKind::kPrefillToDecode) {
      // Decode returns to the encode origin when it can decode.
      const int origin = timelines_[r].encode_origin;
      if (origin >= 0 && types_[origin].decodes()) target = origin;
    }
    if (target < 0) {
      std::vector<int> candidates;
      std::vector<std::uint64_t> loads;
      for (std::size_t j = 0; j < types_.size(); ++j) {
        const bool ok = kind == MigrationKind::kEncodeToPrefill
                            ? types_[j].prefills()
                            : types_[j].decodes();
        if (!ok) continue;
        candidates.push_back(static_cast<int>(j));
        loads.push_back(instances_[j].outstanding_tokens());
      }
      target = selector_.select(candidates, loads);
    }
    const auto id = static_cast<JobId>(jobs_.size());
    MigrationJob job = make_migration(id, r, kind, source, target, progress_[r],
                                      instances_[source], config_.model);
    job.sent_at = now_;
    jobs_.push_back(job);
    auto& tl = timelines_[r];
    (kind == MigrationKind::kEncodeToPrefill ? tl.ep_job : tl.pd_job) = id;
    in_control_.insert(id);
    push(now_ + config_.hw.migration_fixed_overhead,
         EventKind::kMigrationControl, id);
  }

  void on_control(JobId id) {
    auto& job = jobs_[id];
    job.advance(MigrationPhase::kScheduled);
    job.scheduled_at = now_;
    in_control_.erase(id);
    instances_[job.target].enqueue_migration(job.req, id, job.demand);
    kick(job.target);
  }

  void on_transfer_done(JobId id) {
    auto& job = jobs_[id];
    job.advance(MigrationPhase::kDone);
    job.done_at = now_;
    instances_[job.source].release(job.req);
    instances_[job.target].admit_migrated(job.req);
    kick(job.source);
    kick(job.target);
  }

  void schedule_transfers(int i) {
    for (JobId id : instances_[i].schedule_migrations()) {
      auto& job = jobs_[id];
      job.advance(MigrationPhase::kTransferring);
      job.transfer_start = now_;
      const double done = interconnect_.schedule(
          job.source, job.target, now_, transfer_duration(job.bytes(), config_.hw));
      push(done, EventKind::kTransferDone, id);
    }
  }

  void kick(int i) {
    touched_.push_back(i);
    schedule_transfers(i);
    if (busy_[i]) return;
    Batch batch = instances_[i].form_batch();
    if (batch.empty()) return;
    const double latency = batch_latency(batch, config_.model, config_.hw,
                                         config_.execution_mode());
    for (const auto& e : batch.encodes) {
      auto& tl = timelines_[e.req];
      if (std::isnan(tl.encode_start)) tl.encode_start = now_;
    }
    for (const auto& c : batch.prefills) {
      auto& tl = timelines_[c.req];
      if (std::isnan(tl.prefill_start)) tl.prefill_start = now_;
    }
    for (const auto& d : batch.decodes) {
      auto& tl = timelines_[d.req];
      if (std::isnan(tl.decode_start)) tl.decode_start = now_;
    }
    auto& s = summaries_[i];
    ++s.batches;
    s.busy_time += latency;
    s.peak_kv_blocks = std::max(s.peak_kv_blocks, instances_[i].kv_pool().allocated());
    s.peak_image_blocks =
        std::max(s.peak_image_blocks, instances_[i].image_pool().allocated());
    max_batch_latency_ = std::max(max_batch_latency_, latency);
    busy_[i] = true;
    batch_start_[i] = now_;
    current_[i] = std::move(batch);
    push(now_ + latency, EventKind::kBatchComplete, static_cast<std::uint32_t>(i));
  }

  RequestMetrics metrics_for(RequestIndex r) const {
    const auto& spec = trace_.requests[r];
    const auto& tl = timelines_[r];
    RequestMetrics m;
    m.id = spec.id;
    m.arrival = spec.arrival_time;
    m.slo = spec.slo_or(config_.slo);
    m.images = spec.image_token_counts.size();
    m.visual_tokens = spec.visual_tokens();
    m.prompt_tokens = spec.prompt_tokens;
    m.output_tokens = spec.output_tokens;
    m.finished = tl.finished;
    if (!tl.finished) return m;
    m.ttft = tl.first_token - tl.arrival;
    m.completion = tl.done;
    for (std::size_t k = 1; k < tl.token_times.size(); ++k) {
      m.tbt_values.push_back(tl.token_times[k] - tl.token_times[k - 1]);
    }

    auto& b = m.breakdown;
    double ready = tl.arrival;
    if (!std::isnan(tl.encode_start)) {
      b[0] = tl.encode_start - tl.arrival;
      b[1] = tl.encode_done - tl.encode_start;
      ready = tl.encode_done;
    }
    double extra_queue = 0.0;
    if (tl.ep_job) {
      const auto& job = jobs_[*tl.ep_job];
      b[2] = job.active_latency();
      extra_queue = job.transfer_start - job.scheduled_at;
      ready = job.done_at;
    }
    double start = std::max(tl.prefill_start, ready);
    b[3] = extra_queue + (start - ready);
    b[4] = tl.first_token - start;
    ready = tl.first_token;
    extra_queue = 0.0;
    if (tl.pd_job) {
      const auto& job = jobs_[*tl.pd_job];
      b[5] = job.active_latency();
      extra_queue = job.transfer_start - job.scheduled_at;
      ready = job.done_at;
    }
    if (!std::isnan(tl.decode_start)) {
      start = std::max(tl.decode_start, ready);
      b[6] = extra_queue + (start - ready);
      b[7] = tl.done - start;
    }
    return m;
  }

  // Full checks scan every instance and request; otherwise only the instances
  // the last event touched are verified, plus the global live count.
  void check(bool full) const {
    auto fail = [&](const std::string& what) {
      std::ostringstream os;
      os << "t=" << now_ << ": " << what;
      throw InvariantViolation(os.str());
    };
    // Location of every live request: instance index, or kInControl while a
    // migration control message is in flight.
    constexpr int kNowhere = -1;
    constexpr int kInControl = -2;
    if (where_.size() != trace_.size()) where_.assign(trace_.size(), kNowhere);
    std::vector<RequestIndex> located;
    auto place = [&](RequestIndex r, int at) {
      if (where_[r] != kNowhere) {
        fail("request " + std::to_string(r) + " found at more than one location");
      }
      where_[r] = at;
      located.push_back(r);
    };

    std::vector<int> scope;
    if (full) {
      for (std::size_t i = 0; i < instances_.size(); ++i) scope.push_back(static_cast<int>(i));
    } else {
      scope = touched_;
      std::sort(scope.begin(), scope.end());
      scope.erase(std::unique(scope.begin(), scope.end()), scope.end());
    }

    try {
      std::size_t live = in_control_.size();
      for (const auto& inst : instances_) live += inst.running().size() + inst.waiting_size();
      if (live != arrived_ - finished_) {
        fail(std::to_string(arrived_ - finished_) + " live requests but " +
             std::to_string(live) + " located");
      }

      for (int i : scope) {
        const auto& inst = instances_[i];
        try {
          inst.check_invariants();
          if (full) {
            inst.kv_pool().check_blocks();
            inst.image_pool().check_blocks();
          }
        } catch (const std::logic_error& e) {
          fail(e.what());
        }
        for (auto r : inst.running()) place(r, i);
        for (auto r : inst.waiting_requests()) place(r, i);
      }
      if (full) {
        for (auto id : in_control_) {
          if (jobs_[id].phase != MigrationPhase::kControlSent) {
            fail("job " + std::to_string(id) + " listed in flight but past control");
          }
          place(jobs_[id].req, kInControl);
        }
        std::size_t arrived = 0;
        std::size_t finished = 0;
        for (const auto& tl : timelines_) {
          arrived += tl.arrived ? 1 : 0;
          finished += tl.finished ? 1 : 0;
        }
        if (arrived != arrived_ || finished != finished_) {
          fail("arrival or finish count drifted");
        }
        const auto in_control =
            std::count_if(jobs_.begin(), jobs_.end(), [](const MigrationJob& j) {
              return j.phase == MigrationPhase::kControlSent;
            });
        if (static_cast<std::size_t>(in_control) != in_control_.size()) {
          fail("control message count drifted");
        }
      }
      for (auto r : located) {
        if (!timelines_[r].arrived || timelines_[r].finished) {
          fail("request " + std::to_string(r) + " is queued but not live");
        }
      }

      // Blocks held by a request that is neither running nor queued here must
      // belong to an outgoing migration that has not completed.
      for (int i : scope) {
        const auto& inst = instances_[i];
        for (const CachePool* pool : {&inst.kv_pool(), &inst.image_pool()}) {
          for (const auto& [r, blocks] : pool->owners()) {
            if (where_[r] == i) continue;
            const auto& tl = timelines_[r];
            bool outgoing = false;
            for (const auto& id : {tl.ep_job, tl.pd_job}) {
              if (id && jobs_[*id].source == i &&
                  jobs_[*id].phase != MigrationPhase::kDone) {
                outgoing = true;
              }
            }
            if (!outgoing) {
              fail("instance " + std::to_string(i) + " holds blocks for request " +
                   std::to_string(r) + " with no reason to");
            }
          }
        }
      }
    } catch (...) {
      for (auto r : located) where_[r] = kNowhere;
      throw;
    }
    for (auto r : located) where_[r] = kNowhere;
  }

  std::string diagnose() const {
    std::ostringstream os;
    os << "simulation stalled at t=" << now_ << " with "
       << trace_.size() - finished_ << " unfinished requests";
    for (std::size_t i = 0; i < instances_.size(); ++i) {
      const auto& inst = instances_[i];
      if (!inst.has_pending_work()) continue;
      os << "; instance " << i << " (" << types_[i].name() << ") has "
         << inst.running().size() << " running, " << inst.waiting_size()
         << " waiting, kv pool " << inst.kv_pool().allocated() << "/"
         << inst.kv_pool().capacity() << " blocks, image pool "
         << inst.image_pool().allocated() << "/" << inst.image_pool().capacity()
         << " blocks";
      const char* starved = inst.kv_pool().free_blocks() <= inst.image_pool().free_blocks()
                                ? "kv"
                                : "image";
      if (inst.kv_pool().capacity() == 0) starved = "image";
      if (inst.image_pool().capacity() == 0) starved = "kv";
      os << " (starved: " << starved << " pool)";
    }
    return os.str();
  }

  ClusterConfig config_;
  const Trace& trace_;
  std::vector<InstanceType> types_;
  Router router_;
  TargetSelector selector_;
  Interconnect interconnect_;
  std::map<InstanceType, BudgetPair> budgets_;
  std::vector<RequestProgress> progress_;
  std::vector<Timeline> timelines_;
  std::vector<Instance> instances_;
  std::vector<Batch> current_;
  std::vector<bool> busy_;
  std::vector<double> batch_start_;
  std::vector<InstanceSummary> summaries_;
  std::vector<MigrationJob> jobs_;
  std::priority_queue<Event, std::vector<Event>, std::greater<Event>> events_;
  std::uint64_t next_seq_ = 0;
  double now_ = 0.0;
  std::size_t arrived_ = 0;
  std::size_t finished_ = 0;
  std::set<JobId> in_control_;
  mutable std::vector<int> where_;
  std::vector<int> touched_;
  double max_batch_latency_ = 0.0;
};

}  // namespace

SimReport run(const ClusterConfig& config, const Trace& trace) {
  return Simulator(config, trace).run();
}

double attainment_at_rate(const ClusterConfig& config, const Trace& trace,
                          double rate) {
  return slo_attainment(run(config, scale_to_rate(trace, rate)));
}

GoodputResult cluster_goodput(const ClusterConfig& config, const Trace& trace,
                              double low, double high, double tolerance) {
  return find_goodput(
      [&](double rate) { return attainment_at_rate(config, trace, rate); }, low,
      high, tolerance);
}

}  // namespace epdsim
