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
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "epdsim/model_cost.h"
#include "epdsim/workload.h"

namespace epdsim {

using RequestIndex = std::uint32_t;
using JobId = std::uint32_t;

// Nonempty subset of {E, P, D}.
class InstanceType {
 public:
  static constexpr std::uint8_t kE = 1;
  static constexpr std::uint8_t kP = 2;
  static constexpr std::uint8_t kD = 4;

  constexpr InstanceType() = default;
  // Throws std::invalid_argument for an empty or out-of-range mask.
  explicit InstanceType(std::uint8_t caps);

  // Accepts "E", "EP", "PD", "EPD", ... in any letter order.
  static InstanceType parse(const std::string& name);
  // E, P, D, EP, ED, PD, EPD.
  static const std::vector<InstanceType>& all();

  bool has(StageKind stage) const;
  bool encodes() const { return caps_ & kE; }
  bool prefills() const { return caps_ & kP; }
  bool decodes() const { return caps_ & kD; }
  bool runs_language() const { return caps_ & (kP | kD); }
  std::uint8_t caps() const { return caps_; }
  std::string name() const;

  friend bool operator==(InstanceType, InstanceType) = default;
  friend auto operator<=>(InstanceType a, InstanceType b) {
    return a.order() <=> b.order();
  }

 private:
  int order() const;
  std::uint8_t caps_ = kE | kP | kD;
};

enum class SchedulerPolicy { kStageLevel, kPrefillPrioritized, kStallFreeChunked };
enum class ExecutionMode { kDualStream, kSequential };

const char* to_string(SchedulerPolicy policy);
SchedulerPolicy parse_policy(const std::string& name);
const char* to_string(ExecutionMode mode);

struct SchedulerParams {
  double alpha = 0.5;
  double beta = 0.5;
  double gamma = 0.9;
  std::int64_t token_ceiling = 16384;
  std::int64_t image_ceiling = 128;

  void validate() const;
};

// alpha * TTFT for instances that stop before decode, TBT otherwise.
double derive_latency_cap(InstanceType type, const SloSpec& slo,
                          double alpha = 0.5);

struct BudgetPair {
  std::int64_t token_budget = 1;
  std::int64_t image_budget = 0;
  bool feasible = true;
};

// kReserveImage searches the token budget with one image reserved on types
// that both encode and run the language model. kTokensFirst searches it with
// no images and fits images into whatever is left.
enum class BudgetOrder { kReserveImage, kTokensFirst };

struct BudgetQuery {
  InstanceType type;
  double cap = 0.0;
  std::int64_t token_ceiling = 16384;
  std::int64_t image_ceiling = 128;
  // The profiling batch: images of this size, and decode entries at this KV
  // length for decode-capable types.
  std::uint64_t reference_image_tokens = 576;
  std::uint64_t reference_context_tokens = 1024;
  ExecutionMode execution = ExecutionMode::kDualStream;
  BudgetOrder order = BudgetOrder::kReserveImage;
};

// Latency of a batch with `images` images and `tokens` language tokens.
using BatchLatencyFn = std::function<double(std::int64_t images, std::int64_t tokens)>;

// Latency of the profiling batch with `images` images and `tokens` language
// tokens. The language part is one prefill chunk for P types, `tokens` decode
// entries for D types, and the slower of the two when both run here.
double reference_batch_latency(const BudgetQuery& query, std::int64_t images,
                               std::int64_t tokens, const ModelProfile& model,
                               const HardwareProfile& hw);

// Binary-searches the largest budgets whose profiling batch meets the cap.
// Types that encode and run the language model reserve one image while the
// token budget is searched, so images always make progress.
BudgetPair search_budgets(const BudgetQuery& query, const ModelProfile& model,
                          const HardwareProfile& hw);
// Same search against an arbitrary latency model. Reference sizes and the
// execution mode in `query` are ignored.
BudgetPair search_budgets(const BudgetQuery& query, const BatchLatencyFn& latency);

// Paged allocator handing out whole blocks to requests.
class CachePool {
 public:
  CachePool() = default;
  CachePool(std::uint64_t block_tokens, std::uint64_t capacity_blocks);

  // Grows the request's allocation to `blocks`. All-or-nothing; returns false
  // and changes nothing when the pool is short.
  bool ensure(RequestIndex req, std::uint64_t blocks);
  bool can_grow(RequestIndex req, std::uint64_t blocks) const;
  void release(RequestIndex req);

  std::uint64_t held(RequestIndex req) const;
  std::uint64_t block_tokens() const { return block_tokens_; }
  std::uint64_t capacity() const { return capacity_; }
  std::uint64_t allocated() const { return capacity_ - free_.size(); }
  std::uint64_t free_blocks() const { return free_.size(); }
  const std::map<RequestIndex, std::vector<std::uint32_t>>& owners() const {
    return owners_;
  }

  // Counting check: owned + free == capacity and no empty owner entries.
  // Throws std::logic_error.
  void check() const;
  // Full scan: every block is owned by exactly one request or free.
  void check_blocks() const;

 private:
  std::uint64_t block_tokens_ = 16;
  std::uint64_t capacity_ = 0;
  std::uint64_t owned_ = 0;
  std::vector<std::uint32_t> free_;
  std::map<RequestIndex, std::vector<std::uint32_t>> owners_;
};

// Per-request progress, shared by whichever instance currently owns it.
struct RequestProgress {
  std::vector<std::uint64_t> image_tokens;
  std::uint64_t images_done = 0;
  std::uint64_t images_inflight = 0;
  std::uint64_t prefill_total = 0;
  std::uint64_t prefill_done = 0;
  std::uint64_t prefill_inflight = 0;
  std::uint64_t decode_total = 0;
  std::uint64_t decode_done = 0;
  bool decode_inflight = false;
  std::uint64_t kv_len = 0;

  enum class Stage { kEncode, kPrefill, kDecode, kDone };
  Stage stage() const;

  static RequestProgress from_plan(const RequestSpec& spec);

  std::uint64_t image_tokens_through(std::uint64_t images) const;
  // Blocks the cursor implies on the owning instance.
  std::uint64_t implied_image_blocks() const;
  std::uint64_t implied_kv_blocks() const;
  // Outstanding work in tokens, for least-load target selection.
  std::uint64_t outstanding_tokens() const;
};

struct DecodeEntry {
  RequestIndex req = 0;
  std::uint64_t kv_len = 0;
};

struct PrefillChunk {
  RequestIndex req = 0;
  std::uint64_t tokens = 0;
};

struct EncodeEntry {
  RequestIndex req = 0;
  std::uint64_t images = 0;
  std::vector<std::uint64_t> image_tokens;
};

struct Batch {
  std::vector<DecodeEntry> decodes;
  std::vector<PrefillChunk> prefills;
  std::vector<EncodeEntry> encodes;

  bool empty() const {
    return decodes.empty() && prefills.empty() && encodes.empty();
  }
  std::uint64_t language_tokens() const;
  std::uint64_t images() const;
  BatchShape shape() const;
};

double batch_latency(const Batch& batch, const ModelProfile& model,
                     const HardwareProfile& hw, ExecutionMode mode);

struct InstanceConfig {
  InstanceType type;
  SchedulerPolicy policy = SchedulerPolicy::kStageLevel;
  BudgetPair budgets;
  std::uint64_t kv_capacity_blocks = 0;
  std::uint64_t image_capacity_blocks = 0;
  std::int64_t token_ceiling = 16384;
  std::int64_t image_ceiling = 128;
};

// Block counts a migration asks the target to allocate.
struct BlockDemand {
  std::uint64_t kv_blocks = 0;
  std::uint64_t image_blocks = 0;
};

struct BatchOutcome {
  std::vector<RequestIndex> decode_tokens;
  std::vector<RequestIndex> first_tokens;
  std::vector<RequestIndex> encodes_finished;
  std::vector<RequestIndex> finished;
  std::vector<RequestIndex> leave_for_prefill;  // encoded here, no P
  std::vector<RequestIndex> leave_for_decode;   // prefilled here, no D
};

// One simulated engine. Owns its queues and cache pools; request progress
// lives in a table shared with the cluster.
class Instance {
 public:
  Instance(int id, InstanceConfig config,
           std::vector<RequestProgress>* requests);

  int id() const { return id_; }
  InstanceType type() const { return config_.type; }
  const InstanceConfig& config() const { return config_; }
  const BudgetPair& budgets() const { return config_.budgets; }

  void enqueue(RequestIndex req);
  // Migrations enter at the head of the waiting queue.
  void enqueue_migration(RequestIndex req, JobId job, BlockDemand demand);
  // Allocates target blocks for queued migrations. Returns the jobs that got
  // their blocks; the rest stay queued until blocks free up.
  std::vector<JobId> schedule_migrations();
  // Transfer finished: the request becomes runnable here.
  void admit_migrated(RequestIndex req);

  Batch form_batch();
  BatchOutcome complete_batch(const Batch& batch);
  // Frees everything the request holds here.
  void release(RequestIndex req);

  bool has_pending_work() const;
  std::size_t waiting_size() const { return waiting_.size(); }
  const std::vector<RequestIndex>& running() const { return running_; }
  std::vector<RequestIndex> waiting_requests() const;
  std::uint64_t outstanding_tokens() const;

  const CachePool& kv_pool() const { return kv_pool_; }
  const CachePool& image_pool() const { return image_pool_; }
  // KV blocks promised to admitted requests but not yet allocated.
  std::uint64_t kv_reserved() const;
  // Free KV blocks not promised to anyone.
  std::uint64_t kv_headroom() const;

  // Pool accounting plus the cursor-implied holdings of running requests.
  void check_invariants() const;

 private:
  struct Waiting {
    RequestIndex req = 0;
    std::optional<JobId> job;
    BlockDemand demand;
    bool transferring = false;
  };

  std::int64_t effective_image_budget() const;
  // Largest KV footprint the request reaches on this instance.
  std::uint64_t final_kv_blocks(RequestIndex req) const;
  // A request's first KV block commits its final footprint; later growth is
  // covered by that commitment.
  bool can_grow_kv(RequestIndex req, std::uint64_t tokens) const;
  bool grow_kv(RequestIndex req, std::uint64_t tokens);
  void commit_kv(RequestIndex req, std::uint64_t blocks);
  bool grow_images(RequestIndex req, std::uint64_t images);
  void admit(std::size_t waiting_pos);
  void remove_running(RequestIndex req);

  void add_decodes(Batch& batch, std::uint64_t& n_t);
  Batch form_stage_level();
  Batch form_stall_free();
  Batch form_prefill_prioritized();

  int id_;
  InstanceConfig config_;
  std::vector<RequestProgress>* requests_;
  std::deque<Waiting> waiting_;
  std::vector<RequestIndex> running_;
  CachePool kv_pool_;
  CachePool image_pool_;
  std::map<RequestIndex, std::uint64_t> kv_commit_;
  std::uint64_t kv_committed_ = 0;
};

}  // namespace epdsim
