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

#include "epdsim/engine.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace epdsim {

InstanceType::InstanceType(std::uint8_t caps) : caps_(caps) {
  if (caps == 0 || caps > (kE | kP | kD)) {
    throw std::invalid_argument("instance type needs a nonempty subset of E, P, D");
  }
}

InstanceType InstanceType::parse(const std::string& name) {
  std::uint8_t caps = 0;
  for (char c : name) {
    std::uint8_t bit = 0;
    switch (c) {
      case 'E':
      case 'e':
        bit = kE;
        break;
      case 'P':
      case 'p':
        bit = kP;
        break;
      case 'D':
      case 'd':
        bit = kD;
        break;
      default:
        throw std::invalid_argument("bad instance type '" + name + "'");
    }
    if (caps & bit) {
      throw std::invalid_argument("repeated stage in instance type '" + name + "'");
    }
    caps |= bit;
  }
  return InstanceType(caps);
}

const std::vector<InstanceType>& InstanceType::all() {
  static const std::vector<InstanceType> types = {
      InstanceType(kE),      InstanceType(kP),      InstanceType(kD),
      InstanceType(kE | kP), InstanceType(kE | kD), InstanceType(kP | kD),
      InstanceType(kE | kP | kD)};
  return types;
}

bool InstanceType::has(StageKind stage) const {
  switch (stage) {
    case StageKind::kEncode:
      return encodes();
    case StageKind::kPrefill:
      return prefills();
    case StageKind::kDecode:
      return decodes();
  }
  return false;
}

std::string InstanceType::name() const {
  std::string s;
  if (encodes()) s += 'E';
  if (prefills()) s += 'P';
  if (decodes()) s += 'D';
  return s;
}

int InstanceType::order() const {
  const auto& types = all();
  for (std::size_t i = 0; i < types.size(); ++i) {
    if (types[i].caps_ == caps_) return static_cast<int>(i);
  }
  return -1;
}

const char* to_string(SchedulerPolicy policy) {
  switch (policy) {
    case SchedulerPolicy::kStageLevel:
      return "stage_level";
    case SchedulerPolicy::kPrefillPrioritized:
      return "prefill_prioritized";
    case SchedulerPolicy::kStallFreeChunked:
      return "stall_free_chunked";
  }
  return "?";
}

SchedulerPolicy parse_policy(const std::string& name) {
  if (name == "stage_level") return SchedulerPolicy::kStageLevel;
  if (name == "prefill_prioritized") return SchedulerPolicy::kPrefillPrioritized;
  if (name == "stall_free_chunked") return SchedulerPolicy::kStallFreeChunked;
  throw std::invalid_argument("unknown scheduler policy '" + name + "'");
}

const char* to_string(ExecutionMode mode) {
  return mode == ExecutionMode::kDualStream ? "dual_stream" : "sequential";
}

void SchedulerParams::validate() const {
  if (!(alpha > 0.0 && alpha <= 1.0) || !(beta > 0.0 && beta <= 1.0)) {
    throw std::invalid_argument("alpha and beta must be in (0, 1]");
  }
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw std::invalid_argument("gamma must be in (0, 1)");
  }
  if (token_ceiling < 1 || image_ceiling < 0) {
    throw std::invalid_argument("budget ceilings must be positive");
  }
}

double derive_latency_cap(InstanceType type, const SloSpec& slo, double alpha) {
  return type.decodes() ? slo.tbt_max : alpha * slo.ttft_max;
}

// ---------------------------------------------------------------------------
// Budget search

double reference_batch_latency(const BudgetQuery& query, std::int64_t images,
                               std::int64_t tokens, const ModelProfile& model,
                               const HardwareProfile& hw) {
  auto latency = [&](bool as_decodes) {
    BatchShape shape;
    shape.image_tokens.assign(static_cast<std::size_t>(images),
                              query.reference_image_tokens);
    if (tokens > 0) {
      if (as_decodes) {
        shape.decode_contexts.assign(static_cast<std::size_t>(tokens),
                                     query.reference_context_tokens);
      } else {
        shape.prefill_chunks.push_back(static_cast<std::uint64_t>(tokens));
      }
    }
    const StreamWork work = batch_work(shape, model);
    return query.execution == ExecutionMode::kDualStream
               ? dual_stream_latency(work.vision, work.language, hw)
               : sequential_latency(work.vision, work.language, hw);
  };
  if (!query.type.decodes()) return latency(false);
  if (!query.type.prefills()) return latency(true);
  // Any mix of chunks and shorter decodes is bounded by the worse pure shape.
  return std::max(latency(true), latency(false));
}

namespace {

// Largest n in [lo, hi] with fits(n), assuming fits is monotone and fits(lo).
template <typename Fits>
std::int64_t largest_fitting(std::int64_t lo, std::int64_t hi, Fits fits) {
  while (lo < hi) {
    const std::int64_t mid = lo + (hi - lo + 1) / 2;
    if (fits(mid)) {
      lo = mid;
    } else {
      hi = mid - 1;
    }
  }
  return lo;
}

}  // namespace

BudgetPair search_budgets(const BudgetQuery& query, const BatchLatencyFn& latency) {
  const BudgetPair floor{1, 0, false};
  auto fits = [&](std::int64_t images, std::int64_t tokens) {
    return latency(images, tokens) <= query.cap;
  };

  if (!query.type.runs_language()) {
    if (query.image_ceiling < 1 || !fits(1, 0)) return floor;
    const auto images = largest_fitting(
        1, query.image_ceiling, [&](std::int64_t e) { return fits(e, 0); });
    return BudgetPair{1, images, true};
  }

  const bool encodes = query.type.encodes() && query.image_ceiling >= 1;
  const std::int64_t reserve =
      encodes && query.order == BudgetOrder::kReserveImage ? 1 : 0;
  if (!fits(reserve, 1)) return floor;
  const auto tokens = largest_fitting(
      1, query.token_ceiling, [&](std::int64_t t) { return fits(reserve, t); });
  if (!encodes) return BudgetPair{tokens, 0, true};
  const auto images = largest_fitting(
      reserve, query.image_ceiling, [&](std::int64_t e) { return fits(e, tokens); });
  return BudgetPair{tokens, images, true};
}

BudgetPair search_budgets(const BudgetQuery& query, const ModelProfile& model,
                          const HardwareProfile& hw) {
  return search_budgets(query, [&](std::int64_t images, std::int64_t tokens) {
    return reference_batch_latency(query, images, tokens, model, hw);
  });
}

// ---------------------------------------------------------------------------
// Cache pool

CachePool::CachePool(std::uint64_t block_tokens, std::uint64_t capacity_blocks)
    : block_tokens_(block_tokens), capacity_(capacity_blocks) {
  if (block_tokens == 0) throw std::invalid_argument("block size must be > 0");
  if (capacity_blocks > std::numeric_limits<std::uint32_t>::max()) {
    throw std::invalid_argument("cache pool too large");
  }
  free_.reserve(capacity_blocks);
  // Lowest ids come off the back first.
  for (std::uint64_t i = capacity_blocks; i > 0; --i) {
    free_.push_back(static_cast<std::uint32_t>(i - 1));
  }
}

std::uint64_t CachePool::held(RequestIndex req) const {
  auto it = owners_.find(req);
  return it == owners_.end() ? 0 : it->second.size();
}

bool CachePool::can_grow(RequestIndex req, std::uint64_t blocks) const {
  const auto have = held(req);
  return blocks <= have || blocks - have <= free_.size();
}

bool CachePool::ensure(RequestIndex req, std::uint64_t blocks) {
  if (!can_grow(req, blocks)) return false;
  const auto have = held(req);
  if (blocks <= have) return true;
  auto& mine = owners_[req];
  for (std::uint64_t i = have; i < blocks; ++i) {
    mine.push_back(free_.back());
    free_.pop_back();
  }
  owned_ += blocks - have;
  return true;
}

void CachePool::release(RequestIndex req) {
  auto it = owners_.find(req);
  if (it == owners_.end()) return;
  for (auto b = it->second.rbegin(); b != it->second.rend(); ++b) {
    free_.push_back(*b);
  }
  owned_ -= it->second.size();
  owners_.erase(it);
}

void CachePool::check() const {
  std::uint64_t owned = 0;
  for (const auto& [req, blocks] : owners_) {
    if (blocks.empty()) throw std::logic_error("cache pool: empty owner entry");
    owned += blocks.size();
  }
  if (owned != owned_ || owned + free_.size() != capacity_) {
    throw std::logic_error("cache pool: free + allocated != capacity");
  }
}

void CachePool::check_blocks() const {
  check();
  std::vector<bool> seen(capacity_, false);
  auto mark = [&](std::uint32_t b) {
    if (b >= capacity_ || seen[b]) {
      throw std::logic_error("cache pool: block " + std::to_string(b) +
                             " double-booked or out of range");
    }
    seen[b] = true;
  };
  for (const auto& [req, blocks] : owners_) {
    for (auto b : blocks) mark(b);
  }
  for (auto b : free_) mark(b);
}

// ---------------------------------------------------------------------------
// Request progress

RequestProgress::Stage RequestProgress::stage() const {
  if (images_done < image_tokens.size()) return Stage::kEncode;
  if (prefill_done < prefill_total) return Stage::kPrefill;
  if (decode_done < decode_total) return Stage::kDecode;
  return Stage::kDone;
}

RequestProgress RequestProgress::from_plan(const RequestSpec& spec) {
  const StagePlan plan = plan_stages(spec, 0.0);
  RequestProgress p;
  p.image_tokens = spec.image_token_counts;
  p.prefill_total = plan.prefill_total_tokens;
  p.decode_total = plan.decode_steps;
  return p;
}

std::uint64_t RequestProgress::image_tokens_through(std::uint64_t images) const {
  std::uint64_t n = 0;
  for (std::uint64_t i = 0; i < images && i < image_tokens.size(); ++i) {
    n += image_tokens[i];
  }
  return n;
}

std::uint64_t RequestProgress::implied_image_blocks() const {
  if (prefill_done >= prefill_total) return 0;
  return blocks_for(image_tokens_through(images_done + images_inflight),
                    kImageBlockTokens);
}

std::uint64_t RequestProgress::implied_kv_blocks() const {
  return blocks_for(kv_len + prefill_inflight + (decode_inflight ? 1 : 0),
                    kKvBlockTokens);
}

std::uint64_t RequestProgress::outstanding_tokens() const {
  return image_tokens_through(image_tokens.size()) -
         image_tokens_through(images_done) + (prefill_total - prefill_done) +
         (decode_total - decode_done);
}

// ---------------------------------------------------------------------------
// Batches

std::uint64_t Batch::language_tokens() const {
  std::uint64_t n = decodes.size();
  for (const auto& c : prefills) n += c.tokens;
  return n;
}

std::uint64_t Batch::images() const {
  std::uint64_t n = 0;
  for (const auto& e : encodes) n += e.images;
  return n;
}

BatchShape Batch::shape() const {
  BatchShape s;
  for (const auto& e : encodes) {
    s.image_tokens.insert(s.image_tokens.end(), e.image_tokens.begin(),
                          e.image_tokens.end());
  }
  for (const auto& c : prefills) s.prefill_chunks.push_back(c.tokens);
  for (const auto& d : decodes) s.decode_contexts.push_back(d.kv_len);
  return s;
}

double batch_latency(const Batch& batch, const ModelProfile& model,
                     const HardwareProfile& hw, ExecutionMode mode) {
  const StreamWork work = batch_work(batch.shape(), model);
  return mode == ExecutionMode::kDualStream
             ? dual_stream_latency(work.vision, work.language, hw)
             : sequential_latency(work.vision, work.language, hw);
}

// ---------------------------------------------------------------------------
// Instance

Instance::Instance(int id, InstanceConfig config,
                   std::vector<RequestProgress>* requests)
    : id_(id),
      config_(config),
      requests_(requests),
      kv_pool_(kKvBlockTokens, config.kv_capacity_blocks),
      image_pool_(kImageBlockTokens, config.image_capacity_blocks) {}

void Instance::enqueue(RequestIndex req) {
  waiting_.push_back(Waiting{req, std::nullopt, {}, false});
}

void Instance::enqueue_migration(RequestIndex req, JobId job,
                                 BlockDemand demand) {
  waiting_.push_front(Waiting{req, job, demand, false});
}

std::vector<JobId> Instance::schedule_migrations() {
  std::vector<JobId> started;
  for (auto& w : waiting_) {
    if (!w.job || w.transferring) continue;
    const std::uint64_t commit =
        w.demand.kv_blocks > 0 ? std::max(w.demand.kv_blocks, final_kv_blocks(w.req)) : 0;
    if (commit > kv_headroom() ||
        !image_pool_.can_grow(w.req, w.demand.image_blocks)) {
      continue;
    }
    if (commit > 0) commit_kv(w.req, commit);
    kv_pool_.ensure(w.req, w.demand.kv_blocks);
    image_pool_.ensure(w.req, w.demand.image_blocks);
    w.transferring = true;
    started.push_back(*w.job);
  }
  return started;
}

void Instance::admit_migrated(RequestIndex req) {
  auto it = std::find_if(waiting_.begin(), waiting_.end(),
                         [&](const Waiting& w) { return w.req == req && w.job; });
  if (it == waiting_.end() || !it->transferring) {
    throw std::logic_error("admit_migrated: request " + std::to_string(req) +
                           " has no transfer in flight on instance " +
                           std::to_string(id_));
  }
  waiting_.erase(it);
  running_.push_back(req);
}

std::int64_t Instance::effective_image_budget() const {
  if (!config_.type.encodes()) return 0;
  return std::max<std::int64_t>(1, config_.budgets.image_budget);
}

std::uint64_t Instance::final_kv_blocks(RequestIndex req) const {
  const auto& p = (*requests_)[req];
  const std::uint64_t tokens =
      p.prefill_total + (config_.type.decodes() ? p.decode_total : 0);
  return blocks_for(tokens, kKvBlockTokens);
}

std::uint64_t Instance::kv_reserved() const {
  return kv_committed_ - kv_pool_.allocated();
}

std::uint64_t Instance::kv_headroom() const {
  return kv_pool_.free_blocks() - kv_reserved();
}

void Instance::commit_kv(RequestIndex req, std::uint64_t blocks) {
  kv_commit_[req] = blocks;
  kv_committed_ += blocks;
}

bool Instance::can_grow_kv(RequestIndex req, std::uint64_t tokens) const {
  const auto blocks = blocks_for(tokens, kKvBlockTokens);
  auto it = kv_commit_.find(req);
  if (it != kv_commit_.end()) {
    return blocks <= it->second && kv_pool_.can_grow(req, blocks);
  }
  return std::max(blocks, final_kv_blocks(req)) <= kv_headroom();
}

bool Instance::grow_kv(RequestIndex req, std::uint64_t tokens) {
  if (!can_grow_kv(req, tokens)) return false;
  const auto blocks = blocks_for(tokens, kKvBlockTokens);
  if (!kv_commit_.count(req)) commit_kv(req, std::max(blocks, final_kv_blocks(req)));
  return kv_pool_.ensure(req, blocks);
}

bool Instance::grow_images(RequestIndex req, std::uint64_t images) {
  const auto& p = (*requests_)[req];
  return image_pool_.ensure(
      req, blocks_for(p.image_tokens_through(images), kImageBlockTokens));
}

void Instance::admit(std::size_t waiting_pos) {
  running_.push_back(waiting_[waiting_pos].req);
  waiting_.erase(waiting_.begin() + static_cast<std::ptrdiff_t>(waiting_pos));
}

void Instance::remove_running(RequestIndex req) {
  auto it = std::find(running_.begin(), running_.end(), req);
  if (it != running_.end()) running_.erase(it);
}

void Instance::release(RequestIndex req) {
  auto it = kv_commit_.find(req);
  if (it != kv_commit_.end()) {
    kv_committed_ -= it->second;
    kv_commit_.erase(it);
  }
  kv_pool_.release(req);
  image_pool_.release(req);
}

bool Instance::has_pending_work() const {
  return !running_.empty() || !waiting_.empty();
}

std::vector<RequestIndex> Instance::waiting_requests() const {
  std::vector<RequestIndex> out;
  for (const auto& w : waiting_) out.push_back(w.req);
  return out;
}

std::uint64_t Instance::outstanding_tokens() const {
  std::uint64_t n = 0;
  for (auto r : running_) n += (*requests_)[r].outstanding_tokens();
  for (const auto& w : waiting_) n += (*requests_)[w.req].outstanding_tokens();
  return n;
}

namespace {

using Stage = RequestProgress::Stage;

EncodeEntry make_encode(RequestIndex req, const RequestProgress& p,
                        std::uint64_t images) {
  EncodeEntry e;
  e.req = req;
  e.images = images;
  e.image_tokens.assign(
      p.image_tokens.begin() + static_cast<std::ptrdiff_t>(p.images_done),
      p.image_tokens.begin() +
          static_cast<std::ptrdiff_t>(p.images_done + images));
  return e;
}

}  // namespace

void Instance::add_decodes(Batch& batch, std::uint64_t& n_t) {
  if (!config_.type.decodes()) return;
  for (auto r : running_) {
    auto& p = (*requests_)[r];
    if (p.stage() != Stage::kDecode) continue;
    // A decode that cannot grow its KV by one token sits this batch out.
    if (!grow_kv(r, p.kv_len + 1)) continue;
    batch.decodes.push_back(DecodeEntry{r, p.kv_len});
    p.decode_inflight = true;
    ++n_t;
  }
}

Batch Instance::form_batch() {
  switch (config_.policy) {
    case SchedulerPolicy::kStageLevel:
      return form_stage_level();
    case SchedulerPolicy::kStallFreeChunked:
      return form_stall_free();
    case SchedulerPolicy::kPrefillPrioritized:
      return form_prefill_prioritized();
  }
  return {};
}

Batch Instance::form_stage_level() {
  Batch batch;
  const auto token_budget =
      static_cast<std::uint64_t>(config_.budgets.token_budget);
  const auto image_budget = static_cast<std::uint64_t>(effective_image_budget());
  std::uint64_t n_t = 0;
  std::uint64_t n_e = 0;

  add_decodes(batch, n_t);

  for (auto r : running_) {
    auto& p = (*requests_)[r];
    const Stage st = p.stage();
    if (st == Stage::kPrefill && config_.type.prefills() && n_t < token_budget) {
      const auto chunk =
          std::min(p.prefill_total - p.prefill_done, token_budget - n_t);
      if (grow_kv(r, p.kv_len + chunk)) {
        batch.prefills.push_back(PrefillChunk{r, chunk});
        p.prefill_inflight = chunk;
        n_t += chunk;
      }
    }
    if (st == Stage::kEncode && config_.type.encodes() && n_e < image_budget) {
      const auto k = std::min<std::uint64_t>(
          p.image_tokens.size() - p.images_done, image_budget - n_e);
      if (grow_images(r, p.images_done + k)) {
        batch.encodes.push_back(make_encode(r, p, k));
        p.images_inflight = k;
        n_e += k;
      }
    }
  }

  // New text requests fill the token budget.
  if (config_.type.prefills()) {
    std::size_t pos = 0;
    while (n_t < token_budget && pos < waiting_.size()) {
      const auto& w = waiting_[pos];
      auto& p = (*requests_)[w.req];
      if (w.job || p.stage() != Stage::kPrefill) {
        ++pos;
        continue;
      }
      const auto chunk = std::min(p.prefill_total - p.prefill_done,
                                  token_budget - n_t);
      if (!grow_kv(w.req, p.kv_len + chunk)) break;
      batch.prefills.push_back(PrefillChunk{w.req, chunk});
      p.prefill_inflight = chunk;
      n_t += chunk;
      admit(pos);
    }
  }

  // New multimodal requests fill the image budget.
  if (config_.type.encodes()) {
    std::size_t pos = 0;
    while (n_e < image_budget && pos < waiting_.size()) {
      const auto& w = waiting_[pos];
      auto& p = (*requests_)[w.req];
      if (w.job || p.stage() != Stage::kEncode) {
        ++pos;
        continue;
      }
      const auto k = std::min<std::uint64_t>(
          p.image_tokens.size() - p.images_done, image_budget - n_e);
      if (!grow_images(w.req, p.images_done + k)) break;
      batch.encodes.push_back(make_encode(w.req, p, k));
      p.images_inflight = k;
      n_e += k;
      admit(pos);
    }
  }
  return batch;
}

Batch Instance::form_stall_free() {
  Batch batch;
  const auto token_budget =
      static_cast<std::uint64_t>(config_.budgets.token_budget);
  const bool language = config_.type.prefills();
  std::uint64_t n_t = 0;

  add_decodes(batch, n_t);

  for (auto r : running_) {
    auto& p = (*requests_)[r];
    const Stage st = p.stage();
    if (st == Stage::kPrefill && language && n_t < token_budget) {
      const auto chunk =
          std::min(p.prefill_total - p.prefill_done, token_budget - n_t);
      if (grow_kv(r, p.kv_len + chunk)) {
        batch.prefills.push_back(PrefillChunk{r, chunk});
        p.prefill_inflight = chunk;
        n_t += chunk;
      }
    } else if (st == Stage::kEncode && config_.type.encodes()) {
      const auto k = p.image_tokens.size() - p.images_done;
      if (grow_images(r, p.image_tokens.size())) {
        batch.encodes.push_back(make_encode(r, p, k));
        p.images_inflight = k;
      }
    }
  }

  // Admission is gated by the token budget only; images ride along with the
  // first chunk of their request.
  std::size_t pos = 0;
  while (pos < waiting_.size() && (!language || n_t < token_budget)) {
    const auto& w = waiting_[pos];
    const RequestIndex r = w.req;
    auto& p = (*requests_)[r];
    if (w.job) {
      ++pos;
      continue;
    }
    const bool needs_encode = p.stage() == Stage::kEncode;
    if (needs_encode && !config_.type.encodes()) {
      ++pos;
      continue;
    }
    const std::uint64_t chunk =
        language ? std::min(p.prefill_total - p.prefill_done, token_budget - n_t)
                 : 0;
    const std::uint64_t image_blocks =
        blocks_for(p.image_tokens_through(p.image_tokens.size()),
                   kImageBlockTokens);
    if ((needs_encode && !image_pool_.can_grow(r, image_blocks)) ||
        (chunk > 0 && !can_grow_kv(r, p.kv_len + chunk))) {
      break;
    }
    if (needs_encode) {
      image_pool_.ensure(r, image_blocks);
      const auto k = p.image_tokens.size() - p.images_done;
      batch.encodes.push_back(make_encode(r, p, k));
      p.images_inflight = k;
    }
    if (chunk > 0) {
      grow_kv(r, p.kv_len + chunk);
      batch.prefills.push_back(PrefillChunk{r, chunk});
      p.prefill_inflight = chunk;
      n_t += chunk;
    }
    admit(pos);
  }
  return batch;
}

Batch Instance::form_prefill_prioritized() {
  Batch batch;
  const auto token_ceiling = static_cast<std::uint64_t>(config_.token_ceiling);
  const auto image_ceiling = static_cast<std::uint64_t>(config_.image_ceiling);
  const bool language = config_.type.prefills();
  std::uint64_t tokens = 0;
  std::uint64_t images = 0;

  auto full = [&]() {
    if (batch.empty()) return false;
    return language ? tokens >= token_ceiling : images >= image_ceiling;
  };

  // Whole encode plus whole prefill for one request; false if it cannot
  // allocate.
  auto take_whole = [&](RequestIndex r) {
    auto& p = (*requests_)[r];
    const bool needs_encode =
        p.stage() == Stage::kEncode && config_.type.encodes();
    const std::uint64_t rest =
        language ? p.prefill_total - p.prefill_done : 0;
    const std::uint64_t image_blocks = blocks_for(
        p.image_tokens_through(p.image_tokens.size()), kImageBlockTokens);
    if ((needs_encode && !image_pool_.can_grow(r, image_blocks)) ||
        (rest > 0 && !can_grow_kv(r, p.kv_len + rest))) {
      return false;
    }
    if (needs_encode) {
      image_pool_.ensure(r, image_blocks);
      const auto k = p.image_tokens.size() - p.images_done;
      batch.encodes.push_back(make_encode(r, p, k));
      p.images_inflight = k;
      images += k;
    }
    if (rest > 0) {
      grow_kv(r, p.kv_len + rest);
      batch.prefills.push_back(PrefillChunk{r, rest});
      p.prefill_inflight = rest;
      tokens += rest;
    }
    return true;
  };

  for (auto r : running_) {
    if (full()) break;
    const Stage st = (*requests_)[r].stage();
    if ((st == Stage::kEncode && config_.type.encodes()) ||
        (st == Stage::kPrefill && language)) {
      take_whole(r);
    }
  }

  std::size_t pos = 0;
  while (pos < waiting_.size() && !full()) {
    const auto& w = waiting_[pos];
    const Stage st = (*requests_)[w.req].stage();
    const bool runnable = !w.job && ((st == Stage::kEncode && config_.type.encodes()) ||
                                     (st == Stage::kPrefill && language));
    if (!runnable) {
      ++pos;
      continue;
    }
    if (!take_whole(w.req)) break;
    admit(pos);
  }

  if (!batch.empty()) return batch;
  std::uint64_t n_t = 0;
  add_decodes(batch, n_t);
  return batch;
}

BatchOutcome Instance::complete_batch(const Batch& batch) {
  BatchOutcome out;
  auto finish = [&](RequestIndex r) {
    release(r);
    remove_running(r);
    out.finished.push_back(r);
  };

  for (const auto& e : batch.encodes) {
    auto& p = (*requests_)[e.req];
    p.images_done += e.images;
    p.images_inflight = 0;
    if (p.images_done == p.image_tokens.size()) {
      out.encodes_finished.push_back(e.req);
      if (!config_.type.prefills()) {
        remove_running(e.req);
        out.leave_for_prefill.push_back(e.req);
      }
    }
  }

  for (const auto& c : batch.prefills) {
    auto& p = (*requests_)[c.req];
    p.prefill_done += c.tokens;
    p.kv_len += c.tokens;
    p.prefill_inflight = 0;
    if (p.prefill_done < p.prefill_total) continue;
    // Prefill consumed the image embeddings.
    image_pool_.release(c.req);
    out.first_tokens.push_back(c.req);
    if (p.decode_total == 0) {
      finish(c.req);
    } else if (!config_.type.decodes()) {
      remove_running(c.req);
      out.leave_for_decode.push_back(c.req);
    }
  }

  for (const auto& d : batch.decodes) {
    auto& p = (*requests_)[d.req];
    p.decode_done += 1;
    p.kv_len += 1;
    p.decode_inflight = false;
    out.decode_tokens.push_back(d.req);
    if (p.decode_done == p.decode_total) finish(d.req);
  }
  return out;
}

void Instance::check_invariants() const {
  kv_pool_.check();
  image_pool_.check();
  auto fail = [&](const std::string& what) {
    throw std::logic_error("instance " + std::to_string(id_) + ": " + what);
  };
  std::uint64_t committed = 0;
  for (const auto& [r, blocks] : kv_commit_) {
    if (kv_pool_.held(r) > blocks) {
      fail("request " + std::to_string(r) + " holds more KV blocks than committed");
    }
    committed += blocks;
  }
  if (committed != kv_committed_ || committed > kv_pool_.capacity()) {
    fail("KV commitments exceed pool capacity or drifted");
  }
  for (const auto& [r, blocks] : kv_pool_.owners()) {
    if (!kv_commit_.count(r)) fail("request " + std::to_string(r) + " holds uncommitted KV");
  }
  for (auto r : running_) {
    const auto& p = (*requests_)[r];
    if (kv_pool_.held(r) != p.implied_kv_blocks()) {
      fail("request " + std::to_string(r) + " holds " +
           std::to_string(kv_pool_.held(r)) + " KV blocks, cursor implies " +
           std::to_string(p.implied_kv_blocks()));
    }
    if (image_pool_.held(r) != p.implied_image_blocks()) {
      fail("request " + std::to_string(r) + " holds " +
           std::to_string(image_pool_.held(r)) +
           " image blocks, cursor implies " +
           std::to_string(p.implied_image_blocks()));
    }
  }
  for (const auto& w : waiting_) {
    const bool holds = kv_pool_.held(w.req) + image_pool_.held(w.req) > 0;
    if (!w.job && holds) {
      fail("waiting request " + std::to_string(w.req) + " holds blocks");
    }
    if (w.job && w.transferring &&
        (kv_pool_.held(w.req) != w.demand.kv_blocks ||
         image_pool_.held(w.req) != w.demand.image_blocks)) {
      fail("migration target allocation mismatch for request " +
           std::to_string(w.req));
    }
    if (w.job && !w.transferring && holds) {
      fail("unscheduled migration already holds blocks");
    }
  }
}

}  // namespace epdsim
