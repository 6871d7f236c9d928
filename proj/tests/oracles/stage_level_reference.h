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

// Slow reference interpreter of stage-level batch formation over plain
// structs with unlimited cache, plus helpers that build matching Instance
// states. Shared by the engine unit tests and the acceptance binary.

#include <algorithm>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "epdsim/engine.h"

namespace oracle {

struct RefReq {
  std::uint64_t images_left = 0;
  std::uint64_t prefill_left = 0;
  std::uint64_t decode_left = 0;
};

struct RefBatch {
  std::vector<std::uint32_t> decodes;
  std::vector<std::pair<std::uint32_t, std::uint64_t>> chunks;
  std::vector<std::pair<std::uint32_t, std::uint64_t>> encodes;
  std::vector<std::uint32_t> running_after;
};

inline RefBatch reference_form(const std::vector<RefReq>& reqs,
                               const std::vector<std::uint32_t>& running,
                               const std::vector<std::uint32_t>& waiting,
                               std::uint64_t tau_t, std::uint64_t tau_e) {
  RefBatch b;
  std::uint64_t n_t = 0;
  std::uint64_t n_e = 0;
  b.running_after = running;
  for (auto r : running) {
    const RefReq& q = reqs[r];
    if (q.images_left == 0 && q.prefill_left == 0 && q.decode_left > 0) {
      b.decodes.push_back(r);
      n_t += 1;
    }
  }
  for (auto r : running) {
    const RefReq& q = reqs[r];
    if (q.images_left == 0 && q.prefill_left > 0) {
      if (n_t < tau_t) {
        const auto c = std::min(q.prefill_left, tau_t - n_t);
        b.chunks.emplace_back(r, c);
        n_t += c;
      }
    } else if (q.images_left > 0) {
      if (n_e < tau_e) {
        const auto k = std::min(q.images_left, tau_e - n_e);
        b.encodes.emplace_back(r, k);
        n_e += k;
      }
    }
  }
  std::vector<std::uint32_t> still_waiting;
  for (auto r : waiting) {
    const RefReq& q = reqs[r];
    if (q.images_left == 0 && n_t < tau_t) {
      const auto c = std::min(q.prefill_left, tau_t - n_t);
      b.chunks.emplace_back(r, c);
      n_t += c;
      b.running_after.push_back(r);
    } else {
      still_waiting.push_back(r);
    }
  }
  for (auto r : still_waiting) {
    const RefReq& q = reqs[r];
    if (q.images_left > 0 && n_e < tau_e) {
      const auto k = std::min(q.images_left, tau_e - n_e);
      b.encodes.emplace_back(r, k);
      n_e += k;
      b.running_after.push_back(r);
    }
  }
  return b;
}

inline epdsim::RequestProgress decoding(std::uint64_t context, std::uint64_t steps) {
  epdsim::RequestProgress p;
  p.prefill_total = context;
  p.prefill_done = context;
  p.kv_len = context;
  p.decode_total = steps;
  return p;
}

inline epdsim::RequestProgress prefilling(std::uint64_t total, std::uint64_t done) {
  epdsim::RequestProgress p;
  p.prefill_total = total;
  p.prefill_done = done;
  p.kv_len = done;
  p.decode_total = 10;
  return p;
}

inline epdsim::RequestProgress fresh(std::vector<std::uint64_t> images,
                                     std::uint64_t prompt) {
  epdsim::RequestProgress p;
  p.image_tokens = std::move(images);
  p.prefill_total = prompt + p.image_tokens_through(p.image_tokens.size());
  p.decode_total = 10;
  return p;
}

inline epdsim::InstanceConfig instance_config(
    const std::string& type, std::int64_t tau_t, std::int64_t tau_e,
    epdsim::SchedulerPolicy policy = epdsim::SchedulerPolicy::kStageLevel) {
  epdsim::InstanceConfig c;
  c.type = epdsim::InstanceType::parse(type);
  c.policy = policy;
  c.budgets = epdsim::BudgetPair{tau_t, tau_e, true};
  c.kv_capacity_blocks = 100000;
  c.image_capacity_blocks = 1000;
  return c;
}

// Puts a request straight into the running set with the blocks its cursor
// implies, through the migration path.
inline void place_running(epdsim::Instance& inst,
                          std::vector<epdsim::RequestProgress>& reqs,
                          epdsim::RequestIndex r) {
  static epdsim::JobId next_job = 0;
  const epdsim::BlockDemand demand{reqs[r].implied_kv_blocks(),
                                   reqs[r].implied_image_blocks()};
  inst.enqueue_migration(r, next_job++, demand);
  if (inst.schedule_migrations().size() != 1) {
    throw std::runtime_error("place_running: migration not admitted");
  }
  inst.admit_migrated(r);
}

// A random mix of decoding, mid-prefill, mid-encode and waiting requests.
struct RandomState {
  std::vector<epdsim::RequestProgress> reqs;
  std::vector<RefReq> ref;
  std::vector<std::uint32_t> running;
  std::vector<std::uint32_t> waiting;
  std::uint64_t tau_t = 1;
  std::uint64_t tau_e = 1;
};

inline RandomState random_state(std::mt19937_64& rng) {
  auto uni = [&](std::uint64_t lo, std::uint64_t hi) {
    return std::uniform_int_distribution<std::uint64_t>(lo, hi)(rng);
  };
  RandomState s;
  const auto n_running = uni(0, 20);
  const auto n_waiting = uni(0, 10);
  for (std::uint64_t i = 0; i < n_running + n_waiting; ++i) {
    epdsim::RequestProgress p;
    const std::uint64_t n_images = uni(0, 4);
    for (std::uint64_t k = 0; k < n_images; ++k) p.image_tokens.push_back(uni(100, 1200));
    p.prefill_total = uni(1, 600) + p.image_tokens_through(n_images);
    p.decode_total = uni(1, 50);
    if (i < n_running) {
      switch (uni(0, 2)) {
        case 0:  // decoding
          p.images_done = n_images;
          p.prefill_done = p.prefill_total;
          p.kv_len = p.prefill_total;
          p.decode_done = uni(0, p.decode_total - 1);
          p.kv_len += p.decode_done;
          break;
        case 1:  // mid prefill
          p.images_done = n_images;
          p.prefill_done = uni(0, p.prefill_total - 1);
          p.kv_len = p.prefill_done;
          break;
        default:  // mid encode, or fresh prefill when there are no images
          p.images_done = n_images == 0 ? 0 : uni(0, n_images - 1);
          break;
      }
    }
    s.reqs.push_back(p);
    s.ref.push_back(RefReq{p.image_tokens.size() - p.images_done,
                           p.prefill_total - p.prefill_done,
                           p.decode_total - p.decode_done});
    (i < n_running ? s.running : s.waiting).push_back(static_cast<std::uint32_t>(i));
  }
  s.tau_t = uni(1, 512);
  s.tau_e = uni(1, 8);
  return s;
}

// Empty when the batch matches the reference, else a description of the
// first difference.
inline std::string compare_batch(const RefBatch& want, const epdsim::Batch& got,
                                 const std::vector<epdsim::RequestProgress>& reqs,
                                 const std::vector<epdsim::RequestIndex>& running_after) {
  if (got.decodes.size() != want.decodes.size()) return "decode count";
  for (std::size_t i = 0; i < want.decodes.size(); ++i) {
    if (got.decodes[i].req != want.decodes[i]) return "decode order";
    if (got.decodes[i].kv_len != reqs[want.decodes[i]].kv_len) return "decode kv_len";
  }
  if (got.prefills.size() != want.chunks.size()) return "chunk count";
  for (std::size_t i = 0; i < want.chunks.size(); ++i) {
    if (got.prefills[i].req != want.chunks[i].first) return "chunk order";
    if (got.prefills[i].tokens != want.chunks[i].second) return "chunk size";
  }
  if (got.encodes.size() != want.encodes.size()) return "encode count";
  for (std::size_t i = 0; i < want.encodes.size(); ++i) {
    if (got.encodes[i].req != want.encodes[i].first) return "encode order";
    if (got.encodes[i].images != want.encodes[i].second) return "encode images";
  }
  if (running_after.size() != want.running_after.size()) return "running set";
  for (std::size_t i = 0; i < running_after.size(); ++i) {
    if (running_after[i] != want.running_after[i]) return "running set";
  }
  return "";
}

}  // namespace oracle
