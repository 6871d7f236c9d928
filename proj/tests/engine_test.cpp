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

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles/stage_level_reference.h"

namespace epdsim {
namespace {

using oracle::decoding;
using oracle::fresh;
using oracle::place_running;
using oracle::prefilling;

InstanceConfig config(const std::string& type, std::int64_t tau_t,
                      std::int64_t tau_e,
                      SchedulerPolicy policy = SchedulerPolicy::kStageLevel) {
  return oracle::instance_config(type, tau_t, tau_e, policy);
}

// ---------------------------------------------------------------------------
// Instance types and caps

TEST(InstanceType, ParseAndName) {
  EXPECT_EQ(InstanceType::parse("DPE").name(), "EPD");
  EXPECT_EQ(InstanceType::parse("pd").name(), "PD");
  EXPECT_THROW(InstanceType::parse(""), std::invalid_argument);
  EXPECT_THROW(InstanceType::parse("EE"), std::invalid_argument);
  EXPECT_THROW(InstanceType::parse("X"), std::invalid_argument);
  EXPECT_EQ(InstanceType::all().size(), 7u);
}

TEST(LatencyCap, DecodeTypesUseTbt) {
  const SloSpec slo{4.0, 0.08};
  EXPECT_EQ(derive_latency_cap(InstanceType::parse("E"), slo, 0.5), 2.0);
  EXPECT_EQ(derive_latency_cap(InstanceType::parse("EP"), slo, 0.5), 2.0);
  EXPECT_EQ(derive_latency_cap(InstanceType::parse("PD"), slo, 0.5), 0.08);
  EXPECT_EQ(derive_latency_cap(InstanceType::parse("D"), slo, 0.5), 0.08);
}

// ---------------------------------------------------------------------------
// Budget search

// Language batches cost 1 ms per token, each image adds 5 ms.
double toy_latency(std::int64_t images, std::int64_t tokens) {
  return static_cast<double>(tokens + 5 * images) / 1000.0;
}

struct ToyOracle {
  std::int64_t tokens;
  std::int64_t images;
};

// Linear scans over the toy model.
ToyOracle toy_oracle(std::int64_t reserve, std::int64_t token_ceiling,
                     std::int64_t image_ceiling, double cap) {
  ToyOracle o{1, 0};
  for (std::int64_t t = 1; t <= token_ceiling; ++t) {
    if (toy_latency(reserve, t) <= cap) o.tokens = t;
  }
  for (std::int64_t e = 0; e <= image_ceiling; ++e) {
    if (toy_latency(e, o.tokens) <= cap) o.images = e;
  }
  return o;
}

TEST(SearchBudgets, ToyModelTokensFirst) {
  BudgetQuery q;
  q.type = InstanceType::parse("ED");
  q.cap = 0.08;
  q.order = BudgetOrder::kTokensFirst;
  const BudgetPair b = search_budgets(q, toy_latency);
  const ToyOracle o = toy_oracle(0, q.token_ceiling, q.image_ceiling, q.cap);
  EXPECT_EQ(b.token_budget, 80);
  EXPECT_EQ(b.token_budget, o.tokens);
  EXPECT_EQ(b.image_budget, o.images);
  EXPECT_EQ(b.image_budget, 0);
  EXPECT_TRUE(b.feasible);
}

TEST(SearchBudgets, ToyModelReserveImage) {
  BudgetQuery q;
  q.type = InstanceType::parse("EPD");
  q.cap = 0.08;
  const BudgetPair b = search_budgets(q, toy_latency);
  const ToyOracle o = toy_oracle(1, q.token_ceiling, q.image_ceiling, q.cap);
  EXPECT_EQ(b.token_budget, 75);
  EXPECT_EQ(b.token_budget, o.tokens);
  EXPECT_EQ(b.image_budget, o.images);
  EXPECT_EQ(b.image_budget, 1);

  q.type = InstanceType::parse("E");
  EXPECT_EQ(search_budgets(q, toy_latency).image_budget, 16);
  q.type = InstanceType::parse("PD");
  const BudgetPair pd = search_budgets(q, toy_latency);
  EXPECT_EQ(pd.token_budget, 80);
  EXPECT_EQ(pd.image_budget, 0);
}

TEST(SearchBudgets, FloorAndCeiling) {
  BudgetQuery q;
  q.type = InstanceType::parse("PD");
  q.cap = 1e-9;
  const ModelProfile m = model_preset("llava-1.5-7b");
  const HardwareProfile hw;
  BudgetPair b = search_budgets(q, m, hw);
  EXPECT_EQ(b.token_budget, 1);
  EXPECT_EQ(b.image_budget, 0);
  EXPECT_FALSE(b.feasible);

  q.type = InstanceType::parse("EP");
  q.cap = 1e6;
  b = search_budgets(q, m, hw);
  EXPECT_EQ(b.token_budget, q.token_ceiling);
  EXPECT_EQ(b.image_budget, q.image_ceiling);
  EXPECT_TRUE(b.feasible);
}

TEST(SearchBudgets, CapHoldsAndNextStepBreaksIt) {
  const ModelProfile m = model_preset("llava-1.5-7b");
  const HardwareProfile hw;
  for (const auto& type : InstanceType::all()) {
    BudgetQuery q;
    q.type = type;
    q.cap = type.decodes() ? 0.08 : 2.0;
    const BudgetPair b = search_budgets(q, m, hw);
    ASSERT_TRUE(b.feasible) << type.name();
    EXPECT_LE(reference_batch_latency(q, b.image_budget, type.runs_language() ? b.token_budget : 0, m, hw),
              q.cap);
    if (type.runs_language() && b.token_budget < q.token_ceiling) {
      const std::int64_t reserve = type.encodes() ? 1 : 0;
      EXPECT_GT(reference_batch_latency(q, reserve, b.token_budget + 1, m, hw), q.cap)
          << type.name();
    }
    if (type.encodes() && b.image_budget < q.image_ceiling) {
      const std::int64_t t = type.runs_language() ? b.token_budget : 0;
      EXPECT_GT(reference_batch_latency(q, b.image_budget + 1, t, m, hw), q.cap)
          << type.name();
    }
    if (!type.encodes()) EXPECT_EQ(b.image_budget, 0);
  }
}

TEST(SearchBudgets, MonotoneInCap) {
  const ModelProfile m = model_preset("llava-1.5-7b");
  const HardwareProfile hw;
  for (const auto& type : InstanceType::all()) {
    BudgetPair prev{1, 0, false};
    for (int i = 0; i < 50; ++i) {
      BudgetQuery q;
      q.type = type;
      q.cap = 0.002 * std::pow(1.15, i);
      const BudgetPair b = search_budgets(q, m, hw);
      EXPECT_GE(b.token_budget, prev.token_budget) << type.name() << " cap " << q.cap;
      EXPECT_GE(b.image_budget, prev.image_budget) << type.name() << " cap " << q.cap;
      EXPECT_GE(b.feasible, prev.feasible);
      prev = b;
    }
  }
}

// ---------------------------------------------------------------------------
// Cache pool

TEST(CachePool, AllOrNothing) {
  CachePool pool(16, 10);
  EXPECT_TRUE(pool.ensure(1, 4));
  EXPECT_TRUE(pool.ensure(2, 6));
  EXPECT_FALSE(pool.ensure(1, 5));
  EXPECT_EQ(pool.held(1), 4u);
  EXPECT_EQ(pool.free_blocks(), 0u);
  EXPECT_TRUE(pool.ensure(1, 3));  // shrinking is a no-op
  EXPECT_EQ(pool.held(1), 4u);
  pool.release(2);
  EXPECT_EQ(pool.free_blocks(), 6u);
  EXPECT_TRUE(pool.ensure(1, 10));
  pool.check_blocks();
  pool.release(1);
  pool.release(1);
  EXPECT_EQ(pool.allocated(), 0u);
  pool.check_blocks();
}

TEST(CachePool, LowestIdsFirst) {
  CachePool pool(16, 4);
  pool.ensure(7, 2);
  EXPECT_EQ(pool.owners().at(7), (std::vector<std::uint32_t>{0, 1}));
}

TEST(CachePool, RandomOpsKeepAccounting) {
  std::mt19937_64 rng(3);
  CachePool pool(16, 64);
  for (int i = 0; i < 5000; ++i) {
    const RequestIndex r = static_cast<RequestIndex>(rng() % 8);
    if (rng() % 3 == 0) {
      pool.release(r);
    } else {
      pool.ensure(r, pool.held(r) + rng() % 5);
    }
    pool.check();
  }
  pool.check_blocks();
}

// ---------------------------------------------------------------------------
// Stage-level batch formation

TEST(StageLevel, HandTracedExample) {
  std::vector<RequestProgress> reqs = {decoding(100, 10), decoding(300, 10),
                                       prefilling(600, 0),
                                       fresh({576, 576}, 500)};
  Instance inst(0, config("EPD", 256, 4), &reqs);
  place_running(inst, reqs, 0);
  place_running(inst, reqs, 1);
  place_running(inst, reqs, 2);
  inst.enqueue(3);

  const Batch b = inst.form_batch();
  ASSERT_EQ(b.decodes.size(), 2u);
  EXPECT_EQ(b.decodes[0].req, 0u);
  EXPECT_EQ(b.decodes[1].req, 1u);
  ASSERT_EQ(b.prefills.size(), 1u);
  EXPECT_EQ(b.prefills[0].req, 2u);
  EXPECT_EQ(b.prefills[0].tokens, 254u);
  ASSERT_EQ(b.encodes.size(), 1u);
  EXPECT_EQ(b.encodes[0].req, 3u);
  EXPECT_EQ(b.encodes[0].images, 2u);
  EXPECT_EQ(b.language_tokens(), 256u);
  EXPECT_EQ(b.images(), 2u);
  EXPECT_EQ(inst.waiting_size(), 0u);
  inst.check_invariants();

  const BatchOutcome out = inst.complete_batch(b);
  EXPECT_EQ(out.decode_tokens.size(), 2u);
  EXPECT_EQ(out.encodes_finished, std::vector<RequestIndex>{3});
  EXPECT_EQ(reqs[2].prefill_done, 254u);
  EXPECT_EQ(reqs[3].stage(), RequestProgress::Stage::kPrefill);
  inst.check_invariants();
}

TEST(StageLevel, DecodesAreUnconditional) {
  std::vector<RequestProgress> reqs;
  for (int i = 0; i < 300; ++i) reqs.push_back(decoding(50, 5));
  reqs.push_back(prefilling(100, 0));
  Instance inst(0, config("PD", 256, 0), &reqs);
  for (RequestIndex r = 0; r < 300; ++r) place_running(inst, reqs, r);
  inst.enqueue(300);
  const Batch b = inst.form_batch();
  EXPECT_EQ(b.decodes.size(), 300u);
  EXPECT_TRUE(b.prefills.empty());
  EXPECT_EQ(inst.waiting_size(), 1u);
}

TEST(StageLevel, AdmissionNeedsBlocks) {
  std::vector<RequestProgress> reqs = {prefilling(64, 0), prefilling(64, 0)};
  InstanceConfig c = config("PD", 256, 0);
  c.kv_capacity_blocks = 5;
  Instance inst(0, c, &reqs);
  inst.enqueue(0);
  inst.enqueue(1);
  const Batch b = inst.form_batch();
  ASSERT_EQ(b.prefills.size(), 1u);
  EXPECT_EQ(inst.waiting_size(), 1u);
  EXPECT_EQ(inst.kv_pool().held(0), 4u);
  EXPECT_EQ(inst.kv_pool().held(1), 0u);
  inst.check_invariants();
}

TEST(StageLevel, ImageRequestsJoinThroughEncodeOnly) {
  std::vector<RequestProgress> reqs = {fresh({576}, 10), fresh({}, 10)};
  Instance inst(0, config("EP", 256, 4), &reqs);
  inst.enqueue(0);
  inst.enqueue(1);
  const Batch b = inst.form_batch();
  ASSERT_EQ(b.prefills.size(), 1u);
  EXPECT_EQ(b.prefills[0].req, 1u);
  ASSERT_EQ(b.encodes.size(), 1u);
  EXPECT_EQ(b.encodes[0].req, 0u);
}

TEST(StageLevel, EncodeOnlyInstanceHandsOff) {
  std::vector<RequestProgress> reqs = {fresh({576, 576, 576}, 10)};
  Instance inst(0, config("E", 1, 2), &reqs);
  inst.enqueue(0);
  Batch b = inst.form_batch();
  ASSERT_EQ(b.images(), 2u);
  EXPECT_TRUE(inst.complete_batch(b).leave_for_prefill.empty());
  b = inst.form_batch();
  ASSERT_EQ(b.images(), 1u);
  const BatchOutcome out = inst.complete_batch(b);
  EXPECT_EQ(out.leave_for_prefill, std::vector<RequestIndex>{0});
  EXPECT_TRUE(inst.running().empty());
  EXPECT_EQ(inst.image_pool().held(0), 3u);
}

TEST(StageLevel, PrefillOnlyInstanceHandsOffAndFreesImages) {
  std::vector<RequestProgress> reqs = {fresh({576}, 40)};
  reqs[0].images_done = 1;
  Instance inst(0, config("P", 1024, 0), &reqs);
  place_running(inst, reqs, 0);
  EXPECT_EQ(inst.image_pool().held(0), 1u);
  const Batch b = inst.form_batch();
  ASSERT_EQ(b.prefills.size(), 1u);
  EXPECT_EQ(b.prefills[0].tokens, 616u);
  const BatchOutcome out = inst.complete_batch(b);
  EXPECT_EQ(out.first_tokens, std::vector<RequestIndex>{0});
  EXPECT_EQ(out.leave_for_decode, std::vector<RequestIndex>{0});
  EXPECT_EQ(inst.image_pool().held(0), 0u);
  EXPECT_EQ(inst.kv_pool().held(0), blocks_for(616, kKvBlockTokens));
}

// ---------------------------------------------------------------------------
// Reference interpreter

TEST(StageLevel, MatchesReferenceInterpreter) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    oracle::RandomState st = oracle::random_state(rng);
    InstanceConfig c = config("EPD", static_cast<std::int64_t>(st.tau_t),
                              static_cast<std::int64_t>(st.tau_e));
    c.image_capacity_blocks = 100000;
    Instance inst(0, c, &st.reqs);
    for (auto r : st.running) place_running(inst, st.reqs, r);
    for (auto r : st.waiting) inst.enqueue(r);

    const oracle::RefBatch want =
        oracle::reference_form(st.ref, st.running, st.waiting, st.tau_t, st.tau_e);
    const Batch got = inst.form_batch();
    EXPECT_EQ(oracle::compare_batch(want, got, st.reqs, inst.running()), "")
        << "trial " << trial;

    EXPECT_LE(got.images(), st.tau_e);
    if (got.decodes.size() <= st.tau_t) EXPECT_LE(got.language_tokens(), st.tau_t);
    inst.check_invariants();
    inst.complete_batch(got);
    inst.check_invariants();
  }
}

// ---------------------------------------------------------------------------
// Baselines

TEST(StallFree, ImagesRideWithFirstChunk) {
  std::vector<RequestProgress> reqs = {decoding(100, 5), fresh({576, 576}, 100)};
  Instance inst(0, config("EPD", 256, 0, SchedulerPolicy::kStallFreeChunked), &reqs);
  place_running(inst, reqs, 0);
  inst.enqueue(1);
  const Batch b = inst.form_batch();
  EXPECT_EQ(b.decodes.size(), 1u);
  ASSERT_EQ(b.encodes.size(), 1u);
  EXPECT_EQ(b.encodes[0].images, 2u);
  ASSERT_EQ(b.prefills.size(), 1u);
  EXPECT_EQ(b.prefills[0].tokens, 255u);
}

TEST(PrefillPrioritized, WholePromptsBeforeDecodes) {
  std::vector<RequestProgress> reqs = {decoding(100, 5), fresh({}, 3000),
                                       fresh({}, 3000)};
  Instance inst(0, config("PD", 256, 0, SchedulerPolicy::kPrefillPrioritized), &reqs);
  place_running(inst, reqs, 0);
  inst.enqueue(1);
  inst.enqueue(2);
  Batch b = inst.form_batch();
  EXPECT_TRUE(b.decodes.empty());
  ASSERT_EQ(b.prefills.size(), 2u);
  EXPECT_EQ(b.prefills[0].tokens, 3000u);
  inst.complete_batch(b);
  b = inst.form_batch();
  EXPECT_EQ(b.decodes.size(), 3u);
  EXPECT_TRUE(b.prefills.empty());
}

TEST(PrefillPrioritized, StopsAtCeiling) {
  std::vector<RequestProgress> reqs;
  for (int i = 0; i < 5; ++i) reqs.push_back(fresh({}, 6000));
  Instance inst(0, config("PD", 256, 0, SchedulerPolicy::kPrefillPrioritized), &reqs);
  for (RequestIndex r = 0; r < 5; ++r) inst.enqueue(r);
  const Batch b = inst.form_batch();
  EXPECT_EQ(b.prefills.size(), 3u);
  EXPECT_EQ(inst.waiting_size(), 2u);
}

TEST(BatchLatency, DualStreamNotSlowerThanSequential) {
  std::vector<RequestProgress> reqs = {decoding(500, 5), fresh({576}, 10)};
  Instance inst(0, config("EPD", 256, 4), &reqs);
  place_running(inst, reqs, 0);
  inst.enqueue(1);
  const Batch b = inst.form_batch();
  const ModelProfile m = model_preset("llava-1.5-7b");
  const HardwareProfile hw;
  EXPECT_LE(batch_latency(b, m, hw, ExecutionMode::kDualStream),
            batch_latency(b, m, hw, ExecutionMode::kSequential));
}

}  // namespace
}  // namespace epdsim
