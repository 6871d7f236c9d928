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

#include "epdsim/profiler.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

namespace epdsim {

double WorkloadSummary::avg_image_tokens() const {
  return images == 0 ? 0.0
                     : static_cast<double>(w_e) / static_cast<double>(images);
}

double WorkloadSummary::avg_context_tokens() const {
  return n_r == 0 ? 0.0
                  : static_cast<double>(w_p + w_d) / static_cast<double>(n_r);
}

WorkloadSummary summarize_workload(const Trace& trace) {
  if (trace.empty()) {
    throw std::invalid_argument("cannot summarize an empty trace");
  }
  WorkloadSummary s;
  for (const auto& r : trace.requests) {
    const auto visual = r.visual_tokens();
    s.w_e += visual;
    s.w_p += visual + r.prompt_tokens;
    s.w_d += r.output_tokens;
    s.images += r.image_token_counts.size();
  }
  s.n_r = trace.size();
  return s;
}

std::int64_t decode_concurrency_cap(const WorkloadSummary& summary,
                                    const ModelProfile& model,
                                    const HardwareProfile& hw, double gamma) {
  const double per_request =
      kv_bytes_per_token(model) * summary.avg_context_tokens();
  if (per_request <= 0) return 0;
  return static_cast<std::int64_t>(std::floor(
      gamma * (hw.gpu_memory_bytes - hw.model_weight_bytes) / per_request));
}

StageBudgets stage_budgets(const SloSpec& slo, const ModelProfile& model,
                           const HardwareProfile& hw,
                           const WorkloadSummary& summary,
                           const SchedulerParams& params) {
  StageBudgets out;
  const auto image_tokens =
      static_cast<std::uint64_t>(std::llround(summary.avg_image_tokens()));
  const auto context =
      static_cast<std::uint64_t>(std::llround(summary.avg_context_tokens()));

  BudgetQuery q;
  q.token_ceiling = params.token_ceiling;
  q.image_ceiling = params.image_ceiling;
  if (image_tokens > 0) q.reference_image_tokens = image_tokens;
  if (context > 0) q.reference_context_tokens = context;

  q.type = InstanceType(InstanceType::kE);
  q.cap = params.alpha * slo.ttft_max;
  const BudgetPair e = search_budgets(q, model, hw);
  out.tau_e = e.image_budget;
  out.feasible_e = e.feasible;

  q.type = InstanceType(InstanceType::kP);
  q.cap = params.beta * slo.ttft_max;
  q.image_ceiling = 0;
  const BudgetPair p = search_budgets(q, model, hw);
  out.tau_p = p.token_budget;
  out.feasible_p = p.feasible;

  q.type = InstanceType(InstanceType::kD);
  q.cap = slo.tbt_max;
  const BudgetPair d = search_budgets(q, model, hw);
  out.tau_d_searched = d.token_budget;
  out.feasible_d = d.feasible;

  out.decode_memory_cap = decode_concurrency_cap(summary, model, hw, params.gamma);
  if (out.decode_memory_cap < 1) {
    throw DecodeMemoryInfeasible(
        "decode memory infeasible: not even one average request fits in the "
        "KV budget");
  }
  out.tau_d = std::min(out.tau_d_searched, out.decode_memory_cap);
  return out;
}

StageThroughputs estimate_throughputs(const StageBudgets& budgets,
                                      const WorkloadSummary& summary,
                                      const ModelProfile& model,
                                      const HardwareProfile& hw) {
  StageThroughputs tp;
  const auto image_tokens = static_cast<std::uint64_t>(
      std::llround(std::max(1.0, summary.avg_image_tokens())));
  const auto context = static_cast<std::uint64_t>(
      std::llround(std::max(1.0, summary.avg_context_tokens())));

  if (budgets.tau_e > 0) {
    BatchShape shape;
    shape.image_tokens.assign(static_cast<std::size_t>(budgets.tau_e), image_tokens);
    const double tokens =
        static_cast<double>(budgets.tau_e) * static_cast<double>(image_tokens);
    tp.tp_e = tokens / roofline_latency(batch_work(shape, model).vision, hw);
  }
  {
    BatchShape shape;
    shape.prefill_chunks.push_back(static_cast<std::uint64_t>(budgets.tau_p));
    tp.tp_p = static_cast<double>(budgets.tau_p) /
              roofline_latency(batch_work(shape, model).language, hw);
  }
  {
    BatchShape shape;
    shape.decode_contexts.assign(static_cast<std::size_t>(budgets.tau_d), context);
    tp.tp_d = static_cast<double>(budgets.tau_d) /
              roofline_latency(batch_work(shape, model).language, hw);
  }
  return tp;
}

Partition partition(int n, double t_e, double t_p, double t_d) {
  if (n < 3) {
    throw std::invalid_argument("E+P+D needs at least 3 instances, got " +
                                std::to_string(n));
  }
  const std::array<double, 3> t = {t_e, t_p, t_d};
  for (double v : t) {
    if (!(v >= 0) || !std::isfinite(v)) {
      throw std::invalid_argument("stage times must be finite and >= 0");
    }
  }
  const double sum = t[0] + t[1] + t[2];
  if (!(sum > 0)) throw std::invalid_argument("stage times are all zero");

  std::array<int, 3> counts{};
  std::array<double, 3> rem{};
  int assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double share = n * t[i] / sum;
    counts[i] = static_cast<int>(std::floor(share));
    rem[i] = share - counts[i];
    assigned += counts[i];
  }
  // Largest remainder; earlier stages win ties.
  for (int left = n - assigned; left > 0; --left) {
    int best = 0;
    for (int i = 1; i < 3; ++i) {
      if (rem[i] > rem[best]) best = i;
    }
    ++counts[best];
    rem[best] = -1.0;
  }
  for (int i = 0; i < 3; ++i) {
    if (counts[i] > 0) continue;
    int largest = 0;
    for (int j = 1; j < 3; ++j) {
      if (counts[j] > counts[largest]) largest = j;
    }
    --counts[largest];
    counts[i] = 1;
  }
  return Partition{counts[0], counts[1], counts[2]};
}

PartitionResult plan_partition(const Trace& trace, int n,
                               const ClusterConfig& config) {
  PartitionResult out;
  const WorkloadSummary summary = summarize_workload(trace);
  out.budgets = stage_budgets(config.slo, config.model, config.hw, summary,
                              config.params);
  out.throughput =
      estimate_throughputs(out.budgets, summary, config.model, config.hw);
  out.t_e = out.throughput.tp_e > 0
                ? static_cast<double>(summary.w_e) / out.throughput.tp_e
                : 0.0;
  out.t_p = static_cast<double>(summary.w_p) / out.throughput.tp_p;
  out.t_d = static_cast<double>(summary.w_d) / out.throughput.tp_d;
  out.counts = partition(n, out.t_e, out.t_p, out.t_d);
  return out;
}

namespace {

const InstanceType kE(InstanceType::kE);
const InstanceType kP(InstanceType::kP);
const InstanceType kD(InstanceType::kD);
const InstanceType kEP(InstanceType::kE | InstanceType::kP);
const InstanceType kED(InstanceType::kE | InstanceType::kD);

}  // namespace

std::vector<DisaggregationMethod> candidate_methods(const Partition& p) {
  return {
      DisaggregationMethod({{kE, p.n_e}, {kP, p.n_p}, {kD, p.n_d}}),
      DisaggregationMethod({{kEP, p.n_e + p.n_p}, {kD, p.n_d}}),
      DisaggregationMethod({{kED, p.n_e + p.n_d}, {kP, p.n_p}}),
  };
}

std::uint64_t search_space_size(int n) {
  if (n < 2) throw std::invalid_argument("search space needs n >= 2");
  const auto m = static_cast<std::uint64_t>(n - 1);
  return 2 * m + m * (m - 1) / 2;
}

std::vector<DisaggregationMethod> enumerate_methods(int n) {
  if (n < 2) throw std::invalid_argument("need at least 2 instances");
  std::vector<DisaggregationMethod> out;
  for (int e = 1; e <= n - 2; ++e) {
    for (int p = 1; e + p <= n - 1; ++p) {
      out.emplace_back(std::vector<std::pair<InstanceType, int>>{
          {kE, e}, {kP, p}, {kD, n - e - p}});
    }
  }
  for (int k = 1; k < n; ++k) {
    out.emplace_back(std::vector<std::pair<InstanceType, int>>{{kEP, k}, {kD, n - k}});
  }
  for (int k = 1; k < n; ++k) {
    out.emplace_back(std::vector<std::pair<InstanceType, int>>{{kED, k}, {kP, n - k}});
  }
  return out;
}

Selection evaluate_methods(const std::vector<DisaggregationMethod>& methods,
                           const Trace& trace, const ClusterConfig& config,
                           const GoodputSearch& search) {
  Selection sel;
  bool any = false;
  for (const auto& method : methods) {
    CandidateResult row;
    row.method = method;
    ClusterConfig c = config;
    c.method = method;
    try {
      const GoodputResult g = cluster_goodput(c, trace, search.low, search.high,
                                              search.tolerance);
      row.goodput = g.goodput;
      row.probes = g.probes;
      row.feasible = true;
    } catch (const SloInfeasible& e) {
      row.error = e.what();
    } catch (const SimulationDeadlock& e) {
      row.error = e.what();
    }
    if (row.feasible &&
        (!any || row.goodput > sel.table[sel.best].goodput)) {
      sel.best = sel.table.size();
      any = true;
    }
    sel.table.push_back(std::move(row));
  }
  if (!any) {
    std::ostringstream os;
    os << "no feasible disaggregation method:";
    for (const auto& row : sel.table) {
      os << "\n  " << row.method.name() << ": " << row.error;
    }
    throw NoFeasibleMethod(os.str());
  }
  return sel;
}

Selection select_method(const Trace& trace, int n, const ClusterConfig& config,
                        const GoodputSearch& search) {
  const PartitionResult plan = plan_partition(trace, n, config);
  Selection sel = evaluate_methods(candidate_methods(plan.counts), trace, config,
                                   search);
  sel.partition = plan;
  return sel;
}

Selection brute_force_select(const Trace& trace, int n,
                             const ClusterConfig& config,
                             const GoodputSearch& search) {
  return evaluate_methods(enumerate_methods(n), trace, config, search);
}

}  // namespace epdsim
