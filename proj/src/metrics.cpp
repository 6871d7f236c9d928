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

#include "epdsim/metrics.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace epdsim {

const std::array<const char*, StageBreakdown::kSize>& StageBreakdown::names() {
  static const std::array<const char*, kSize> kNames = {
      "encode_queue_s", "encode_exec_s", "ep_migration_s", "prefill_queue_s",
      "prefill_exec_s", "pd_migration_s", "decode_queue_s", "decode_exec_s"};
  return kNames;
}

double StageBreakdown::total() const {
  return std::accumulate(values.begin(), values.end(), 0.0);
}

bool meets_slo(const RequestMetrics& m, const SloSpec& slo) {
  if (!m.finished) return false;
  if (m.ttft > slo.ttft_max) return false;
  if (m.tbt_values.empty()) return true;
  const auto within = std::count_if(
      m.tbt_values.begin(), m.tbt_values.end(),
      [&](double v) { return v <= slo.tbt_max; });
  // Integer form of within / n >= 0.9.
  return 10 * static_cast<std::size_t>(within) >= 9 * m.tbt_values.size();
}

bool meets_slo(const RequestMetrics& m) { return meets_slo(m, m.slo); }

double slo_attainment(const std::vector<RequestMetrics>& requests,
                      bool* empty) {
  if (empty) *empty = requests.empty();
  if (requests.empty()) return 1.0;
  const auto ok = std::count_if(requests.begin(), requests.end(),
                                [](const RequestMetrics& m) { return meets_slo(m); });
  return static_cast<double>(ok) / static_cast<double>(requests.size());
}

double slo_attainment(const SimReport& report, bool* empty) {
  return slo_attainment(report.requests, empty);
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const double rank = p / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  return values[lo] + (values[hi] - values[lo]) * frac;
}

LatencyStats summarize(const std::vector<double>& values) {
  LatencyStats s;
  s.count = values.size();
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) /
           static_cast<double>(values.size());
  s.p50 = percentile(values, 50);
  s.p90 = percentile(values, 90);
  s.p95 = percentile(values, 95);
  s.p99 = percentile(values, 99);
  s.max = *std::max_element(values.begin(), values.end());
  return s;
}

Aggregates aggregate(const SimReport& report) {
  Aggregates a;
  a.requests = report.requests.size();
  a.attainment = slo_attainment(report);
  std::vector<double> ttfts;
  std::vector<double> tbts;
  double total_latency = 0.0;
  double total_migration = 0.0;
  double tokens = 0.0;
  double first_arrival = std::numeric_limits<double>::infinity();
  double last_finish = 0.0;
  for (const auto& m : report.requests) {
    first_arrival = std::min(first_arrival, m.arrival);
    if (!m.finished) continue;
    ++a.finished;
    ttfts.push_back(m.ttft);
    tbts.insert(tbts.end(), m.tbt_values.begin(), m.tbt_values.end());
    for (std::size_t i = 0; i < StageBreakdown::kSize; ++i) {
      a.breakdown_mean[i] += m.breakdown[i];
    }
    total_latency += m.latency();
    total_migration += m.breakdown.migration();
    tokens += static_cast<double>(m.output_tokens);
    last_finish = std::max(last_finish, m.completion);
  }
  if (a.finished > 0) {
    for (auto& v : a.breakdown_mean.values) {
      v /= static_cast<double>(a.finished);
    }
    const double span = last_finish - first_arrival;
    if (span > 0) {
      a.throughput_rps = static_cast<double>(a.finished) / span;
      a.token_throughput = tokens / span;
    }
  }
  a.migration_share = total_latency > 0 ? total_migration / total_latency : 0.0;
  a.ttft = summarize(ttfts);
  a.tbt = summarize(tbts);
  a.ep_migration = summarize(report.ep_migration_latencies);
  a.pd_migration = summarize(report.pd_migration_latencies);
  return a;
}

GoodputResult find_goodput(const std::function<double(double)>& attainment_at,
                           double low, double high, double tolerance) {
  if (!(tolerance > 0)) {
    throw std::invalid_argument("goodput tolerance must be > 0");
  }
  if (!(low > 0) || !(high > low)) {
    throw std::invalid_argument("goodput bounds need 0 < low < high");
  }
  GoodputResult result;
  auto probe = [&](double rate) {
    const double a = attainment_at(rate);
    result.probes.push_back({rate, a});
    return a >= kAttainmentTarget;
  };
  if (!probe(low)) {
    throw SloInfeasible("SLO infeasible at minimum rate " +
                        std::to_string(low) + " (attainment " +
                        std::to_string(result.probes.back().attainment) + ")");
  }
  double lo = low;
  double hi = high;
  while (hi - lo > tolerance) {
    const double mid = lo + (hi - lo) / 2;
    if (probe(mid)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  result.goodput = lo;
  for (const auto& a : result.probes) {
    for (const auto& b : result.probes) {
      if (a.rate < b.rate && a.attainment < b.attainment) {
        result.monotone = false;
      }
    }
  }
  return result;
}

}  // namespace epdsim
