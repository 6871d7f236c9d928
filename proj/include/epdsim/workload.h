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
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace epdsim {

struct SloSpec {
  double ttft_max = 4.0;
  double tbt_max = 0.08;

  void validate() const;
};

// Defaults taken from the per-(model, dataset) SLO table. Throws
// std::invalid_argument for unknown pairs.
SloSpec default_slo(const std::string& model, const std::string& dataset);

// Trace ids are either integers or strings and keep their JSON type.
class RequestId {
 public:
  RequestId() = default;
  RequestId(std::int64_t v) : value_(v) {}  // NOLINT
  RequestId(std::string v) : value_(std::move(v)) {}  // NOLINT

  bool is_integer() const { return std::holds_alternative<std::int64_t>(value_); }
  std::int64_t as_integer() const { return std::get<std::int64_t>(value_); }
  std::string to_string() const;

  friend bool operator==(const RequestId&, const RequestId&) = default;

 private:
  std::variant<std::int64_t, std::string> value_ = std::int64_t{0};
};

struct RequestSpec {
  RequestId id;
  double arrival_time = 0.0;
  std::vector<std::uint64_t> image_token_counts;
  std::uint64_t prompt_tokens = 0;
  std::uint64_t output_tokens = 1;
  // Per-request overrides; unset fields fall back to the run's default SLO.
  std::optional<double> ttft_slo;
  std::optional<double> tbt_slo;

  std::uint64_t visual_tokens() const;
  SloSpec slo_or(const SloSpec& fallback) const;
  void validate() const;
};

struct Trace {
  std::string name;
  std::string source;
  std::vector<RequestSpec> requests;

  std::size_t size() const { return requests.size(); }
  bool empty() const { return requests.empty(); }
};

class TraceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// JSON Lines, one request per line. Blank lines are skipped. The result is
// stably sorted by arrival time. Errors name the 1-based line number.
Trace load_trace(const std::filesystem::path& path);
Trace parse_trace(std::istream& in, const std::string& source);
void save_trace(const Trace& trace, const std::filesystem::path& path);
void write_trace(const Trace& trace, std::ostream& out);

// CSV with the same column names as the JSONL keys; `image_tokens` holds a
// ';'-separated list.
Trace parse_trace_csv(std::istream& in, const std::string& source);

// Checks sortedness and id uniqueness on top of per-request validation.
void validate_trace(const Trace& trace);

// Arrival rate over the arrival span, N / (last - first).
double arrival_rate(const Trace& trace);

// Rescales inter-arrival gaps around the first arrival so that the rate
// becomes `target_rate`.
Trace scale_to_rate(const Trace& trace, double target_rate);

// Keeps requests whose arrival lies within `window_s` of the last arrival.
Trace latest_window(const Trace& trace, double window_s);

struct EncodeTask {
  std::uint64_t images = 0;
  std::uint64_t visual_tokens = 0;
};

struct StagePlan {
  std::optional<EncodeTask> encode;
  std::uint64_t prefill_total_tokens = 0;
  std::uint64_t decode_steps = 0;
  double preprocess_delay = 0.0;
};

StagePlan plan_stages(const RequestSpec& request, double preprocess_delay);

// Bounded integer distribution: a fixed value, a closed uniform range, or a
// weighted choice.
struct IntDist {
  enum class Kind { kFixed, kUniform, kChoice };
  Kind kind = Kind::kFixed;
  std::int64_t lo = 0;
  std::int64_t hi = 0;
  std::vector<std::int64_t> values;
  std::vector<double> weights;

  static IntDist fixed(std::int64_t v);
  static IntDist uniform(std::int64_t lo, std::int64_t hi);
  static IntDist choice(std::vector<std::int64_t> values,
                        std::vector<double> weights = {});
  void validate() const;
};

struct SynthSpec {
  std::uint64_t seed = 0;
  std::size_t n_requests = 0;
  double rate = 1.0;
  IntDist image_count = IntDist::fixed(1);
  IntDist visual_tokens = IntDist::fixed(576);
  IntDist prompt_tokens = IntDist::fixed(40);
  IntDist output_tokens = IntDist::fixed(100);
  std::optional<SloSpec> slo;
  std::string name = "synthetic";
};

// Exponential inter-arrivals; a pure function of the SynthSpec.
Trace synth_trace(const SynthSpec& spec);

}  // namespace epdsim
