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

#include "epdsim/workload.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

namespace epdsim {

using nlohmann::json;

void SloSpec::validate() const {
  if (!(ttft_max > 0.0) || !(tbt_max > 0.0)) {
    throw std::invalid_argument("SLO bounds must be > 0");
  }
}

SloSpec default_slo(const std::string& model, const std::string& dataset) {
  // (model, dataset) -> (TTFT s, TBT s)
  static const std::map<std::pair<std::string, std::string>, SloSpec> table = {
      {{"llava-1.5-7b", "vizwiz"}, {4.0, 0.08}},
      {{"llava-1.5-7b", "textvqa"}, {4.0, 0.08}},
      {{"llava-1.5-7b", "mme"}, {4.0, 0.08}},
      {{"llava-1.5-7b", "pope"}, {4.0, 0.08}},
      {{"llava-1.5-7b", "textcaps"}, {4.0, 0.08}},
      {{"llava-next-7b", "vizwiz"}, {8.0, 0.60}},
      {{"llava-next-7b", "textvqa"}, {8.0, 0.60}},
      {{"llava-next-7b", "mme"}, {8.0, 0.60}},
      {{"llava-next-7b", "pope"}, {8.0, 0.30}},
      {{"llava-next-7b", "textcaps"}, {8.0, 0.30}},
      {{"qwen2-vl-7b", "vizwiz"}, {8.0, 0.60}},
      {{"qwen2-vl-7b", "textvqa"}, {8.0, 0.60}},
      {{"qwen2-vl-7b", "mme"}, {8.0, 0.60}},
      {{"qwen2-vl-7b", "pope"}, {8.0, 0.10}},
      {{"qwen2-vl-7b", "textcaps"}, {8.0, 0.10}},
  };
  auto it = table.find({model, dataset});
  if (it == table.end()) {
    throw std::invalid_argument("no SLO defaults for model '" + model +
                                "' and dataset '" + dataset + "'");
  }
  return it->second;
}

std::string RequestId::to_string() const {
  if (is_integer()) return std::to_string(std::get<std::int64_t>(value_));
  return std::get<std::string>(value_);
}

std::uint64_t RequestSpec::visual_tokens() const {
  std::uint64_t n = 0;
  for (auto t : image_token_counts) n += t;
  return n;
}

SloSpec RequestSpec::slo_or(const SloSpec& fallback) const {
  return SloSpec{ttft_slo.value_or(fallback.ttft_max),
                 tbt_slo.value_or(fallback.tbt_max)};
}

void RequestSpec::validate() const {
  if (!(arrival_time >= 0.0) || !std::isfinite(arrival_time)) {
    throw TraceError("request " + id.to_string() +
                     ": arrival time must be finite and >= 0");
  }
  if (output_tokens < 1) {
    throw TraceError("request " + id.to_string() +
                     ": output_tokens must be >= 1");
  }
  if (prompt_tokens + visual_tokens() < 1) {
    throw TraceError("request " + id.to_string() +
                     ": request has no input tokens");
  }
  if ((ttft_slo && !(*ttft_slo > 0.0)) || (tbt_slo && !(*tbt_slo > 0.0))) {
    throw TraceError("request " + id.to_string() + ": SLO bounds must be > 0");
  }
}

namespace {

std::uint64_t read_count(const json& v, const char* key) {
  if (!v.is_number_integer()) {
    throw TraceError(std::string("'") + key + "' must be an integer");
  }
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  const auto x = v.get<std::int64_t>();
  if (x < 0) throw TraceError(std::string("'") + key + "' must be >= 0");
  return static_cast<std::uint64_t>(x);
}

RequestSpec request_from_json(const json& j) {
  static const std::set<std::string> known = {
      "id", "arrival_s", "image_tokens", "prompt_tokens",
      "output_tokens", "ttft_slo_s", "tbt_slo_s"};
  if (!j.is_object()) throw TraceError("record is not a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw TraceError("unknown key '" + key + "'");
  }
  for (const char* key : {"id", "arrival_s", "prompt_tokens", "output_tokens"}) {
    if (!j.contains(key)) {
      throw TraceError(std::string("missing key '") + key + "'");
    }
  }
  RequestSpec r;
  const auto& id = j.at("id");
  if (id.is_number_integer()) {
    r.id = RequestId(id.get<std::int64_t>());
  } else if (id.is_string()) {
    r.id = RequestId(id.get<std::string>());
  } else {
    throw TraceError("'id' must be a string or an integer");
  }
  if (!j.at("arrival_s").is_number()) {
    throw TraceError("'arrival_s' must be a number");
  }
  r.arrival_time = j.at("arrival_s").get<double>();
  if (j.contains("image_tokens")) {
    const auto& imgs = j.at("image_tokens");
    if (!imgs.is_array()) throw TraceError("'image_tokens' must be an array");
    for (const auto& t : imgs) {
      r.image_token_counts.push_back(read_count(t, "image_tokens"));
    }
  }
  r.prompt_tokens = read_count(j.at("prompt_tokens"), "prompt_tokens");
  r.output_tokens = read_count(j.at("output_tokens"), "output_tokens");
  if (j.contains("ttft_slo_s")) r.ttft_slo = j.at("ttft_slo_s").get<double>();
  if (j.contains("tbt_slo_s")) r.tbt_slo = j.at("tbt_slo_s").get<double>();
  r.validate();
  return r;
}

json request_to_json(const RequestSpec& r) {
  json j;
  if (r.id.is_integer()) {
    j["id"] = r.id.as_integer();
  } else {
    j["id"] = r.id.to_string();
  }
  j["arrival_s"] = r.arrival_time;
  j["image_tokens"] = r.image_token_counts;
  j["prompt_tokens"] = r.prompt_tokens;
  j["output_tokens"] = r.output_tokens;
  if (r.ttft_slo) j["ttft_slo_s"] = *r.ttft_slo;
  if (r.tbt_slo) j["tbt_slo_s"] = *r.tbt_slo;
  return j;
}

void sort_and_check(Trace& trace) {
  std::stable_sort(trace.requests.begin(), trace.requests.end(),
                   [](const RequestSpec& a, const RequestSpec& b) {
                     return a.arrival_time < b.arrival_time;
                   });
  validate_trace(trace);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

Trace parse_trace(std::istream& in, const std::string& source) {
  Trace trace;
  trace.name = std::filesystem::path(source).stem().string();
  trace.source = source;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      trace.requests.push_back(request_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw TraceError(source + ":" + std::to_string(line_no) +
                       ": malformed record: " + e.what());
    } catch (const TraceError& e) {
      throw TraceError(source + ":" + std::to_string(line_no) + ": " +
                       e.what());
    }
  }
  sort_and_check(trace);
  return trace;
}

Trace load_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw TraceError("cannot open trace file " + path.string());
  return parse_trace(in, path.string());
}

void write_trace(const Trace& trace, std::ostream& out) {
  for (const auto& r : trace.requests) out << request_to_json(r).dump() << '\n';
}

void save_trace(const Trace& trace, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw TraceError("cannot write trace file " + path.string());
  write_trace(trace, out);
}

Trace parse_trace_csv(std::istream& in, const std::string& source) {
  Trace trace;
  trace.name = std::filesystem::path(source).stem().string();
  trace.source = source;
  std::string line;
  if (!std::getline(in, line)) return trace;
  const auto header = split(line, ',');
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[trim(header[i])] = i;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != header.size()) {
      throw TraceError(source + ":" + std::to_string(line_no) +
                       ": expected " + std::to_string(header.size()) +
                       " columns, got " + std::to_string(cells.size()));
    }
    json j;
    try {
      for (const auto& [name, idx] : col) {
        const std::string cell = trim(cells[idx]);
        if (name == "id") {
          const bool numeric =
              !cell.empty() &&
              std::all_of(cell.begin(), cell.end(), [](char c) {
                return std::isdigit(static_cast<unsigned char>(c)) || c == '-';
              });
          if (numeric) {
            j["id"] = std::stoll(cell);
          } else {
            j["id"] = cell;
          }
        } else if (name == "image_tokens") {
          json arr = json::array();
          for (const auto& t : split(cell, ';')) {
            if (!trim(t).empty()) arr.push_back(std::stoll(trim(t)));
          }
          j["image_tokens"] = arr;
        } else if (name == "arrival_s" || name == "ttft_slo_s" ||
                   name == "tbt_slo_s") {
          if (!cell.empty()) j[name] = std::stod(cell);
        } else {
          j[name] = std::stoll(cell);
        }
      }
      trace.requests.push_back(request_from_json(j));
    } catch (const TraceError& e) {
      throw TraceError(source + ":" + std::to_string(line_no) + ": " +
                       e.what());
    } catch (const std::exception& e) {
      throw TraceError(source + ":" + std::to_string(line_no) +
                       ": malformed record: " + e.what());
    }
  }
  sort_and_check(trace);
  return trace;
}

void validate_trace(const Trace& trace) {
  std::set<std::string> seen;
  double prev = 0.0;
  for (std::size_t i = 0; i < trace.requests.size(); ++i) {
    const auto& r = trace.requests[i];
    r.validate();
    if (i > 0 && r.arrival_time < prev) {
      throw TraceError("arrival times are not sorted at request " +
                       r.id.to_string());
    }
    prev = r.arrival_time;
    if (!seen.insert(r.id.to_string()).second) {
      throw TraceError("duplicate request id " + r.id.to_string());
    }
  }
}

double arrival_rate(const Trace& trace) {
  if (trace.size() < 2) {
    throw std::invalid_argument("rate needs at least two requests");
  }
  const double span =
      trace.requests.back().arrival_time - trace.requests.front().arrival_time;
  if (!(span > 0.0)) {
    throw std::invalid_argument("trace has a zero arrival span");
  }
  return static_cast<double>(trace.size()) / span;
}

Trace scale_to_rate(const Trace& trace, double target_rate) {
  if (!(target_rate > 0.0)) {
    throw std::invalid_argument("target rate must be > 0");
  }
  const double scale = arrival_rate(trace) / target_rate;
  Trace out = trace;
  const double first = trace.requests.front().arrival_time;
  for (auto& r : out.requests) {
    r.arrival_time = first + (r.arrival_time - first) * scale;
  }
  return out;
}

Trace latest_window(const Trace& trace, double window_s) {
  Trace out = trace;
  out.requests.clear();
  if (trace.empty()) return out;
  const double cutoff = trace.requests.back().arrival_time - window_s;
  for (const auto& r : trace.requests) {
    if (r.arrival_time >= cutoff) out.requests.push_back(r);
  }
  return out;
}

StagePlan plan_stages(const RequestSpec& request, double preprocess_delay) {
  StagePlan plan;
  const std::uint64_t n = request.visual_tokens();
  if (!request.image_token_counts.empty()) {
    plan.encode = EncodeTask{request.image_token_counts.size(), n};
  }
  plan.prefill_total_tokens = n + request.prompt_tokens;
  plan.decode_steps = request.output_tokens - 1;
  plan.preprocess_delay = preprocess_delay;
  return plan;
}

IntDist IntDist::fixed(std::int64_t v) {
  IntDist d;
  d.kind = Kind::kFixed;
  d.lo = d.hi = v;
  return d;
}

IntDist IntDist::uniform(std::int64_t lo, std::int64_t hi) {
  IntDist d;
  d.kind = Kind::kUniform;
  d.lo = lo;
  d.hi = hi;
  return d;
}

IntDist IntDist::choice(std::vector<std::int64_t> values,
                        std::vector<double> weights) {
  IntDist d;
  d.kind = Kind::kChoice;
  d.values = std::move(values);
  d.weights = std::move(weights);
  if (d.weights.empty()) d.weights.assign(d.values.size(), 1.0);
  return d;
}

void IntDist::validate() const {
  switch (kind) {
    case Kind::kFixed:
      if (lo < 0) throw std::invalid_argument("fixed value must be >= 0");
      break;
    case Kind::kUniform:
      if (lo < 0 || hi < lo) {
        throw std::invalid_argument("uniform range must satisfy 0 <= lo <= hi");
      }
      break;
    case Kind::kChoice: {
      if (values.empty() || values.size() != weights.size()) {
        throw std::invalid_argument("choice needs matching values and weights");
      }
      double total = 0.0;
      for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i] < 0 || weights[i] < 0.0) {
          throw std::invalid_argument("choice values and weights must be >= 0");
        }
        total += weights[i];
      }
      if (!(total > 0.0)) {
        throw std::invalid_argument("choice weights sum to zero");
      }
      break;
    }
  }
}

namespace {

// Sampling is written against the raw engine output so a seed reproduces the
// same trace with every standard library.
class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : gen_(seed) {}

  double unit() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double exponential(double rate) { return -std::log1p(-unit()) / rate; }

  std::int64_t draw(const IntDist& d) {
    switch (d.kind) {
      case IntDist::Kind::kFixed:
        return d.lo;
      case IntDist::Kind::kUniform: {
        const auto span = static_cast<std::uint64_t>(d.hi - d.lo) + 1;
        return d.lo + static_cast<std::int64_t>(gen_() % span);
      }
      case IntDist::Kind::kChoice: {
        double total = 0.0;
        for (double w : d.weights) total += w;
        double x = unit() * total;
        for (std::size_t i = 0; i < d.values.size(); ++i) {
          if (x < d.weights[i]) return d.values[i];
          x -= d.weights[i];
        }
        return d.values.back();
      }
    }
    return 0;
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace

Trace synth_trace(const SynthSpec& spec) {
  if (!(spec.rate > 0.0)) throw std::invalid_argument("rate must be > 0");
  spec.image_count.validate();
  spec.visual_tokens.validate();
  spec.prompt_tokens.validate();
  spec.output_tokens.validate();
  if (spec.slo) spec.slo->validate();

  Trace trace;
  trace.name = spec.name;
  trace.source = "synth(seed=" + std::to_string(spec.seed) + ")";
  Sampler rng(spec.seed);
  double t = 0.0;
  for (std::size_t i = 0; i < spec.n_requests; ++i) {
    if (i > 0) t += rng.exponential(spec.rate);
    RequestSpec r;
    r.id = RequestId(static_cast<std::int64_t>(i));
    r.arrival_time = t;
    const auto images = rng.draw(spec.image_count);
    for (std::int64_t k = 0; k < images; ++k) {
      r.image_token_counts.push_back(
          static_cast<std::uint64_t>(rng.draw(spec.visual_tokens)));
    }
    r.prompt_tokens = static_cast<std::uint64_t>(rng.draw(spec.prompt_tokens));
    r.output_tokens = static_cast<std::uint64_t>(
        std::max<std::int64_t>(1, rng.draw(spec.output_tokens)));
    if (r.prompt_tokens + r.visual_tokens() == 0) r.prompt_tokens = 1;
    if (spec.slo) {
      r.ttft_slo = spec.slo->ttft_max;
      r.tbt_slo = spec.slo->tbt_max;
    }
    trace.requests.push_back(std::move(r));
  }
  return trace;
}

}  // namespace epdsim
