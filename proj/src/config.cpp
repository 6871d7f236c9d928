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

#include "epdsim/config.h"

#include <fstream>
#include <initializer_list>
#include <set>

namespace epdsim {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void allow_keys(const json& obj, const std::string& where,
                std::initializer_list<const char*> keys) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
  }
}

template <typename T>
void read(const json& obj, const char* key, const std::string& where, T& out) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

template <typename T>
void read_optional(const json& obj, const char* key, const std::string& where,
                   std::optional<T>& out) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return;
  T v{};
  read(obj, key, where, v);
  out = v;
}

ModelProfile parse_model(const json& m) {
  allow_keys(m, "model",
             {"preset", "name", "lang_hidden", "lang_heads", "lang_layers",
              "vision_hidden", "vision_heads", "vision_layers", "kv_head_ratio",
              "dtype_bytes", "ffn_ratio"});
  ModelProfile model;
  if (m.contains("preset")) {
    try {
      model = model_preset(m.at("preset").get<std::string>());
    } catch (const std::exception& e) {
      throw ConfigError(std::string("model.preset: ") + e.what());
    }
  }
  read(m, "name", "model", model.name);
  read(m, "lang_hidden", "model", model.lang_hidden);
  read(m, "lang_heads", "model", model.lang_heads);
  read(m, "lang_layers", "model", model.lang_layers);
  read(m, "vision_hidden", "model", model.vision_hidden);
  read(m, "vision_heads", "model", model.vision_heads);
  read(m, "vision_layers", "model", model.vision_layers);
  read(m, "kv_head_ratio", "model", model.kv_head_ratio);
  read(m, "dtype_bytes", "model", model.dtype_bytes);
  read(m, "ffn_ratio", "model", model.ffn_ratio);
  return model;
}

HardwareProfile parse_hardware(const json& h) {
  allow_keys(h, "hardware",
             {"name", "peak_flops", "mem_bandwidth", "gpu_memory_bytes",
              "model_weight_bytes", "interconnect_bandwidth",
              "migration_fixed_overhead", "batch_fixed_overhead"});
  HardwareProfile hw;
  read(h, "name", "hardware", hw.name);
  read(h, "peak_flops", "hardware", hw.peak_flops);
  read(h, "mem_bandwidth", "hardware", hw.mem_bandwidth);
  read(h, "gpu_memory_bytes", "hardware", hw.gpu_memory_bytes);
  read(h, "model_weight_bytes", "hardware", hw.model_weight_bytes);
  read(h, "interconnect_bandwidth", "hardware", hw.interconnect_bandwidth);
  read(h, "migration_fixed_overhead", "hardware", hw.migration_fixed_overhead);
  read(h, "batch_fixed_overhead", "hardware", hw.batch_fixed_overhead);
  return hw;
}

DisaggregationMethod parse_method(const json& m) {
  if (m.is_string()) return DisaggregationMethod::parse(m.get<std::string>());
  if (!m.is_object()) {
    throw ConfigError("cluster.method: expected a string or an object");
  }
  std::vector<std::pair<InstanceType, int>> groups;
  for (const auto& [key, value] : m.items()) {
    if (!value.is_number_integer()) {
      throw ConfigError("cluster.method." + key + ": expected an integer");
    }
    groups.emplace_back(InstanceType::parse(key), value.get<int>());
  }
  return DisaggregationMethod(std::move(groups));
}

void parse_cluster(const json& c, RunConfig& out) {
  allow_keys(c, "cluster",
             {"method", "instances", "target_policy", "kv_blocks",
              "image_blocks", "image_memory_fraction", "preprocess_delay"});
  if (c.contains("method")) {
    const json& m = c.at("method");
    if (m.is_string() && m.get<std::string>() == "auto") {
      out.auto_method = true;
    } else {
      out.cluster.method = parse_method(m);
    }
  }
  read(c, "instances", "cluster", out.auto_instances);
  std::string policy = out.cluster.target_policy.name();
  read(c, "target_policy", "cluster", policy);
  out.cluster.target_policy = TargetPolicy::parse(policy);
  read_optional(c, "kv_blocks", "cluster", out.cluster.kv_blocks);
  read_optional(c, "image_blocks", "cluster", out.cluster.image_blocks);
  read(c, "image_memory_fraction", "cluster", out.cluster.image_memory_fraction);
  read(c, "preprocess_delay", "cluster", out.cluster.preprocess_delay);
}

void parse_slo(const json& s, SloSpec& slo) {
  allow_keys(s, "slo", {"preset", "ttft_max", "tbt_max"});
  if (s.contains("preset")) {
    const json& p = s.at("preset");
    allow_keys(p, "slo.preset", {"model", "dataset"});
    try {
      slo = default_slo(p.at("model").get<std::string>(),
                        p.at("dataset").get<std::string>());
    } catch (const std::exception& e) {
      throw ConfigError(std::string("slo.preset: ") + e.what());
    }
  }
  read(s, "ttft_max", "slo", slo.ttft_max);
  read(s, "tbt_max", "slo", slo.tbt_max);
}

void parse_scheduler(const json& s, ClusterConfig& c) {
  allow_keys(s, "scheduler",
             {"policy", "execution", "alpha", "beta", "gamma", "token_ceiling",
              "image_ceiling", "check_invariants"});
  std::string policy = to_string(c.policy);
  read(s, "policy", "scheduler", policy);
  c.policy = parse_policy(policy);
  std::string exec = "auto";
  read(s, "execution", "scheduler", exec);
  if (exec == "auto") {
    c.execution.reset();
  } else if (exec == "dual_stream") {
    c.execution = ExecutionMode::kDualStream;
  } else if (exec == "sequential") {
    c.execution = ExecutionMode::kSequential;
  } else {
    throw ConfigError("scheduler.execution: expected auto, dual_stream or sequential");
  }
  read(s, "alpha", "scheduler", c.params.alpha);
  read(s, "beta", "scheduler", c.params.beta);
  read(s, "gamma", "scheduler", c.params.gamma);
  read(s, "token_ceiling", "scheduler", c.params.token_ceiling);
  read(s, "image_ceiling", "scheduler", c.params.image_ceiling);
  read(s, "check_invariants", "scheduler", c.check_invariants);
}

}  // namespace

RunConfig parse_config(const json& doc) {
  allow_keys(doc, "config",
             {"config_version", "model", "hardware", "cluster", "slo",
              "scheduler", "goodput", "output", "seed"});
  int version = kConfigVersion;
  read(doc, "config_version", "config", version);
  if (version != kConfigVersion) {
    throw ConfigError("unsupported config_version " + std::to_string(version));
  }
  RunConfig out;
  try {
    if (doc.contains("model")) out.cluster.model = parse_model(doc.at("model"));
    if (doc.contains("hardware")) {
      out.cluster.hw = parse_hardware(doc.at("hardware"));
    }
    if (doc.contains("cluster")) parse_cluster(doc.at("cluster"), out);
    if (doc.contains("slo")) parse_slo(doc.at("slo"), out.cluster.slo);
    if (doc.contains("scheduler")) {
      parse_scheduler(doc.at("scheduler"), out.cluster);
    }
    if (doc.contains("goodput")) {
      const json& g = doc.at("goodput");
      allow_keys(g, "goodput", {"low", "high", "tolerance"});
      read(g, "low", "goodput", out.goodput.low);
      read(g, "high", "goodput", out.goodput.high);
      read(g, "tolerance", "goodput", out.goodput.tolerance);
    }
    if (doc.contains("output")) {
      const json& o = doc.at("output");
      allow_keys(o, "output", {"dir", "request_csv"});
      read(o, "dir", "output", out.output.dir);
      read(o, "request_csv", "output", out.output.request_csv);
    }
    read(doc, "seed", "config", out.seed);
    out.cluster.target_policy.seed = out.seed;
    out.cluster.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (out.auto_method && out.auto_instances < 3) {
    throw ConfigError("cluster.instances must be >= 3 for method auto");
  }
  if (!(out.goodput.tolerance > 0) || !(out.goodput.low > 0) ||
      !(out.goodput.high > out.goodput.low)) {
    throw ConfigError("goodput: need 0 < low < high and tolerance > 0");
  }
  return out;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(doc);
}

ordered_json to_json(const RunConfig& config) {
  const ClusterConfig& c = config.cluster;
  ordered_json j;
  j["config_version"] = kConfigVersion;
  j["model"] = {{"name", c.model.name},
                {"lang_hidden", c.model.lang_hidden},
                {"lang_heads", c.model.lang_heads},
                {"lang_layers", c.model.lang_layers},
                {"vision_hidden", c.model.vision_hidden},
                {"vision_heads", c.model.vision_heads},
                {"vision_layers", c.model.vision_layers},
                {"kv_head_ratio", c.model.kv_head_ratio},
                {"dtype_bytes", c.model.dtype_bytes},
                {"ffn_ratio", c.model.ffn_ratio}};
  j["hardware"] = {{"name", c.hw.name},
                   {"peak_flops", c.hw.peak_flops},
                   {"mem_bandwidth", c.hw.mem_bandwidth},
                   {"gpu_memory_bytes", c.hw.gpu_memory_bytes},
                   {"model_weight_bytes", c.hw.model_weight_bytes},
                   {"interconnect_bandwidth", c.hw.interconnect_bandwidth},
                   {"migration_fixed_overhead", c.hw.migration_fixed_overhead},
                   {"batch_fixed_overhead", c.hw.batch_fixed_overhead}};
  ordered_json cluster;
  cluster["method"] = config.auto_method ? std::string("auto") : c.method.name();
  cluster["instances"] = config.auto_method ? config.auto_instances
                                            : c.method.total();
  cluster["target_policy"] = c.target_policy.name();
  cluster["kv_blocks"] = c.kv_blocks ? ordered_json(*c.kv_blocks) : ordered_json();
  cluster["image_blocks"] =
      c.image_blocks ? ordered_json(*c.image_blocks) : ordered_json();
  cluster["image_memory_fraction"] = c.image_memory_fraction;
  cluster["preprocess_delay"] = c.preprocess_delay;
  j["cluster"] = cluster;
  j["slo"] = {{"ttft_max", c.slo.ttft_max}, {"tbt_max", c.slo.tbt_max}};
  j["scheduler"] = {
      {"policy", to_string(c.policy)},
      {"execution", c.execution ? to_string(*c.execution) : "auto"},
      {"alpha", c.params.alpha},
      {"beta", c.params.beta},
      {"gamma", c.params.gamma},
      {"token_ceiling", c.params.token_ceiling},
      {"image_ceiling", c.params.image_ceiling},
      {"check_invariants", c.check_invariants}};
  j["goodput"] = {{"low", config.goodput.low},
                  {"high", config.goodput.high},
                  {"tolerance", config.goodput.tolerance}};
  j["output"] = {{"dir", config.output.dir},
                 {"request_csv", config.output.request_csv}};
  j["seed"] = config.seed;
  return j;
}

}  // namespace epdsim
