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
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "epdsim/cluster.h"
#include "epdsim/profiler.h"

namespace epdsim {

inline constexpr int kConfigVersion = 1;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OutputSettings {
  std::string dir;
  bool request_csv = true;
};

struct RunConfig {
  ClusterConfig cluster;
  // Method "auto": pick with the profiler over this many instances.
  bool auto_method = false;
  int auto_instances = 8;
  GoodputSearch goodput;
  std::uint64_t seed = 0;
  OutputSettings output;
};

// Every section is optional; unknown keys anywhere are an error.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::filesystem::path& path);

// Fully resolved configuration, suitable for echoing into reports and for
// loading back with parse_config.
nlohmann::ordered_json to_json(const RunConfig& config);

}  // namespace epdsim
