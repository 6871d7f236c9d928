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

#include <iosfwd>
#include <string>

#include "json.hpp"

#include "epdsim/config.h"
#include "epdsim/metrics.h"
#include "epdsim/profiler.h"

namespace epdsim {

inline constexpr int kReportVersion = 1;

// Shortest round-trip decimal form.
std::string format_double(double v);

nlohmann::ordered_json stats_json(const LatencyStats& s);
nlohmann::ordered_json aggregates_json(const Aggregates& a);

// Aggregates, per-instance summaries, warnings and the resolved config.
nlohmann::ordered_json report_json(const SimReport& report,
                                   const RunConfig& config,
                                   const std::string& method,
                                   const std::string& trace_name);

// One row per request, fixed column order.
void write_request_csv(const SimReport& report, std::ostream& out);

nlohmann::ordered_json selection_json(const Selection& selection,
                                      bool include_partition);

// Human-readable summary for the terminal.
void print_summary(const SimReport& report, const std::string& method,
                   std::ostream& out);

}  // namespace epdsim
