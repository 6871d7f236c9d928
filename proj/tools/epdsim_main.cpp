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

// Command-line front end: replay, goodput, profile, sweep, budgets and trace
// utilities.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "epdsim/cluster.h"
#include "epdsim/config.h"
#include "epdsim/metrics.h"
#include "epdsim/profiler.h"
#include "epdsim/report.h"
#include "epdsim/workload.h"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitInfeasible = 3;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string config_path;
  std::string trace_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  bool json = false;
};

epdsim::RunConfig resolve_config(const Globals& g) {
  epdsim::RunConfig config;
  if (!g.config_path.empty()) config = epdsim::load_config(g.config_path);
  if (g.seed) {
    config.seed = *g.seed;
    config.cluster.target_policy.seed = *g.seed;
  }
  if (!g.out_dir.empty()) config.output.dir = g.out_dir;
  return config;
}

epdsim::Trace read_any_trace(const std::string& path) {
  if (path.empty()) throw UsageError("--trace is required");
  if (fs::path(path).extension() == ".csv") {
    std::ifstream in(path);
    if (!in) throw epdsim::TraceError("cannot open trace file " + path);
    return epdsim::parse_trace_csv(in, path);
  }
  return epdsim::load_trace(path);
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

std::string json_text(const ordered_json& j) { return j.dump(2) + "\n"; }

// Resolves method "auto" by running the profiler.
epdsim::DisaggregationMethod resolve_method(const epdsim::RunConfig& config,
                                            const epdsim::Trace& trace) {
  if (!config.auto_method) return config.cluster.method;
  const auto sel = epdsim::select_method(trace, config.auto_instances,
                                         config.cluster, config.goodput);
  std::cerr << "method auto resolved to " << sel.winner().method.name() << "\n";
  return sel.winner().method;
}

int cmd_replay(const Globals& g) {
  epdsim::RunConfig config = resolve_config(g);
  const epdsim::Trace trace = read_any_trace(g.trace_path);
  config.cluster.method = resolve_method(config, trace);
  const epdsim::SimReport report = epdsim::run(config.cluster, trace);
  const std::string method = config.cluster.method.name();
  const ordered_json doc =
      epdsim::report_json(report, config, method, trace.name);
  if (!config.output.dir.empty()) {
    const fs::path dir(config.output.dir);
    write_file(dir / "report.json", json_text(doc));
    if (config.output.request_csv) {
      std::ostringstream csv;
      epdsim::write_request_csv(report, csv);
      write_file(dir / "requests.csv", csv.str());
    }
  }
  if (g.json) {
    std::cout << json_text(doc);
  } else {
    epdsim::print_summary(report, method, std::cout);
  }
  for (const auto& w : report.warnings) std::cerr << "WARNING: " << w << "\n";
  return kExitOk;
}

int cmd_goodput(const Globals& g, std::optional<double> low,
                std::optional<double> high, std::optional<double> tolerance,
                bool verbose) {
  epdsim::RunConfig config = resolve_config(g);
  if (low) config.goodput.low = *low;
  if (high) config.goodput.high = *high;
  if (tolerance) config.goodput.tolerance = *tolerance;
  if (!(config.goodput.tolerance > 0)) throw UsageError("--tolerance must be > 0");
  if (!(config.goodput.low > 0) || !(config.goodput.high > config.goodput.low)) {
    throw UsageError("need 0 < --low < --high");
  }
  const epdsim::Trace trace = read_any_trace(g.trace_path);
  config.cluster.method = resolve_method(config, trace);
  const epdsim::GoodputResult result = epdsim::cluster_goodput(
      config.cluster, trace, config.goodput.low, config.goodput.high,
      config.goodput.tolerance);

  ordered_json doc;
  doc["method"] = config.cluster.method.name();
  doc["goodput_rps"] = result.goodput;
  doc["monotone"] = result.monotone;
  ordered_json probes = ordered_json::array();
  for (const auto& p : result.probes) {
    probes.push_back({{"rate", p.rate}, {"attainment", p.attainment}});
  }
  doc["probes"] = probes;
  doc["config"] = epdsim::to_json(config);
  if (!config.output.dir.empty()) {
    write_file(fs::path(config.output.dir) / "goodput.json", json_text(doc));
  }
  if (!result.monotone) {
    std::cerr << "WARNING: attainment was not monotone in the request rate\n";
  }
  if (g.json) {
    std::cout << json_text(doc);
    return kExitOk;
  }
  if (verbose) {
    for (const auto& p : result.probes) {
      std::cout << "probe rate=" << epdsim::format_double(p.rate)
                << " attainment=" << epdsim::format_double(p.attainment) << "\n";
    }
  }
  std::cout << "goodput " << epdsim::format_double(result.goodput)
            << " req/s (" << config.cluster.method.name() << ")\n";
  return kExitOk;
}

void print_table(const epdsim::Selection& sel, std::ostream& out) {
  out << "method       family  goodput_rps\n";
  for (std::size_t i = 0; i < sel.table.size(); ++i) {
    const auto& row = sel.table[i];
    std::string name = row.method.name();
    std::string family = row.method.family();
    name.resize(std::max<std::size_t>(name.size(), 12), ' ');
    family.resize(std::max<std::size_t>(family.size(), 7), ' ');
    out << name << ' ' << family << ' ' << epdsim::format_double(row.goodput)
        << (row.feasible ? "" : " (infeasible)")
        << (i == sel.best ? "  <- winner" : "") << "\n";
  }
}

int cmd_profile(const Globals& g, std::optional<int> instances,
                bool brute_force, std::optional<double> window) {
  epdsim::RunConfig config = resolve_config(g);
  const int n = instances ? *instances : config.auto_instances;
  if (n < 3) throw UsageError("--instances must be >= 3");
  epdsim::Trace trace = read_any_trace(g.trace_path);
  if (window) {
    if (!(*window > 0)) throw UsageError("--window must be > 0");
    trace = epdsim::latest_window(trace, *window);
  }
  const epdsim::Selection sel =
      brute_force ? epdsim::brute_force_select(trace, n, config.cluster, config.goodput)
                  : epdsim::select_method(trace, n, config.cluster, config.goodput);
  ordered_json doc = epdsim::selection_json(sel, !brute_force);
  doc["instances"] = n;
  doc["mode"] = brute_force ? "brute_force" : "heuristic";
  doc["config"] = epdsim::to_json(config);
  if (!config.output.dir.empty()) {
    write_file(fs::path(config.output.dir) / "profile.json", json_text(doc));
  }
  if (g.json) {
    std::cout << json_text(doc);
  } else {
    print_table(sel, std::cout);
  }
  return kExitOk;
}

std::vector<double> parse_rates(const std::string& spec) {
  std::vector<double> out;
  if (spec.find(':') != std::string::npos) {
    std::stringstream ss(spec);
    std::string part;
    std::vector<double> v;
    while (std::getline(ss, part, ':')) v.push_back(std::stod(part));
    if (v.size() != 3 || !(v[2] > 0) || v[1] < v[0]) {
      throw UsageError("--rates expects start:stop:step");
    }
    const auto steps = static_cast<int>(std::floor((v[1] - v[0]) / v[2] + 1e-9));
    for (int i = 0; i <= steps; ++i) out.push_back(v[0] + i * v[2]);
  } else {
    std::stringstream ss(spec);
    std::string part;
    while (std::getline(ss, part, ',')) out.push_back(std::stod(part));
  }
  for (double r : out) {
    if (!(r > 0)) throw UsageError("rates must be > 0");
  }
  if (out.empty()) throw UsageError("--rates is empty");
  return out;
}

struct SweepPoint {
  std::string label;
  epdsim::ClusterConfig cluster;
  std::optional<double> rate;
};

int cmd_sweep(const Globals& g, const std::string& axis,
              const std::string& family, std::optional<int> instances,
              const std::string& rates, std::optional<double> fixed_rate) {
  epdsim::RunConfig config = resolve_config(g);
  const epdsim::Trace trace = read_any_trace(g.trace_path);
  std::vector<SweepPoint> points;
  if (axis == "instance_ratio") {
    const int n = instances ? *instances : config.cluster.method.total();
    if (n < 2) throw UsageError("--instances must be >= 2");
    for (const auto& m : epdsim::enumerate_methods(n)) {
      if (m.family() != family) continue;
      SweepPoint p{m.name(), config.cluster, fixed_rate};
      p.cluster.method = m;
      points.push_back(p);
    }
    if (points.empty()) {
      throw UsageError("--family must be E+P+D, EP+D or ED+P");
    }
  } else if (axis == "request_rate") {
    if (rates.empty()) throw UsageError("--rates is required for request_rate");
    config.cluster.method = resolve_method(config, trace);
    for (double r : parse_rates(rates)) {
      points.push_back({epdsim::format_double(r), config.cluster, r});
    }
  } else if (axis == "scheduler_policy") {
    config.cluster.method = resolve_method(config, trace);
    for (auto policy : {epdsim::SchedulerPolicy::kStageLevel,
                        epdsim::SchedulerPolicy::kStallFreeChunked,
                        epdsim::SchedulerPolicy::kPrefillPrioritized}) {
      SweepPoint p{epdsim::to_string(policy), config.cluster, fixed_rate};
      p.cluster.policy = policy;
      p.cluster.execution.reset();
      points.push_back(p);
    }
  } else {
    throw UsageError("unknown sweep axis '" + axis +
                     "' (instance_ratio, request_rate, scheduler_policy)");
  }

  std::ostringstream csv;
  csv << "axis,point,method,policy,rate_rps,slo_attainment,throughput_rps,"
         "ttft_mean_s,ttft_p50_s,ttft_p90_s,ttft_p99_s,tbt_p50_s,tbt_p99_s,"
         "tbt_max_s,migration_share\n";
  for (const auto& p : points) {
    const epdsim::Trace t = p.rate ? epdsim::scale_to_rate(trace, *p.rate) : trace;
    const epdsim::Aggregates a = epdsim::aggregate(epdsim::run(p.cluster, t));
    const double rate = t.size() >= 2 ? epdsim::arrival_rate(t) : 0.0;
    using epdsim::format_double;
    csv << axis << ',' << p.label << ',' << p.cluster.method.name() << ','
        << epdsim::to_string(p.cluster.policy) << ',' << format_double(rate)
        << ',' << format_double(a.attainment) << ','
        << format_double(a.throughput_rps) << ',' << format_double(a.ttft.mean)
        << ',' << format_double(a.ttft.p50) << ',' << format_double(a.ttft.p90)
        << ',' << format_double(a.ttft.p99) << ',' << format_double(a.tbt.p50)
        << ',' << format_double(a.tbt.p99) << ',' << format_double(a.tbt.max)
        << ',' << format_double(a.migration_share) << '\n';
  }
  if (!config.output.dir.empty()) {
    write_file(fs::path(config.output.dir) / ("sweep_" + axis + ".csv"), csv.str());
  }
  std::cout << csv.str();
  return kExitOk;
}

int cmd_budgets(const Globals& g) {
  const epdsim::RunConfig config = resolve_config(g);
  epdsim::Trace trace;
  if (!g.trace_path.empty()) trace = read_any_trace(g.trace_path);
  ordered_json rows = ordered_json::array();
  for (const auto& type : epdsim::InstanceType::all()) {
    const epdsim::BudgetQuery q = epdsim::budget_query(type, config.cluster, trace);
    const epdsim::BudgetPair b =
        epdsim::search_budgets(q, config.cluster.model, config.cluster.hw);
    rows.push_back({{"type", type.name()},
                    {"latency_cap_s", q.cap},
                    {"token_budget", b.token_budget},
                    {"image_budget", b.image_budget},
                    {"feasible", b.feasible}});
  }
  ordered_json doc = {{"budgets", rows}, {"config", epdsim::to_json(config)}};
  if (!config.output.dir.empty()) {
    write_file(fs::path(config.output.dir) / "budgets.json", json_text(doc));
  }
  if (g.json) {
    std::cout << json_text(doc);
    return kExitOk;
  }
  std::cout << "type  cap_s     tau_t  tau_e  feasible\n";
  for (const auto& r : rows) {
    std::string type = r["type"].get<std::string>();
    std::string cap = epdsim::format_double(r["latency_cap_s"].get<double>());
    type.resize(5, ' ');
    cap.resize(9, ' ');
    std::string t = std::to_string(r["token_budget"].get<std::int64_t>());
    std::string e = std::to_string(r["image_budget"].get<std::int64_t>());
    t.resize(6, ' ');
    e.resize(6, ' ');
    std::cout << type << ' ' << cap << ' ' << t << ' ' << e << ' '
              << (r["feasible"].get<bool>() ? "yes" : "NO") << "\n";
  }
  return kExitOk;
}

int cmd_validate_trace(const Globals& g) {
  const epdsim::Trace trace = read_any_trace(g.trace_path);
  epdsim::validate_trace(trace);
  std::cout << "ok: " << trace.size() << " requests";
  if (trace.size() >= 2) {
    const double span = trace.requests.back().arrival_time -
                        trace.requests.front().arrival_time;
    if (span > 0) {
      std::cout << ", rate " << epdsim::format_double(epdsim::arrival_rate(trace))
                << " req/s";
    }
  }
  std::cout << "\n";
  return kExitOk;
}

int cmd_convert_trace(const Globals& g, const std::string& output) {
  if (output.empty()) throw UsageError("--output is required");
  const epdsim::Trace trace = read_any_trace(g.trace_path);
  if (fs::path(output).extension() == ".csv") {
    std::ostringstream out;
    out << "id,arrival_s,image_tokens,prompt_tokens,output_tokens,ttft_slo_s,"
           "tbt_slo_s\n";
    for (const auto& r : trace.requests) {
      out << r.id.to_string() << ',' << epdsim::format_double(r.arrival_time)
          << ',';
      for (std::size_t i = 0; i < r.image_token_counts.size(); ++i) {
        if (i) out << ';';
        out << r.image_token_counts[i];
      }
      out << ',' << r.prompt_tokens << ',' << r.output_tokens << ','
          << (r.ttft_slo ? epdsim::format_double(*r.ttft_slo) : "") << ','
          << (r.tbt_slo ? epdsim::format_double(*r.tbt_slo) : "") << '\n';
    }
    write_file(output, out.str());
  } else {
    std::ostringstream out;
    epdsim::write_trace(trace, out);
    write_file(output, out.str());
  }
  std::cout << "wrote " << trace.size() << " requests to " << output << "\n";
  return kExitOk;
}

epdsim::IntDist parse_dist(const std::string& spec) {
  const auto colon = spec.find(':');
  try {
    if (colon == std::string::npos) return epdsim::IntDist::fixed(std::stoll(spec));
    return epdsim::IntDist::uniform(std::stoll(spec.substr(0, colon)),
                                    std::stoll(spec.substr(colon + 1)));
  } catch (const std::logic_error&) {
    throw UsageError("bad integer range '" + spec + "' (N or LO:HI)");
  }
}

struct SynthFlags {
  std::size_t requests = 100;
  double rate = 1.0;
  std::string images = "1";
  std::string image_tokens = "576";
  std::string prompt = "40";
  std::string output_tokens = "100";
  std::optional<double> ttft_slo;
  std::optional<double> tbt_slo;
  std::string name = "synthetic";
  std::string output;
};

int cmd_synth_trace(const Globals& g, const SynthFlags& f) {
  epdsim::SynthSpec spec;
  spec.seed = g.seed.value_or(0);
  spec.n_requests = f.requests;
  spec.rate = f.rate;
  spec.image_count = parse_dist(f.images);
  spec.visual_tokens = parse_dist(f.image_tokens);
  spec.prompt_tokens = parse_dist(f.prompt);
  spec.output_tokens = parse_dist(f.output_tokens);
  spec.name = f.name;
  if (f.ttft_slo || f.tbt_slo) {
    epdsim::SloSpec slo;
    if (f.ttft_slo) slo.ttft_max = *f.ttft_slo;
    if (f.tbt_slo) slo.tbt_max = *f.tbt_slo;
    spec.slo = slo;
  }
  const epdsim::Trace trace = epdsim::synth_trace(spec);
  std::ostringstream out;
  epdsim::write_trace(trace, out);
  if (f.output.empty()) {
    std::cout << out.str();
  } else {
    write_file(f.output, out.str());
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"epdsim: simulator for disaggregated multimodal model serving"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--config", g.config_path, "JSON run configuration");
  app.add_option("--trace", g.trace_path, "request trace (.jsonl or .csv)");
  app.add_option("--seed", g.seed, "seed for random target selection and synth-trace");
  app.add_option("--out", g.out_dir, "directory for report files");
  app.add_flag("--json", g.json, "print machine-readable JSON on stdout");

  auto* replay = app.add_subcommand("replay", "run a trace and report metrics");

  auto* goodput = app.add_subcommand("goodput", "binary-search the goodput");
  std::optional<double> low, high, tolerance;
  bool verbose = false;
  goodput->add_option("--low", low, "lowest rate, req/s");
  goodput->add_option("--high", high, "highest rate, req/s");
  goodput->add_option("--tolerance", tolerance, "search resolution, req/s");
  goodput->add_flag("-v,--verbose", verbose, "print every probe");

  auto* profile = app.add_subcommand("profile", "choose a disaggregation method");
  std::optional<int> instances;
  bool brute_force = false;
  std::optional<double> window;
  profile->add_option("--instances,-n", instances, "cluster size");
  profile->add_flag("--brute-force", brute_force, "evaluate every split");
  profile->add_option("--window", window, "only use the latest WINDOW seconds");

  auto* sweep = app.add_subcommand("sweep", "one simulation per grid point");
  std::string axis;
  std::string family = "EP+D";
  std::string rates;
  std::optional<double> sweep_rate;
  std::optional<int> sweep_instances;
  sweep->add_option("--axis", axis, "instance_ratio, request_rate or scheduler_policy")
      ->required();
  sweep->add_option("--family", family, "E+P+D, EP+D or ED+P");
  sweep->add_option("--instances,-n", sweep_instances, "cluster size");
  sweep->add_option("--rates", rates, "start:stop:step or a comma list");
  sweep->add_option("--rate", sweep_rate, "replay rate for non-rate axes");

  auto* budgets = app.add_subcommand("budgets", "print per-type batch budgets");
  auto* validate = app.add_subcommand("validate-trace", "check a trace file");
  auto* convert = app.add_subcommand("convert-trace", "convert between JSONL and CSV");
  std::string convert_out;
  convert->add_option("--output,-o", convert_out, "output path");

  auto* synth = app.add_subcommand("synth-trace", "generate a Poisson trace");
  SynthFlags sf;
  synth->add_option("--requests", sf.requests, "request count");
  synth->add_option("--rate", sf.rate, "arrival rate, req/s");
  synth->add_option("--images", sf.images, "images per request, N or LO:HI");
  synth->add_option("--image-tokens", sf.image_tokens, "tokens per image");
  synth->add_option("--prompt", sf.prompt, "text prompt tokens");
  synth->add_option("--output-tokens", sf.output_tokens, "output tokens");
  synth->add_option("--ttft-slo", sf.ttft_slo, "per-request TTFT bound");
  synth->add_option("--tbt-slo", sf.tbt_slo, "per-request TBT bound");
  synth->add_option("--name", sf.name, "trace name");
  synth->add_option("--output,-o", sf.output, "output path (stdout if unset)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*replay) return cmd_replay(g);
    if (*goodput) return cmd_goodput(g, low, high, tolerance, verbose);
    if (*profile) return cmd_profile(g, instances, brute_force, window);
    if (*sweep) {
      return cmd_sweep(g, axis, family, sweep_instances, rates, sweep_rate);
    }
    if (*budgets) return cmd_budgets(g);
    if (*validate) return cmd_validate_trace(g);
    if (*convert) return cmd_convert_trace(g, convert_out);
    if (*synth) return cmd_synth_trace(g, sf);
  } catch (const epdsim::SloInfeasible& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const epdsim::NoFeasibleMethod& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const epdsim::DecodeMemoryInfeasible& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const epdsim::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const epdsim::TraceError& e) {
    std::cerr << "trace error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const epdsim::InvariantViolation& e) {
    std::cerr << "invariant violation: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}
