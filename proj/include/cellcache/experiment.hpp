#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cellcache/allocation.hpp"
#include "cellcache/analytic.hpp"
#include "cellcache/geometry.hpp"
#include "cellcache/policy.hpp"
#include "cellcache/simulator.hpp"
#include "cellcache/workload.hpp"

namespace cellcache {

inline constexpr int kSchemaVersion = 1;

struct PolicyRule {
  PolicySpec policy;
  UpdateRule rule = UpdateRule::Blind;
};

std::string policy_label(const PolicySpec& p);
std::string label(const PolicyRule& pr);

struct SweepSpec {
  std::string axis;  // d, B, radius, q, C, s
  std::vector<double> values;
  std::vector<PolicyRule> combos;  // empty: the top-level policy and rule
  bool simulate = true;
  int workers = 0;  // 0: hardware concurrency
};

struct TraceSpec {
  std::optional<std::string> path;
  std::optional<ChurnTraceSpec> synthetic;
  double window = 1.0;
  std::vector<PolicyRule> dynamic;  // simulated alongside the greedy baselines
};

struct ExperimentConfig {
  nlohmann::json topology;
  nlohmann::json catalog;
  PolicySpec policy;
  UpdateRule rule = UpdateRule::Blind;
  int C = 1;
  std::uint64_t seed = 1;
  std::optional<double> horizon;
  std::optional<double> requests;  // expected request count, converted to a horizon
  double warmup = 0.5;
  double window = 0.0;
  SolveOptions model;
  std::optional<SweepSpec> sweep;
  std::optional<TraceSpec> trace;
  std::string output;
};

// Throws ConfigError with the offending field path; unknown keys are rejected.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
nlohmann::json config_to_json(const ExperimentConfig& c);

Topology build_topology(const nlohmann::json& spec);
Catalog build_catalog(const nlohmann::json& spec);

// Horizon of a simulation: explicit, or expected request count / total rate.
double simulation_horizon(const ExperimentConfig& c, const Topology& topo, const Catalog& catalog);

// Model hit ratio, dispatched on topology kind, policy and catalog.
double model_hit_ratio(const Topology& topo, const Catalog& catalog, const PolicySpec& policy, UpdateRule rule,
                       int C, const SolveOptions& options, nlohmann::json* detail = nullptr);

SimMetrics simulate(const Topology& topo, const Catalog& catalog, const PolicySpec& policy, UpdateRule rule,
                    int C, double horizon, double warmup, double window, std::uint64_t seed);

struct CommandOutput {
  nlohmann::json json;
  std::string csv;
};

CommandOutput cmd_simulate(const ExperimentConfig& c);
CommandOutput cmd_model(const ExperimentConfig& c);
CommandOutput cmd_greedy(const ExperimentConfig& c);
CommandOutput cmd_sweep(const ExperimentConfig& c);
CommandOutput cmd_compare_daily(const ExperimentConfig& c);

}  // namespace cellcache
