// cellcache: simulate, model and place contents in overlapping-cell cache networks.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "cellcache/errors.hpp"
#include "cellcache/experiment.hpp"

using namespace cellcache;

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output;
  std::optional<int> capacity;
  std::optional<std::string> policy;
  std::optional<double> q;
  std::optional<std::string> rule;
  std::optional<double> horizon;
  std::optional<double> requests;
  std::optional<int> workers;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("config", o.config, "experiment JSON file")->required();
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("-o,--output", o.output, "output prefix (writes .json and .csv)");
  cmd->add_option("-C,--capacity", o.capacity, "cache size");
  cmd->add_option("--policy", o.policy, "LRU, qLRU, FIFO, RANDOM or 2LRU");
  cmd->add_option("--q", o.q, "qLRU admission probability");
  cmd->add_option("--rule", o.rule, "Blind, One, All or Lazy");
  cmd->add_option("--horizon", o.horizon, "simulated time");
  cmd->add_option("--requests", o.requests, "expected number of simulated requests");
  cmd->add_option("--workers", o.workers, "sweep worker threads");
}

ExperimentConfig load(const Overrides& o) {
  std::ifstream in(o.config);
  if (!in) throw ConfigError("config: cannot open '" + o.config + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  // Flags win over file values; the merged document is validated as a whole.
  if (o.seed) j["seed"] = *o.seed;
  if (o.output) j["output"] = *o.output;
  if (o.capacity) j["C"] = *o.capacity;
  if (o.policy || o.q) {
    nlohmann::json p = j.contains("policy") ? j["policy"] : nlohmann::json{{"name", "LRU"}};
    if (p.is_string()) p = {{"name", p}};
    if (o.policy) p["name"] = *o.policy;
    if (o.q) p["q"] = *o.q;
    j["policy"] = p;
  }
  if (o.rule) j["rule"] = *o.rule;
  if (o.horizon) j["horizon"] = *o.horizon;
  if (o.requests) j["requests"] = *o.requests;
  if (o.workers) {
    if (!j.contains("sweep")) throw ConfigError("config.sweep: --workers given without a sweep");
    j["sweep"]["workers"] = *o.workers;
  }
  return parse_config(j);
}

void emit(const ExperimentConfig& c, const CommandOutput& out) {
  if (c.output.empty()) {
    std::cout << out.csv;
    return;
  }
  std::ofstream js(c.output + ".json");
  js << out.json.dump(2) << '\n';
  std::ofstream csv(c.output + ".csv");
  csv << out.csv;
  if (!js || !csv) throw std::runtime_error("cannot write output '" + c.output + "'");
  std::cout << "wrote " << c.output << ".json and " << c.output << ".csv\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Overlapping-cell cache networks: simulation, model and placement"};
  app.require_subcommand(1);
  Overrides o;
  auto* sim = app.add_subcommand("simulate", "run the discrete-event simulator");
  auto* model = app.add_subcommand("model", "solve the approximate model");
  auto* gr = app.add_subcommand("greedy", "greedy static placement");
  auto* sweep = app.add_subcommand("sweep", "model and simulation over one parameter axis");
  auto* daily = app.add_subcommand("compare-daily", "per-window comparison on a trace");
  auto* check = app.add_subcommand("validate-config", "check a configuration file");
  for (auto* cmd : {sim, model, gr, sweep, daily, check}) add_common(cmd, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    const ExperimentConfig c = load(o);
    if (check->parsed()) {
      std::cout << "ok\n";
      return 0;
    }
    CommandOutput out;
    if (sim->parsed()) out = cmd_simulate(c);
    else if (model->parsed()) out = cmd_model(c);
    else if (gr->parsed()) out = cmd_greedy(c);
    else if (sweep->parsed()) out = cmd_sweep(c);
    else out = cmd_compare_daily(c);
    emit(c, out);
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "invalid configuration: " << e.what() << '\n';
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return 1;
  } catch (const ParameterError& e) {
    std::cerr << "invalid parameter: " << e.what() << '\n';
    return 1;
  } catch (const ConvergenceError& e) {
    std::cerr << "error: " << e.what();
    for (double r : e.residuals()) std::cerr << ' ' << r;
    std::cerr << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
