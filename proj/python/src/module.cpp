#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>

#include "cellcache/allocation.hpp"
#include "cellcache/analytic.hpp"
#include "cellcache/errors.hpp"
#include "cellcache/experiment.hpp"

namespace py = pybind11;
using nlohmann::json;
using namespace cellcache;

namespace {

// Python objects cross the boundary as JSON documents.
json from_py(const py::handle& obj) {
  const py::object dumps = py::module_::import("json").attr("dumps");
  return json::parse(dumps(obj).cast<std::string>());
}

py::object to_py(const json& j) {
  const py::object loads = py::module_::import("json").attr("loads");
  return loads(j.dump());
}

PolicySpec policy_of(const py::handle& obj) {
  json j = from_py(obj);
  if (j.is_string()) j = {{"name", j}};
  return j.get<PolicySpec>();
}

SolveOptions options_of(double tol, int max_iter, bool symmetry) {
  SolveOptions o;
  o.tol = tol;
  o.max_iter = max_iter;
  o.use_symmetry = symmetry;
  return o;
}

py::object model(const py::dict& topology, const py::dict& catalog, const py::object& policy,
                 const std::string& rule, int C, double tol, int max_iter, bool symmetry) {
  const Topology topo = build_topology(from_py(topology));
  const Catalog cat = build_catalog(from_py(catalog));
  json detail;
  const double hit = model_hit_ratio(topo, cat, policy_of(policy), parse_rule(rule), C,
                                     options_of(tol, max_iter, symmetry), &detail);
  detail["hit_ratio"] = hit;
  return to_py(detail);
}

py::object occupancy(const py::dict& topology, const py::dict& catalog, const py::object& policy,
                     const std::string& rule, int C, double tol, int max_iter) {
  const Topology topo = build_topology(from_py(topology));
  const Catalog cat = build_catalog(from_py(catalog));
  const ModelSolution s =
      solve_network(topo, cat, policy_of(policy), parse_rule(rule), C, options_of(tol, max_iter, true));
  json j = s;
  j["T"] = s.T;
  j["h"] = s.h;
  return to_py(j);
}

py::object trefoil(int B, int d, const py::dict& catalog, const py::object& policy, const std::string& rule,
                   int C) {
  const TrefoilSolution s = solve_trefoil(B, d, build_catalog(from_py(catalog)), policy_of(policy),
                                          parse_rule(rule), C);
  json j = s;
  j["pi"] = s.pi;
  return to_py(j);
}

py::object simulate_py(const py::dict& topology, const py::dict& catalog, const py::object& policy,
                       const std::string& rule, int C, double horizon, double warmup, double window,
                       std::uint64_t seed) {
  const Topology topo = build_topology(from_py(topology));
  const Catalog cat = build_catalog(from_py(catalog));
  return to_py(simulate(topo, cat, policy_of(policy), parse_rule(rule), C, horizon, warmup, window, seed));
}

py::object placement(const py::dict& topology, const py::dict& catalog, int C, bool exhaustive) {
  const Topology topo = build_topology(from_py(topology));
  const Catalog cat = build_catalog(from_py(catalog));
  const auto lambda = per_mass_rates(cat, topo.coverage.total_mass());
  const Allocation a = exhaustive ? exhaustive_optimal(topo.coverage, lambda, C) : greedy(topo.coverage, lambda, C);
  const HitRate h = hit_rate(a, topo.coverage, lambda);
  return to_py({{"allocation", allocation_to_json(a)},
                {"hit_rate", h.rate},
                {"hit_ratio", h.normalized},
                {"locally_optimal", is_locally_optimal(a, topo.coverage, lambda).optimal}});
}

py::object run_command(const py::dict& config, const std::string& command) {
  const ExperimentConfig c = parse_config(from_py(config));
  CommandOutput out;
  if (command == "simulate") {
    out = cmd_simulate(c);
  } else if (command == "model") {
    out = cmd_model(c);
  } else if (command == "greedy") {
    out = cmd_greedy(c);
  } else if (command == "sweep") {
    out = cmd_sweep(c);
  } else if (command == "compare-daily") {
    out = cmd_compare_daily(c);
  } else {
    throw ParameterError("unknown command '" + command + "'");
  }
  return to_py({{"json", out.json}, {"csv", out.csv}});
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Overlapping-cell cache networks: simulator, analytic model, static placement";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ParameterError>(m, "ParameterError", PyExc_ValueError);
  py::register_exception<CapacityError>(m, "CapacityError", PyExc_RuntimeError);
  py::register_exception<ConvergenceError>(m, "ConvergenceError", PyExc_RuntimeError);

  m.def("topology", [](const py::dict& spec) { return to_py(json(build_topology(from_py(spec)))); },
        py::arg("spec"), "Coverage atoms of a topology spec");
  m.def("zipf", [](int F, double s, double total_rate) { return per_mass_rates(zipf_catalog(F, s, total_rate), 1.0); },
        py::arg("F"), py::arg("s"), py::arg("total_rate") = 1.0);
  m.def("model", &model, py::arg("topology"), py::arg("catalog"), py::arg("policy"), py::arg("rule"),
        py::arg("C"), py::arg("tol") = 0.0, py::arg("max_iter") = 200, py::arg("symmetry") = true);
  m.def("solve_network", &occupancy, py::arg("topology"), py::arg("catalog"), py::arg("policy"),
        py::arg("rule"), py::arg("C"), py::arg("tol") = 0.0, py::arg("max_iter") = 200);
  m.def("solve_trefoil", &trefoil, py::arg("B"), py::arg("d"), py::arg("catalog"), py::arg("policy"),
        py::arg("rule"), py::arg("C"));
  m.def("simulate", &simulate_py, py::arg("topology"), py::arg("catalog"), py::arg("policy"), py::arg("rule"),
        py::arg("C"), py::arg("horizon"), py::arg("warmup") = 0.5, py::arg("window") = 0.0,
        py::arg("seed") = 1);
  m.def("greedy", [](const py::dict& t, const py::dict& c, int C) { return placement(t, c, C, false); },
        py::arg("topology"), py::arg("catalog"), py::arg("C"));
  m.def("exhaustive_optimal", [](const py::dict& t, const py::dict& c, int C) { return placement(t, c, C, true); },
        py::arg("topology"), py::arg("catalog"), py::arg("C"));
  m.def("run", &run_command, py::arg("config"), py::arg("command"),
        "Run a CLI command on a config dict; returns {'json': ..., 'csv': ...}");
}
