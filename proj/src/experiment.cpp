#include "cellcache/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <thread>

#include "cellcache/errors.hpp"

namespace cellcache {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError(path + ": " + what);
}

void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> known) {
  if (!j.is_object()) fail(path, "expected an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) fail(path + "." + key, "unknown key");
  }
}

template <class T>
T get(const json& j, const std::string& key, const std::string& path) {
  if (!j.contains(key)) fail(path + "." + key, "missing");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    fail(path + "." + key, "wrong type");
  }
}

template <class T>
T get_or(const json& j, const std::string& key, const std::string& path, T fallback) {
  return j.contains(key) ? get<T>(j, key, path) : fallback;
}

double positive(const json& j, const std::string& key, const std::string& path) {
  const double v = get<double>(j, key, path);
  if (!(v > 0.0) || !std::isfinite(v)) fail(path + "." + key, "must be positive");
  return v;
}

PolicySpec parse_policy_json(const json& j, const std::string& path) {
  try {
    if (j.is_string()) {
      PolicySpec p;
      p.kind = parse_policy(j.get<std::string>());
      return p;
    }
    return j.get<PolicySpec>();
  } catch (const ConfigError& e) {
    fail(path, e.what());
  } catch (const ParameterError& e) {
    fail(path, e.what());
  } catch (const json::exception&) {
    fail(path, "malformed policy");
  }
}

UpdateRule parse_rule_json(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a rule name");
  try {
    return parse_rule(j.get<std::string>());
  } catch (const ParameterError& e) {
    fail(path, e.what());
  }
}

std::vector<PolicyRule> parse_combos(const json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array");
  std::vector<PolicyRule> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    check_keys(j[i], p, {"policy", "rule"});
    if (!j[i].contains("policy") || !j[i].contains("rule")) fail(p, "needs policy and rule");
    out.push_back({parse_policy_json(j[i]["policy"], p + ".policy"), parse_rule_json(j[i]["rule"], p + ".rule")});
  }
  return out;
}

std::string fmt(double x) {
  std::ostringstream s;
  s << std::setprecision(10) << x;
  return s.str();
}

json combo_json(const PolicyRule& pr) {
  return {{"policy", pr.policy}, {"rule", to_string(pr.rule)}};
}

}  // namespace

std::string policy_label(const PolicySpec& p) {
  switch (p.kind) {
    case PolicyKind::qLRU: return "qLRU(" + fmt(p.q) + ")";
    case PolicyKind::kLRU: return std::to_string(p.k) + "LRU";
    default: return to_string(p.kind);
  }
}

std::string label(const PolicyRule& pr) { return policy_label(pr.policy) + "-" + to_string(pr.rule); }

Topology build_topology(const json& spec) {
  const std::string path = "topology";
  if (!spec.is_object()) fail(path, "expected an object");
  const auto kind = get<std::string>(spec, "kind", path);
  try {
    if (kind == "trefoil") {
      check_keys(spec, path, {"kind", "B", "d", "mass"});
      const int B = get<int>(spec, "B", path), d = get<int>(spec, "d", path);
      if (B < 1 || B > kMaxBs) fail(path + ".B", "must be in [1, 32]");
      if (d < 1 || d > B) fail(path + ".d", "must be in [1, B]");
      return build_trefoil(B, d, spec.contains("mass") ? positive(spec, "mass", path) : 1.0);
    }
    if (kind == "torus") {
      check_keys(spec, path, {"kind", "n", "radius", "resolution"});
      const int n = get<int>(spec, "n", path);
      if (n < 1 || n * n > kMaxBs) fail(path + ".n", "must be in [1, 5]");
      const int res = get_or<int>(spec, "resolution", path, 512);
      if (res < 64) fail(path + ".resolution", "must be >= 64");
      return build_torus(n, positive(spec, "radius", path), res);
    }
    if (kind == "points") {
      check_keys(spec, path, {"kind", "positions", "radius", "region", "resolution"});
      std::vector<Point> pos;
      for (const auto& p : get<std::vector<std::vector<double>>>(spec, "positions", path)) {
        if (p.size() != 2) fail(path + ".positions", "expected [x, y] pairs");
        pos.push_back({p[0], p[1]});
      }
      if (pos.empty() || static_cast<int>(pos.size()) > kMaxBs) fail(path + ".positions", "need 1..32 positions");
      const auto r = get<std::vector<double>>(spec, "region", path);
      if (r.size() != 4 || !(r[2] > r[0]) || !(r[3] > r[1])) fail(path + ".region", "expected [x0, y0, x1, y1]");
      const int res = get_or<int>(spec, "resolution", path, 512);
      if (res < 64) fail(path + ".resolution", "must be >= 64");
      return build_points(std::move(pos), positive(spec, "radius", path), Region{r[0], r[1], r[2], r[3]}, res);
    }
    if (kind == "file") {
      check_keys(spec, path, {"kind", "path"});
      const auto file = get<std::string>(spec, "path", path);
      std::ifstream in(file);
      if (!in) fail(path + ".path", "cannot open '" + file + "'");
      return json::parse(in).get<Topology>();
    }
  } catch (const ParameterError& e) {
    fail(path, e.what());
  } catch (const DegenerateTopologyError& e) {
    fail(path, e.what());
  } catch (const json::exception& e) {
    fail(path, e.what());
  }
  fail(path + ".kind", "expected trefoil, torus, points or file");
}

Catalog build_catalog(const json& spec) {
  try {
    Catalog c = spec.get<Catalog>();
    if (c.lambda.empty()) fail("catalog", "needs at least one content");
    for (double l : c.lambda) {
      if (!(l >= 0.0) || !std::isfinite(l)) fail("catalog.lambdas", "rates must be finite and >= 0");
    }
    return c;
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    if (what.rfind("catalog", 0) == 0) throw;
    fail("catalog", what);
  } catch (const ParameterError& e) {
    fail("catalog", e.what());
  } catch (const json::exception& e) {
    fail("catalog", e.what());
  }
}

ExperimentConfig parse_config(const json& j) {
  const std::string root = "config";
  check_keys(j, root,
             {"schema_version", "topology", "catalog", "policy", "rule", "C", "seed", "horizon", "requests", "warmup",
              "window", "model", "sweep", "trace", "output"});
  if (get<int>(j, "schema_version", root) != kSchemaVersion) fail(root + ".schema_version", "unsupported version");
  ExperimentConfig c;
  if (!j.contains("topology")) fail(root + ".topology", "missing");
  c.topology = j["topology"];
  build_topology(c.topology);
  if (!j.contains("catalog")) fail(root + ".catalog", "missing");
  c.catalog = j["catalog"];
  const Catalog catalog = build_catalog(c.catalog);
  c.policy = j.contains("policy") ? parse_policy_json(j["policy"], root + ".policy") : lru();
  c.rule = j.contains("rule") ? parse_rule_json(j["rule"], root + ".rule") : UpdateRule::Blind;
  c.C = get<int>(j, "C", root);
  if (c.C < 1) fail(root + ".C", "must be >= 1");
  if (static_cast<std::size_t>(c.C) >= catalog.size()) fail(root + ".C", "must be smaller than the catalog");
  c.seed = get_or<std::uint64_t>(j, "seed", root, 1);
  if (j.contains("horizon")) c.horizon = positive(j, "horizon", root);
  if (j.contains("requests")) c.requests = positive(j, "requests", root);
  c.warmup = get_or<double>(j, "warmup", root, 0.5);
  if (!(c.warmup >= 0.0 && c.warmup < 1.0)) fail(root + ".warmup", "must be in [0, 1)");
  c.window = get_or<double>(j, "window", root, 0.0);
  if (c.window < 0.0) fail(root + ".window", "must be >= 0");
  if (j.contains("model")) {
    const auto& m = j["model"];
    check_keys(m, root + ".model", {"tol", "max_iter", "bins", "symmetry"});
    c.model.tol = get_or<double>(m, "tol", root + ".model", 0.0);
    c.model.max_iter = get_or<int>(m, "max_iter", root + ".model", 200);
    c.model.bins = get_or<int>(m, "bins", root + ".model", 0);
    c.model.use_symmetry = get_or<bool>(m, "symmetry", root + ".model", true);
    if (c.model.max_iter < 1) fail(root + ".model.max_iter", "must be >= 1");
  }
  if (j.contains("sweep")) {
    const std::string p = root + ".sweep";
    const auto& s = j["sweep"];
    check_keys(s, p, {"axis", "values", "combos", "simulate", "workers"});
    SweepSpec sw;
    sw.axis = get<std::string>(s, "axis", p);
    static const std::vector<std::string> axes = {"d", "B", "radius", "q", "C", "s"};
    if (std::find(axes.begin(), axes.end(), sw.axis) == axes.end()) fail(p + ".axis", "expected d, B, radius, q, C or s");
    sw.values = get<std::vector<double>>(s, "values", p);
    if (sw.values.empty()) fail(p + ".values", "must be nonempty");
    if (s.contains("combos")) sw.combos = parse_combos(s["combos"], p + ".combos");
    sw.simulate = get_or<bool>(s, "simulate", p, true);
    sw.workers = get_or<int>(s, "workers", p, 0);
    if (sw.workers < 0) fail(p + ".workers", "must be >= 0");
    c.sweep = std::move(sw);
  }
  if (j.contains("trace")) {
    const std::string p = root + ".trace";
    const auto& t = j["trace"];
    check_keys(t, p, {"path", "synthetic", "window", "dynamic"});
    TraceSpec ts;
    if (t.contains("path")) {
      ts.path = get<std::string>(t, "path", p);
      if (!std::ifstream(*ts.path)) fail(p + ".path", "cannot open '" + *ts.path + "'");
    }
    if (t.contains("synthetic")) {
      const auto& s = t["synthetic"];
      const std::string q = p + ".synthetic";
      check_keys(s, q, {"windows", "window_length", "slots", "s", "total_rate", "churn"});
      ChurnTraceSpec cs;
      cs.windows = get_or<int>(s, "windows", q, cs.windows);
      cs.window_length = get_or<double>(s, "window_length", q, cs.window_length);
      cs.slots = get_or<int>(s, "slots", q, cs.slots);
      cs.s = get_or<double>(s, "s", q, cs.s);
      cs.total_rate = get_or<double>(s, "total_rate", q, cs.total_rate);
      cs.churn = get_or<double>(s, "churn", q, cs.churn);
      if (cs.windows < 1 || cs.slots < 1 || !(cs.window_length > 0.0) || !(cs.total_rate > 0.0) ||
          !(cs.churn >= 0.0 && cs.churn <= 1.0)) {
        fail(q, "invalid synthetic trace parameters");
      }
      ts.synthetic = cs;
    }
    if (ts.path.has_value() == ts.synthetic.has_value()) fail(p, "needs exactly one of path and synthetic");
    ts.window = positive(t, "window", p);
    if (t.contains("dynamic")) ts.dynamic = parse_combos(t["dynamic"], p + ".dynamic");
    c.trace = std::move(ts);
  }
  c.output = get_or<std::string>(j, "output", root, "");
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return parse_config(j);
}

json config_to_json(const ExperimentConfig& c) {
  json j = {{"schema_version", kSchemaVersion}, {"topology", c.topology}, {"catalog", c.catalog},
            {"policy", c.policy},               {"rule", to_string(c.rule)}, {"C", c.C},
            {"seed", c.seed},                   {"warmup", c.warmup}};
  if (c.horizon) j["horizon"] = *c.horizon;
  if (c.requests) j["requests"] = *c.requests;
  if (c.window > 0.0) j["window"] = c.window;
  j["model"] = {{"tol", c.model.tol}, {"max_iter", c.model.max_iter}, {"bins", c.model.bins},
                {"symmetry", c.model.use_symmetry}};
  if (c.sweep) {
    json combos = json::array();
    for (const auto& pr : c.sweep->combos) combos.push_back(combo_json(pr));
    j["sweep"] = {{"axis", c.sweep->axis}, {"values", c.sweep->values}, {"combos", combos},
                  {"simulate", c.sweep->simulate}, {"workers", c.sweep->workers}};
  }
  if (c.trace) {
    json t = {{"window", c.trace->window}};
    if (c.trace->path) t["path"] = *c.trace->path;
    if (c.trace->synthetic) {
      const auto& s = *c.trace->synthetic;
      t["synthetic"] = {{"windows", s.windows}, {"window_length", s.window_length}, {"slots", s.slots},
                        {"s", s.s},             {"total_rate", s.total_rate},       {"churn", s.churn}};
    }
    json dyn = json::array();
    for (const auto& pr : c.trace->dynamic) dyn.push_back(combo_json(pr));
    t["dynamic"] = dyn;
    j["trace"] = t;
  }
  if (!c.output.empty()) j["output"] = c.output;
  return j;
}

double simulation_horizon(const ExperimentConfig& c, const Topology& topo, const Catalog& catalog) {
  if (c.horizon) return *c.horizon;
  if (!c.requests) throw ConfigError("config: simulation needs horizon or requests");
  const double M = topo.coverage.total_mass();
  const auto lambda = per_mass_rates(catalog, M);
  double rate = std::accumulate(lambda.begin(), lambda.end(), 0.0) * M;
  if (catalog.onoff) rate *= catalog.onoff->on_fraction();
  return *c.requests / rate;
}

double model_hit_ratio(const Topology& topo, const Catalog& catalog, const PolicySpec& policy, UpdateRule rule,
                       int C, const SolveOptions& options, json* detail) {
  if (policy.kind == PolicyKind::kLRU) {
    const auto s = solve_klru(topo, catalog, rule, C, policy, options);
    if (detail) *detail = s;
    return s.hit_ratio;
  }
  if (catalog.onoff) {
    const auto s = solve_onoff(topo, catalog, policy, rule, C, options);
    if (detail) *detail = s;
    return s.hit_ratio;
  }
  bool uniform_q = true;
  for (double g : policy.q_exponents) uniform_q = uniform_q && g == policy.q_exponents.front();
  if (topo.kind == TopologyKind::Trefoil && uniform_q) {
    const auto s = solve_trefoil(topo.bs_count, topo.coverage_d, catalog, policy, rule, C, options.tol,
                                 topo.coverage.total_mass());
    if (detail) *detail = s;
    return s.hit_ratio;
  }
  const auto s = solve_network(topo, catalog, policy, rule, C, options);
  if (detail) *detail = s;
  return s.hit_ratio;
}

SimMetrics simulate(const Topology& topo, const Catalog& catalog, const PolicySpec& policy, UpdateRule rule,
                    int C, double horizon, double warmup, double window, std::uint64_t seed) {
  SimConfig cfg;
  cfg.policy = policy;
  cfg.rule = rule;
  cfg.capacity = C;
  cfg.content_count = catalog.size();
  cfg.horizon = horizon;
  cfg.warmup_fraction = warmup;
  cfg.window = window;
  cfg.seed = derive_seed(seed, "sim");
  const auto stream_seed = derive_seed(seed, "stream");
  if (catalog.onoff) {
    OnOffStream s(catalog, topo, horizon, stream_seed);
    return run(topo, s, cfg);
  }
  IrmStream s(catalog, topo, horizon, stream_seed);
  return run(topo, s, cfg);
}

CommandOutput cmd_simulate(const ExperimentConfig& c) {
  const Topology topo = build_topology(c.topology);
  const Catalog catalog = build_catalog(c.catalog);
  const double horizon = simulation_horizon(c, topo, catalog);
  const SimMetrics m = simulate(topo, catalog, c.policy, c.rule, c.C, horizon, c.warmup, c.window, c.seed);
  CommandOutput out;
  out.json = m;
  out.json["params"] = config_to_json(c);
  std::ostringstream csv;
  csv << std::setprecision(17);
  csv << "window,t0,t1,requests,hits,hit_ratio\n";
  for (std::size_t w = 0; w < m.windows.size(); ++w) {
    const auto& x = m.windows[w];
    csv << w << ',' << x.t0 << ',' << x.t1 << ',' << x.requests << ',' << x.hits << ',' << x.hit_ratio() << '\n';
  }
  csv << "all," << m.warmup_cutoff << ',' << m.end_time << ',' << m.requests << ',' << m.hits << ','
      << m.hit_ratio() << '\n';
  out.csv = csv.str();
  return out;
}

CommandOutput cmd_model(const ExperimentConfig& c) {
  const Topology topo = build_topology(c.topology);
  const Catalog catalog = build_catalog(c.catalog);
  CommandOutput out;
  json detail;
  const double hit = model_hit_ratio(topo, catalog, c.policy, c.rule, c.C, c.model, &detail);
  out.json = detail;
  out.json["params"] = config_to_json(c);
  std::ostringstream csv;
  csv << std::setprecision(17) << "policy,rule,C,model_hit\n"
      << policy_label(c.policy) << ',' << to_string(c.rule) << ',' << c.C << ',' << hit << '\n';
  out.csv = csv.str();
  return out;
}

CommandOutput cmd_greedy(const ExperimentConfig& c) {
  const Topology topo = build_topology(c.topology);
  const Catalog catalog = build_catalog(c.catalog);
  const auto lambda = per_mass_rates(catalog, topo.coverage.total_mass());
  const Allocation a = greedy(topo.coverage, lambda, c.C);
  const HitRate h = hit_rate(a, topo.coverage, lambda);
  const LocalOptimality lo = is_locally_optimal(a, topo.coverage, lambda);
  CommandOutput out;
  out.json = {{"allocation", allocation_to_json(a)}, {"hit_rate", h.rate}, {"hit_ratio", h.normalized},
              {"locally_optimal", lo.optimal}, {"params", config_to_json(c)}};
  if (lo.best) {
    out.json["improving_swap"] = {{"bs", lo.best->bs}, {"out", lo.best->out}, {"in", lo.best->in},
                                  {"gain", lo.best->gain}};
  }
  if (c.horizon || c.requests) {
    SimConfig cfg;
    cfg.content_count = catalog.size();
    cfg.horizon = simulation_horizon(c, topo, catalog);
    cfg.warmup_fraction = 0.0;
    cfg.seed = derive_seed(c.seed, "sim");
    cfg.static_holders = a.holders();
    IrmStream s(catalog, topo, *cfg.horizon, derive_seed(c.seed, "stream"));
    const SimMetrics m = run(topo, s, cfg);
    out.json["sim_hit"] = m.hit_ratio();
    out.json["sim_stderr"] = m.stderr_hit;
  }
  std::ostringstream csv;
  csv << "bs,content\n";
  for (int b = 0; b < a.bs_count(); ++b) {
    for (auto f : a.cache(b)) csv << b << ',' << f << '\n';
  }
  out.csv = csv.str();
  return out;
}

namespace {

struct SweepPoint {
  double value;
  PolicyRule combo;
  std::size_t index;
};

json apply_axis(json topology, const std::string& axis, double v) {
  if (axis == "d" || axis == "B") topology[axis] = static_cast<int>(std::lround(v));
  if (axis == "radius") topology["radius"] = v;
  return topology;
}

}  // namespace

CommandOutput cmd_sweep(const ExperimentConfig& c) {
  if (!c.sweep) throw ConfigError("config.sweep: missing");
  const SweepSpec& sw = *c.sweep;
  if (sw.values.empty()) throw ConfigError("config.sweep.values: must be nonempty");
  std::vector<PolicyRule> combos = sw.combos;
  if (combos.empty()) combos.push_back({c.policy, c.rule});

  std::vector<SweepPoint> points;
  for (double v : sw.values) {
    for (const auto& pr : combos) points.push_back({v, pr, points.size()});
  }
  struct Row {
    double model = NAN, sim = NAN, stderr_hit = NAN;
    std::string error;
  };
  std::vector<Row> rows(points.size());

  auto work = [&](const SweepPoint& p) {
    Row r;
    try {
      json tj = apply_axis(c.topology, sw.axis, p.value);
      json cj = c.catalog;
      PolicySpec policy = p.combo.policy;
      int C = c.C;
      if (sw.axis == "q") policy.q = p.value;
      if (sw.axis == "C") C = static_cast<int>(std::lround(p.value));
      if (sw.axis == "s") {
        cj["s"] = p.value;
        cj.erase("lambdas");
      }
      const Topology topo = build_topology(tj);
      const Catalog catalog = build_catalog(cj);
      r.model = model_hit_ratio(topo, catalog, policy, p.combo.rule, C, c.model);
      if (sw.simulate) {
        const double horizon = simulation_horizon(c, topo, catalog);
        const SimMetrics m = simulate(topo, catalog, policy, p.combo.rule, C, horizon, c.warmup, 0.0,
                                      derive_seed(c.seed, "sweep", p.index));
        r.sim = m.hit_ratio();
        r.stderr_hit = m.stderr_hit;
      }
    } catch (const std::exception& e) {
      r.error = e.what();
    }
    rows[p.index] = r;
  };

  int workers = sw.workers > 0 ? sw.workers : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = std::min<int>(workers, static_cast<int>(points.size()));
  if (workers <= 1) {
    for (const auto& p : points) work(p);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < points.size(); i = next++) work(points[i]);
      });
    }
    for (auto& t : pool) t.join();
  }

  CommandOutput out;
  std::ostringstream csv;
  csv << std::setprecision(17) << "axis_value,policy,rule,model_hit,sim_hit,stderr\n";
  json arr = json::array();
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    const auto& r = rows[i];
    if (!r.error.empty()) throw SolverError("sweep point " + fmt(p.value) + " " + label(p.combo) + ": " + r.error);
    csv << p.value << ',' << policy_label(p.combo.policy) << ',' << to_string(p.combo.rule) << ',' << r.model << ',';
    if (sw.simulate) csv << r.sim << ',' << r.stderr_hit;
    else csv << ',';
    csv << '\n';
    json row = {{"axis_value", p.value}, {"policy", policy_label(p.combo.policy)}, {"rule", to_string(p.combo.rule)},
                {"model_hit", r.model}};
    if (sw.simulate) {
      row["sim_hit"] = r.sim;
      row["stderr"] = r.stderr_hit;
    }
    arr.push_back(row);
  }
  out.csv = csv.str();
  out.json = {{"axis", sw.axis}, {"rows", arr}, {"params", config_to_json(c)}};
  return out;
}

CommandOutput cmd_compare_daily(const ExperimentConfig& c) {
  if (!c.trace) throw ConfigError("config.trace: missing");
  const TraceSpec& ts = *c.trace;
  const Topology topo = build_topology(c.topology);
  std::vector<Request> requests;
  std::size_t F = 0;
  if (ts.path) {
    Trace t = load_trace(*ts.path, topo, derive_seed(c.seed, "trace"));
    requests = std::move(t.requests);
    F = t.content_ids.size();
  } else {
    requests = churn_trace(*ts.synthetic, topo, derive_seed(c.seed, "trace"));
    for (const auto& r : requests) F = std::max<std::size_t>(F, r.content + std::size_t{1});
  }
  if (requests.empty()) throw ConfigError("config.trace: no request");

  struct Series {
    std::string name;
    std::vector<std::uint64_t> req, hit;
  };
  std::vector<Series> series;
  for (auto mode : {DailyMode::Oracle, DailyMode::Forecast}) {
    const DailyResult d = daily_workflow(requests, ts.window, mode, topo, c.C, F, c.seed);
    Series s{mode == DailyMode::Oracle ? "greedy-oracle" : "greedy-forecast", {}, {}};
    for (const auto& w : d.windows) {
      s.req.push_back(w.requests);
      s.hit.push_back(w.hits);
    }
    series.push_back(std::move(s));
  }
  const std::size_t W = series.front().req.size();
  for (const auto& pr : ts.dynamic) {
    SimConfig cfg;
    cfg.policy = pr.policy;
    cfg.rule = pr.rule;
    cfg.capacity = c.C;
    cfg.content_count = F;
    cfg.warmup_fraction = 0.0;
    cfg.window = ts.window;
    cfg.seed = derive_seed(c.seed, "daily-sim");
    const SimMetrics m = run(topo, std::span<const Request>(requests), cfg);
    Series s{label(pr), std::vector<std::uint64_t>(W, 0), std::vector<std::uint64_t>(W, 0)};
    for (std::size_t w = 0; w < m.windows.size(); ++w) {
      const std::size_t k = std::min(w, W - 1);
      s.req[k] += m.windows[w].requests;
      s.hit[k] += m.windows[w].hits;
    }
    series.push_back(std::move(s));
  }

  CommandOutput out;
  std::ostringstream csv;
  csv << std::setprecision(17) << "policy,window,requests,hits,hit_ratio\n";
  json arr = json::array();
  for (const auto& s : series) {
    std::uint64_t R = 0, H = 0;
    json per = json::array();
    for (std::size_t w = 0; w < W; ++w) {
      const double ratio = s.req[w] ? static_cast<double>(s.hit[w]) / s.req[w] : 0.0;
      csv << s.name << ',' << w << ',' << s.req[w] << ',' << s.hit[w] << ',' << ratio << '\n';
      per.push_back(ratio);
      R += s.req[w];
      H += s.hit[w];
    }
    const double total = R ? static_cast<double>(H) / R : 0.0;
    csv << s.name << ",all," << R << ',' << H << ',' << total << '\n';
    arr.push_back({{"policy", s.name}, {"windows", per}, {"overall", total}});
  }
  out.csv = csv.str();
  out.json = {{"series", arr}, {"windows", W}, {"params", config_to_json(c)}};
  return out;
}

}  // namespace cellcache
