#include <doctest.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "cellcache/errors.hpp"
#include "cellcache/experiment.hpp"

using namespace cellcache;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int status = -1;
  std::string out;
  std::string err;
};

fs::path scratch() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / ("cellcache-test-" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path write_config(const std::string& name, const json& j) {
  const auto p = scratch() / (name + ".json");
  std::ofstream(p) << j.dump(2);
  return p;
}

CliResult cli(const std::string& args) {
  const char* exe = std::getenv("CELLCACHE_CLI");
  REQUIRE_MESSAGE(exe != nullptr, "CELLCACHE_CLI is not set");
  const auto err = scratch() / "stderr.txt";
  const std::string cmd = std::string(exe) + " " + args + " 2>" + err.string();
  CliResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int st = pclose(pipe);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  r.err = slurp(err);
  return r;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) row.push_back(cell);
    if (!line.empty() && line.back() == ',') row.push_back("");
    rows.push_back(row);
  }
  return rows;
}

json base_config() {
  return {{"schema_version", 1},
          {"topology", {{"kind", "trefoil"}, {"B", 3}, {"d", 2}}},
          {"catalog", {{"F", 200}, {"s", 0.8}, {"total_rate", 1.0}}},
          {"policy", "LRU"},
          {"rule", "One"},
          {"C", 10},
          {"seed", 7},
          {"requests", 2e5}};
}

}  // namespace

TEST_CASE("config parsing") {
  const auto c = parse_config(base_config());
  CHECK(c.C == 10);
  CHECK(c.rule == UpdateRule::One);
  CHECK(c.policy.kind == PolicyKind::LRU);
  CHECK(*c.requests == 2e5);
  // Round trip through the canonical form.
  const auto again = parse_config(config_to_json(c));
  CHECK(config_to_json(again) == config_to_json(c));

  auto bad = base_config();
  bad["colour"] = 1;
  CHECK_THROWS_WITH_AS(parse_config(bad), "config.colour: unknown key", ConfigError);

  bad = base_config();
  bad["topology"]["d"] = 5;
  CHECK_THROWS_WITH_AS(parse_config(bad), "topology.d: must be in [1, B]", ConfigError);

  bad = base_config();
  bad["C"] = 500;
  CHECK_THROWS_AS(parse_config(bad), ConfigError);

  bad = base_config();
  bad["schema_version"] = 2;
  CHECK_THROWS_AS(parse_config(bad), ConfigError);

  bad = base_config();
  bad["sweep"] = {{"axis", "d"}, {"values", json::array()}};
  CHECK_THROWS_WITH_AS(parse_config(bad), "config.sweep.values: must be nonempty", ConfigError);

  bad = base_config();
  bad["sweep"] = {{"axis", "colour"}, {"values", {1}}};
  CHECK_THROWS_AS(parse_config(bad), ConfigError);

  bad = base_config();
  bad["policy"] = {{"name", "qLRU"}, {"q", 2.0}};
  CHECK_THROWS_AS(parse_config(bad), ConfigError);

  bad = base_config();
  bad["trace"] = {{"path", "/nonexistent.csv"}, {"window", 1.0}};
  CHECK_THROWS_AS(parse_config(bad), ConfigError);

  bad = base_config();
  bad["catalog"]["onoff"] = {{"t_on", -1}, {"t_off", 1}};
  CHECK_THROWS_AS(parse_config(bad), ConfigError);
}

TEST_CASE("topology specs") {
  CHECK(build_topology({{"kind", "torus"}, {"n", 2}, {"radius", 0.6}, {"resolution", 64}}).bs_count == 4);
  const auto p = build_topology(
      {{"kind", "points"}, {"positions", {{0, 0}, {1, 0}}}, {"radius", 0.7}, {"region", {-1, -1, 2, 1}}, {"resolution", 64}});
  CHECK(p.bs_count == 2);
  CHECK_THROWS_AS(build_topology({{"kind", "hexagon"}}), ConfigError);
  CHECK_THROWS_AS(build_topology({{"kind", "points"}, {"positions", {{0, 0}}}, {"radius", 1e-9}, {"region", {0, 0, 1, 1}}, {"resolution", 64}}),
                  ConfigError);

  const auto file = scratch() / "topo.json";
  std::ofstream(file) << json(build_trefoil(4, 2)).dump();
  const auto t = build_topology({{"kind", "file"}, {"path", file.string()}});
  CHECK(t.bs_count == 4);
  CHECK(union_measure(t.coverage, 0b11) == doctest::Approx(5.0 / 6));
}

TEST_CASE("cli: validate-config") {
  const auto ok = cli("validate-config " + write_config("ok", base_config()).string());
  CHECK(ok.status == 0);
  auto bad = base_config();
  bad["topology"]["radius"] = 2;
  const auto r = cli("validate-config " + write_config("bad", bad).string());
  CHECK(r.status == 1);
  CHECK(r.err.find("topology.radius") != std::string::npos);
  CHECK(cli("validate-config /nonexistent/config.json").status == 1);
  CHECK(cli("frobnicate").status == 1);
  CHECK(cli("simulate " + write_config("ok", base_config()).string() + " --rule sideways").status == 1);
}

TEST_CASE("cli: simulate is reproducible") {
  const auto path = write_config("sim", base_config()).string();
  const auto a = cli("simulate " + path);
  const auto b = cli("simulate " + path);
  REQUIRE(a.status == 0);
  CHECK(a.out == b.out);
  const auto rows = parse_csv(a.out);
  REQUIRE(rows.size() >= 2);
  CHECK(rows.front() == std::vector<std::string>{"window", "t0", "t1", "requests", "hits", "hit_ratio"});
  CHECK(rows.back()[0] == "all");
  const double hit = std::stod(rows.back()[5]);
  CHECK(hit > 0.0);
  CHECK(hit < 1.0);

  const auto other = cli("simulate " + path + " --seed 8");
  CHECK(other.out != a.out);

  const auto prefix = (scratch() / "sim-out").string();
  REQUIRE(cli("simulate " + path + " -o " + prefix).status == 0);
  const auto j = json::parse(slurp(prefix + ".json"));
  CHECK(j.at("hit_ratio").get<double>() == doctest::Approx(hit).epsilon(1e-12));
  CHECK(j.at("params").at("seed") == 7);
  CHECK(slurp(prefix + ".csv") == a.out);
}

TEST_CASE("cli: single cache simulation agrees with the model") {
  auto j = base_config();
  j["topology"] = {{"kind", "trefoil"}, {"B", 1}, {"d", 1}};
  j["rule"] = "Blind";
  j["requests"] = 4e5;
  const auto path = write_config("che", j).string();
  const auto sim = cli("simulate " + path);
  const auto model = cli("model " + path);
  REQUIRE(sim.status == 0);
  REQUIRE(model.status == 0);
  const double s = std::stod(parse_csv(sim.out).back()[5]);
  const double m = std::stod(parse_csv(model.out).back()[3]);
  CHECK(std::fabs(s - m) < 0.01);
}

TEST_CASE("cli: model runtime") {
  auto j = base_config();
  j["topology"] = {{"kind", "trefoil"}, {"B", 10}, {"d", 5}};
  j["catalog"] = {{"F", 10000}, {"s", 0.8}, {"total_rate", 1.0}};
  j["C"] = 100;
  j["policy"] = {{"name", "qLRU"}, {"q", 0.01}};
  j["rule"] = "Lazy";
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = cli("model " + write_config("model", j).string());
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  REQUIRE(r.status == 0);
  CHECK(secs < 5.0);
  const double m = std::stod(parse_csv(r.out).back()[3]);
  CHECK(m > 0.0);
  CHECK(m < 1.0);
}

TEST_CASE("cli: sweeps") {
  auto j = base_config();
  j["topology"] = {{"kind", "trefoil"}, {"B", 10}, {"d", 1}};
  j["catalog"] = {{"F", 1000}, {"s", 0.8}, {"total_rate", 1.0}};
  j["requests"] = 5e4;
  j["sweep"] = {{"axis", "d"},
                {"values", {1, 2, 5, 10}},
                {"combos", {{{"policy", "LRU"}, {"rule", "Blind"}}, {{"policy", "FIFO"}, {"rule", "Lazy"}}}}};
  const auto path = write_config("sweep", j).string();
  const auto serial = cli("sweep " + path + " --workers 1");
  const auto parallel = cli("sweep " + path + " --workers 3");
  REQUIRE(serial.status == 0);
  CHECK(serial.out == parallel.out);
  const auto rows = parse_csv(serial.out);
  REQUIRE(rows.size() == 1 + 4 * 2);
  CHECK(rows[0] == std::vector<std::string>{"axis_value", "policy", "rule", "model_hit", "sim_hit", "stderr"});
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double model = std::stod(rows[i][3]), sim = std::stod(rows[i][4]), se = std::stod(rows[i][5]);
    CHECK(std::fabs(model - sim) < 0.03 + 4 * se);
  }

  auto q = base_config();
  q["topology"] = {{"kind", "trefoil"}, {"B", 10}, {"d", 5}};
  q["catalog"] = {{"F", 2000}, {"s", 0.8}, {"total_rate", 1.0}};
  q["C"] = 20;
  q["sweep"] = {{"axis", "q"},
                {"values", {0.001}},
                {"simulate", false},
                {"combos", {{{"policy", "qLRU"}, {"rule", "Lazy"}}, {{"policy", "qLRU"}, {"rule", "One"}}}}};
  const auto qr = cli("sweep " + write_config("qsweep", q).string());
  REQUIRE(qr.status == 0);
  const auto qrows = parse_csv(qr.out);
  REQUIRE(qrows.size() == 3);
  CHECK(qrows[1][2] == "Lazy");
  CHECK(std::stod(qrows[1][3]) > std::stod(qrows[2][3]));

  auto empty = base_config();
  empty["sweep"] = {{"axis", "q"}, {"values", json::array()}};
  CHECK(cli("sweep " + write_config("empty", empty).string()).status == 1);
  CHECK(cli("sweep " + write_config("nosweep", base_config()).string() + " --workers 2").status == 1);
}

TEST_CASE("cli: greedy") {
  auto j = base_config();
  j["topology"] = {{"kind", "torus"}, {"n", 2}, {"radius", 0.6}, {"resolution", 64}};
  j["requests"] = 1e5;
  const auto prefix = (scratch() / "greedy").string();
  REQUIRE(cli("greedy " + write_config("greedy", j).string() + " -o " + prefix).status == 0);
  const auto out = json::parse(slurp(prefix + ".json"));
  const auto a = allocation_from_json(out.at("allocation"), 200);
  a.validate(10);
  const double analytic = out.at("hit_ratio").get<double>();
  const double sim = out.at("sim_hit").get<double>();
  const double se = out.at("sim_stderr").get<double>();
  CHECK(std::fabs(analytic - sim) < 4 * se + 1e-3);
  CHECK(parse_csv(slurp(prefix + ".csv")).size() == 1 + 4 * 10);
}

TEST_CASE("cli: compare-daily") {
  auto j = base_config();
  j.erase("requests");
  j["topology"] = {{"kind", "points"},
                   {"positions", {{0.3, 0.3}, {0.7, 0.3}, {0.5, 0.7}}},
                   {"radius", 0.35},
                   {"region", {0, 0, 1, 1}},
                   {"resolution", 128}};
  j["C"] = 20;
  j["trace"] = {{"synthetic", {{"windows", 5}, {"window_length", 1.0}, {"slots", 500}, {"total_rate", 20000}, {"churn", 0.5}}},
                {"window", 1.0},
                {"dynamic", {{{"policy", "2LRU"}, {"rule", "Lazy"}}}}};
  const auto r = cli("compare-daily " + write_config("daily", j).string());
  REQUIRE(r.status == 0);
  const auto rows = parse_csv(r.out);
  REQUIRE(rows.size() == 1 + 3 * 6);
  std::map<std::string, std::vector<double>> by_policy;
  for (std::size_t i = 1; i < rows.size(); ++i) by_policy[rows[i][0]].push_back(std::stod(rows[i][4]));
  REQUIRE(by_policy.size() == 3);
  for (const auto& [name, v] : by_policy) CHECK(v.size() == 6);
  CHECK(by_policy["greedy-forecast"].back() <= by_policy["greedy-oracle"].back());
  CHECK(by_policy.count("2LRU-Lazy") == 1);
}
