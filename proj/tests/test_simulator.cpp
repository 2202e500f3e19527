#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <list>
#include <set>

#include "cellcache/allocation.hpp"
#include "cellcache/errors.hpp"
#include "cellcache/simulator.hpp"
#include "support.hpp"

using namespace cellcache;

namespace {

Topology single_cell() { return make_custom_topology(CoverageMap(1, {{0b1, 1.0, {}}})); }

SimConfig config(PolicySpec p, UpdateRule rule, int C, std::size_t F, double horizon, std::uint64_t seed = 1) {
  SimConfig c;
  c.policy = p;
  c.rule = rule;
  c.capacity = C;
  c.content_count = F;
  c.horizon = horizon;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("routing") {
  Rng rng(1);
  SUBCASE("single holder serves") {
    const auto r = route(0b11, 0b10, rng);
    CHECK(r.hit);
    CHECK(r.server == 1);
    CHECK(r.J == 0b10);
  }
  SUBCASE("two holders split evenly") {
    int first = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) first += route(0b11, 0b11, rng).server == 0;
    CHECK(std::abs(first - n / 2) <= 3 * std::sqrt(n * 0.25));
  }
  SUBCASE("misses go to a uniform covering BS") {
    int first = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
      const auto r = route(0b11, 0b100, rng);
      CHECK_FALSE(r.hit);
      CHECK(r.J == 0u);
      first += r.server == 0;
    }
    CHECK(std::abs(first - n / 2) <= 3 * std::sqrt(n * 0.25));
  }
  SUBCASE("empty covering set") { CHECK_THROWS_AS(route(0, 0b1, rng), ProtocolError); }
}

TEST_CASE("update verdicts") {
  CHECK_FALSE(update_verdict(UpdateRule::Lazy, 0b11, 0b11, 0, 0, 0));
  CHECK(update_verdict(UpdateRule::Lazy, 0b11, 0b01, 0, 0, 0));
  CHECK_FALSE(update_verdict(UpdateRule::Lazy, 0b11, 0b01, 0, 1, 1));
  CHECK(update_verdict(UpdateRule::Lazy, 0b11, 0, 1, 1, 0));
  CHECK(update_verdict(UpdateRule::Blind, 0b11, 0, 1, 1, 0));
  CHECK_FALSE(update_verdict(UpdateRule::Blind, 0b11, 0, 1, 0, 0));
  CHECK(update_verdict(UpdateRule::All, 0b11, 0b10, 1, 0, 1));
  CHECK(update_verdict(UpdateRule::One, 0b11, 0b10, 1, 0, 0));
  CHECK_FALSE(update_verdict(UpdateRule::One, 0b11, 0b10, 1, 1, 0));
  CHECK(parse_rule("lazy") == UpdateRule::Lazy);
  CHECK_THROWS_AS(parse_rule("some"), ParameterError);
}

TEST_CASE("single cache matches a standalone LRU replay") {
  const auto topo = single_cell();
  const auto c = zipf_catalog(200, 0.8, 1.0);
  const auto reqs = irm_stream(c, topo, 50000.0, 4);
  auto cfg = config(lru(), UpdateRule::Blind, 20, 200, 50000.0);
  const auto m = run(topo, reqs, cfg);

  std::list<ContentId> items;
  std::uint64_t hits = 0, counted = 0;
  for (const auto& r : reqs) {
    auto it = std::find(items.begin(), items.end(), r.content);
    const bool hit = it != items.end();
    if (hit) items.erase(it);
    else if (items.size() == 20) items.pop_back();
    items.push_front(r.content);
    if (r.time >= 25000.0) {
      ++counted;
      hits += hit;
    }
  }
  CHECK(m.requests == counted);
  CHECK(m.hits == hits);
  CHECK(m.final_contents[0] == std::vector<ContentId>(items.begin(), items.end()));
}

TEST_CASE("single cell: every rule behaves the same") {
  const auto topo = single_cell();
  const auto c = zipf_catalog(100, 0.8, 1.0);
  const auto reqs = irm_stream(c, topo, 20000.0, 8);
  std::optional<std::uint64_t> hits;
  for (auto rule : {UpdateRule::Blind, UpdateRule::One, UpdateRule::All, UpdateRule::Lazy}) {
    const auto m = run(topo, reqs, config(qlru(0.5), rule, 10, 100, 20000.0));
    if (!hits) hits = m.hits;
    CHECK(m.hits == *hits);
  }
}

TEST_CASE("static placement follows the closed form") {
  const auto topo = testing::two_cell_topology();
  const int F = 30;
  const auto c = zipf_catalog(F, 0.8, 1.0);
  const auto lambda = per_mass_rates(c, topo.coverage.total_mass());
  Rng rng(12);
  Allocation a(2, F);
  for (int b = 0; b < 2; ++b) {
    while (a.cache(b).size() < 5) {
      const auto f = static_cast<ContentId>(uniform_index(rng, F));
      if (!a.has(b, f)) a.add(b, f);
    }
  }
  double num = 0.0, den = 0.0;
  const auto holders = a.holders();
  for (int f = 0; f < F; ++f) {
    num += lambda[f] * union_measure(topo.coverage, holders[f]);
    den += lambda[f] * topo.coverage.total_mass();
  }
  auto cfg = config(lru(), UpdateRule::Blind, 5, F, 2e5);
  cfg.static_holders = holders;
  const auto m = run(topo, irm_stream(c, topo, 2e5, 3), cfg);
  CHECK(std::fabs(m.hit_ratio() - num / den) <= 3 * std::sqrt(m.hit_ratio() * (1 - m.hit_ratio()) / m.requests));
  CHECK(m.final_contents[0] == a.cache(0));
}

TEST_CASE("conservation of requests") {
  const auto topo = build_torus(2, 0.7, 64);
  const auto c = zipf_catalog(100, 0.8, 1.0);
  for (auto rule : {UpdateRule::Blind, UpdateRule::One, UpdateRule::All, UpdateRule::Lazy}) {
    auto cfg = config(lru(), rule, 10, 100, 2e4);
    cfg.window = 1000.0;
    const auto m = run(topo, irm_stream(c, topo, 2e4, 5), cfg);
    std::uint64_t served = 0, hits = 0, wreq = 0;
    for (auto s : m.cache_served) served += s;
    for (auto h : m.cache_hits) hits += h;
    for (const auto& w : m.windows) wreq += w.requests;
    CHECK(served == m.requests);
    CHECK(hits == m.hits);
    CHECK(wreq == m.total_requests);
    CHECK(m.hits <= m.requests);
    for (const auto& cache : m.final_contents) CHECK(cache.size() <= 10);
  }
}

TEST_CASE("deterministic per seed") {
  const auto topo = build_trefoil(3, 2);
  const auto c = zipf_catalog(50, 0.8, 1.0);
  const auto a = run(topo, irm_stream(c, topo, 1e4, 2), config(random_policy(), UpdateRule::Lazy, 5, 50, 1e4, 7));
  const auto b = run(topo, irm_stream(c, topo, 1e4, 2), config(random_policy(), UpdateRule::Lazy, 5, 50, 1e4, 7));
  CHECK(a.hits == b.hits);
  CHECK(a.final_contents == b.final_contents);
  CHECK(nlohmann::json(a).dump() == nlohmann::json(b).dump());
}

TEST_CASE("property: doubling the capacity does not hurt") {
  Rng rng(31);
  for (int trial = 0; trial < 6; ++trial) {
    const int B = 1 + static_cast<int>(uniform_index(rng, 3));
    const auto cm = testing::random_map(rng, B);
    const auto topo = make_custom_topology(cm);
    const auto c = zipf_catalog(100, 0.8, 1.0);
    const auto reqs = irm_stream(c, topo, 4e4, derive_seed(5, "cap", trial));
    const auto small = run(topo, reqs, config(lru(), UpdateRule::Blind, 5, 100, 4e4, trial));
    const auto big = run(topo, reqs, config(lru(), UpdateRule::Blind, 10, 100, 4e4, trial));
    CHECK(big.hit_ratio() >= small.hit_ratio() - 3 * (small.stderr_hit + big.stderr_hit));
  }
}

TEST_CASE("warmup options") {
  const auto topo = single_cell();
  Catalog c;
  c.lambda = {1.0, 1.0};
  const auto reqs = irm_stream(c, topo, 100.0, 2);
  SUBCASE("by count") {
    auto cfg = config(lru(), UpdateRule::Blind, 1, 2, 100.0);
    cfg.warmup_requests = 10;
    const auto m = run(topo, reqs, cfg);
    CHECK(m.requests == reqs.size() - 10);
  }
  SUBCASE("by time wins over count") {
    auto cfg = config(lru(), UpdateRule::Blind, 1, 2, 100.0);
    cfg.warmup_requests = 10;
    cfg.warmup_time = 50.0;
    const auto m = run(topo, reqs, cfg);
    const auto expected = std::count_if(reqs.begin(), reqs.end(), [](const Request& r) { return r.time >= 50.0; });
    CHECK(m.requests == static_cast<std::uint64_t>(expected));
  }
  SUBCASE("no warmup") {
    auto cfg = config(lru(), UpdateRule::Blind, 1, 2, 100.0);
    cfg.warmup_fraction = 0.0;
    CHECK(run(topo, reqs, cfg).requests == reqs.size());
  }
  SUBCASE("warmup past the horizon") {
    auto cfg = config(lru(), UpdateRule::Blind, 1, 2, 100.0);
    cfg.warmup_time = 200.0;
    CHECK_THROWS_AS(run(topo, reqs, cfg), ParameterError);
  }
}

TEST_CASE("bad streams") {
  const auto topo = testing::two_cell_topology();
  std::vector<Request> reqs = {{1.0, 0, 0b01, 0}, {0.5, 0, 0b01, 0}};
  CHECK_THROWS_AS(run(topo, reqs, config(lru(), UpdateRule::Blind, 1, 2, 2.0)), ProtocolError);
  reqs = {{1.0, 0, 0b100, 0}};
  CHECK_THROWS_AS(run(topo, reqs, config(lru(), UpdateRule::Blind, 1, 2, 2.0)), ProtocolError);
}

TEST_CASE("lazy qlru on a full-overlap trefoil spreads the catalog") {
  // With q small the three caches converge to disjoint sets, as the static
  // optimum for d = B puts one copy of each of the top 3C contents.
  const auto topo = build_trefoil(3, 3);
  const int F = 100, C = 30;
  const auto c = zipf_catalog(F, 0.8, 1.0);
  const double horizon = 3e7;
  auto cfg = config(qlru(0.001), UpdateRule::Lazy, C, F, horizon, 3);
  IrmStream stream(c, topo, horizon, 17);
  const auto m = run(topo, stream, cfg);
  std::set<ContentId> all;
  for (int a = 0; a < 3; ++a) {
    all.insert(m.final_contents[a].begin(), m.final_contents[a].end());
    for (int b = a + 1; b < 3; ++b) {
      std::vector<ContentId> x = m.final_contents[a], y = m.final_contents[b], common;
      std::sort(x.begin(), x.end());
      std::sort(y.begin(), y.end());
      std::set_intersection(x.begin(), x.end(), y.begin(), y.end(), std::back_inserter(common));
      CHECK(common.size() <= 2);
    }
  }
  const auto g = greedy(topo, c, C);
  std::set<ContentId> greedy_set;
  for (int b = 0; b < 3; ++b) greedy_set.insert(g.cache(b).begin(), g.cache(b).end());
  REQUIRE(greedy_set.size() == 90);
  std::size_t shared = 0;
  for (auto f : all) shared += greedy_set.count(f);
  CHECK(shared >= 80);
}

TEST_CASE("timer network") {
  const auto topo = build_trefoil(3, 3);
  Catalog c;
  c.lambda = {1.0};
  SUBCASE("rare requests never hit") {
    std::vector<Request> reqs;
    for (int i = 0; i < 100; ++i) reqs.push_back({2.0 * i, 0, 0b111, 0});
    TimerConfig tc;
    tc.T = {1.0};
    tc.content_count = 1;
    tc.horizon = 200.0;
    VectorStream s(reqs);
    CHECK(run_timer_experiment(topo, s, tc).hits == 0);
  }
  SUBCASE("frequent requests with renewal always hit") {
    std::vector<Request> reqs;
    for (int i = 0; i < 1000; ++i) reqs.push_back({0.1 * i, 0, 0b111, 0});
    TimerConfig tc;
    tc.T = {1.0};
    tc.renew_on_hit = true;
    tc.content_count = 1;
    tc.horizon = 100.0;
    VectorStream s(reqs);
    const auto m = run_timer_experiment(topo, s, tc);
    CHECK(m.hits == m.requests);
  }
  SUBCASE("timer means must match the caches") {
    TimerConfig tc;
    tc.T = {1.0, 2.0};
    tc.content_count = 1;
    tc.horizon = 1.0;
    VectorStream s({});
    CHECK_THROWS_AS(run_timer_experiment(topo, s, tc), ParameterError);
  }
}
