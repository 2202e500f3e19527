#include <doctest.h>

#include <cmath>
#include <numeric>

#include "cellcache/analytic.hpp"
#include "cellcache/errors.hpp"
#include "cellcache/symmetry.hpp"
#include "support.hpp"

using namespace cellcache;
using testing::choose;

namespace {

// Plain bisection on T for sum_f g(lambda_f, T) = C, g increasing in T.
template <class G>
double bisect_T(G&& g, double C) {
  double lo = 1e-12, hi = 1.0;
  while (g(hi) < C) hi *= 2;
  for (int i = 0; i < 200; ++i) {
    const double mid = std::sqrt(lo * hi);
    (g(mid) < C ? lo : hi) = mid;
  }
  return std::sqrt(lo * hi);
}

SolveOptions tight(int C) {
  SolveOptions o;
  o.tol = 1e-9 * C;
  return o;
}

Catalog uniform_weights(int F, double total) {
  Catalog c;
  c.lambda.assign(F, 1.0);
  c.total_rate = total;
  return c;
}

}  // namespace

TEST_CASE("sojourn and insertion rates") {
  CHECK(sojourn_rate(PolicyKind::LRU, 1e-12, 2.0) == doctest::Approx(0.5));
  CHECK(sojourn_rate(PolicyKind::LRU, 0.0, 2.0) == doctest::Approx(0.5));
  CHECK(sojourn_rate(PolicyKind::LRU, 2.0, std::log(2.0) / 2.0) == doctest::Approx(2.0));
  CHECK(sojourn_rate(PolicyKind::qLRU, 2.0, std::log(2.0) / 2.0) == doctest::Approx(2.0));
  for (double L : {0.0, 0.1, 10.0}) {
    CHECK(sojourn_rate(PolicyKind::FIFO, L, 4.0) == doctest::Approx(0.25));
    CHECK(sojourn_rate(PolicyKind::RANDOM, L, 4.0) == doctest::Approx(0.25));
  }
  CHECK_THROWS_AS(sojourn_rate(PolicyKind::LRU, 1.0, 0.0), ParameterError);

  CHECK(insertion_rate(qlru(1.0), 3.0) == 3.0);
  CHECK(insertion_rate(qlru(0.0), 3.0) == 0.0);
  CHECK(insertion_rate(qlru(0.01), 7.0 / 8.0) == doctest::Approx(0.00875));
  CHECK(insertion_rate(fifo(), 3.0) == 3.0);
}

TEST_CASE("rule rates on two overlapping cells") {
  const auto cm = testing::two_cells();
  CHECK(rule_rate(UpdateRule::Blind, cm, 1.0, 0, 0b11) == doctest::Approx(7.0 / 8));
  CHECK(rule_rate(UpdateRule::Blind, cm, 1.0, 0, 0b00) == doctest::Approx(7.0 / 8));
  CHECK(rule_rate(UpdateRule::Blind, cm, 1.0, 0, 0b10) == doctest::Approx(3.0 / 4));
  CHECK(rule_rate(UpdateRule::Blind, cm, 1.0, 0, 0b01) == doctest::Approx(1.0));
  CHECK(rule_rate(UpdateRule::Lazy, cm, 1.0, 0, 0b11) == doctest::Approx(3.0 / 4));
  for (BsSet H = 0; H < 4; ++H) CHECK(rule_rate(UpdateRule::All, cm, 1.0, 0, H) == doctest::Approx(1.0));
  CHECK(rule_rate(UpdateRule::Lazy, cm, 2.0, 0, 0b01) == doctest::Approx(2.0));
}

TEST_CASE("property: rule rates") {
  Rng rng(5);
  for (int trial = 0; trial < 60; ++trial) {
    const int B = 1 + static_cast<int>(uniform_index(rng, 5));
    const auto cm = testing::random_map(rng, B);
    const double M = cm.total_mass();
    for (BsSet H = 0; H <= full_set(B); ++H) {
      double hit_share = 0.0, miss_share = 0.0;
      for (int b = 0; b < B; ++b) {
        const double lazy = rule_mass(UpdateRule::Lazy, cm, b, H);
        const double all = rule_mass(UpdateRule::All, cm, b, H);
        CHECK(lazy <= all + 1e-12);
        const bool shared = marginal_measure(cm, b, H & ~bit(b)) < cm.cell_mass(b) - 1e-12;
        CHECK((std::fabs(lazy - all) <= 1e-12) == !shared);
        if (contains(H, b)) hit_share += rule_mass(UpdateRule::Blind, cm, b, H);
        else miss_share += rule_mass(UpdateRule::Blind, cm, b, H);
      }
      // A miss comes from an atom with no holder, so it always lands on a non-holder.
      CHECK(hit_share == doctest::Approx(union_measure(cm, H)).epsilon(1e-12));
      CHECK(miss_share == doctest::Approx(M - union_measure(cm, H)).epsilon(1e-12));
      for (int b = 0; b < B; ++b) {
        if (H == bit(b)) CHECK(rule_mass(UpdateRule::Lazy, cm, b, H) == doctest::Approx(cm.cell_mass(b)));
      }
    }
  }
}

TEST_CASE("single-cache chain") {
  const auto cm = CoverageMap(1, {{0b1, 2.0, {}}});
  const double lambda = 0.7, T = 1.3;
  for (auto p : {lru(), qlru(0.2), fifo(), random_policy()}) {
    const std::vector<double> Ts = {T};
    const auto chain = build_chain(cm, UpdateRule::Blind, p, lambda, Ts);
    const auto pi = stationary(chain);
    const double L = lambda * 2.0;
    const double r = insertion_rate(p, L) / sojourn_rate(p.kind, L, T);
    CHECK(pi[1] == doctest::Approx(r / (1 + r)).epsilon(1e-12));
    CHECK(check_reversibility(chain).reversible);
  }
  const std::vector<double> Ts = {T};
  const auto pi = stationary(build_chain(cm, UpdateRule::Blind, lru(), lambda, Ts));
  CHECK(pi[1] == doctest::Approx(1 - std::exp(-lambda * 2.0 * T)).epsilon(1e-12));
}

TEST_CASE("stationary solver") {
  SUBCASE("symmetric two-state chain") {
    ContentChain c;
    c.n = 2;
    c.add(0, 1, 3.0);
    c.add(1, 0, 3.0);
    const auto pi = stationary(c);
    CHECK(pi[0] == doctest::Approx(0.5));
    CHECK(pi[1] == doctest::Approx(0.5));
    const auto Q = c.generator();
    CHECK(Q[0] == -3.0);
    CHECK(Q[0] + Q[1] == 0.0);
  }
  SUBCASE("birth-death chains have product form") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t n = 2 + uniform_index(rng, 30);
      ContentChain c;
      c.n = n;
      std::vector<double> up(n), down(n);
      for (std::size_t i = 0; i + 1 < n; ++i) {
        up[i] = 0.1 + 5 * uniform01(rng);
        down[i + 1] = 0.1 + 5 * uniform01(rng);
        c.add(i, i + 1, up[i]);
        c.add(i + 1, i, down[i + 1]);
      }
      std::vector<double> w(n, 1.0);
      for (std::size_t i = 1; i < n; ++i) w[i] = w[i - 1] * up[i - 1] / down[i];
      const double z = std::accumulate(w.begin(), w.end(), 0.0);
      const auto pi = stationary(c);
      for (std::size_t i = 0; i < n; ++i) CHECK(pi[i] == doctest::Approx(w[i] / z).epsilon(1e-10));
      CHECK(stationary_residual(c, pi) < 1e-12);
    }
  }
  SUBCASE("large chains use the iterative path") {
    // Cycle with a shortcut: 5000 states, not reversible.
    ContentChain c;
    c.n = 5000;
    for (std::size_t i = 0; i < c.n; ++i) c.add(i, (i + 1) % c.n, 1.0 + (i % 7));
    c.add(10, 0, 2.0);
    const auto pi = stationary(c);
    CHECK(std::accumulate(pi.begin(), pi.end(), 0.0) == doctest::Approx(1.0));
    CHECK(stationary_residual(c, pi) < 1e-12);
  }
  SUBCASE("reducible chain") {
    ContentChain c;
    c.n = 3;
    c.add(0, 1, 1.0);
    c.add(1, 0, 1.0);
    CHECK_THROWS_AS(stationary(c), SolverError);
  }
}

TEST_CASE("reversibility") {
  SUBCASE("trefoil chains satisfy detailed balance") {
    for (int d = 1; d <= 3; ++d) {
      const auto t = build_trefoil(3, d);
      const std::vector<double> T = {2.0, 2.0, 2.0};
      for (auto rule : {UpdateRule::Blind, UpdateRule::Lazy, UpdateRule::One, UpdateRule::All}) {
        for (auto p : {fifo(), lru(), qlru(0.1)}) {
          const auto chain = build_chain(t.coverage, rule, p, 1.5, T);
          const auto rep = check_reversibility(chain);
          CHECK(rep.reversible);
          CHECK(rep.max_violation < 1e-10);
        }
      }
    }
  }
  SUBCASE("asymmetric cells break it under blind FIFO") {
    const double m0 = 0.5, m1 = 1.0, m01 = 0.4;
    const CoverageMap cm(2, {{0b01, m0, {}}, {0b10, m1, {}}, {0b11, m01, {}}});
    const std::vector<double> T = {1.0, 1.0};
    const auto chain = build_chain(cm, UpdateRule::Blind, fifo(), 1.0, T);
    // Kolmogorov's criterion on the only cycle 00 -> 01 -> 11 -> 10 -> 00.
    const double forward = (m0 + m01 / 2) * m1;
    const double backward = (m1 + m01 / 2) * m0;
    REQUIRE(std::fabs(forward / backward - 1) > 0.1);
    const auto rep = check_reversibility(chain);
    CHECK_FALSE(rep.reversible);
    CHECK(rep.max_violation > 1e-3);
  }
  SUBCASE("one cell is always reversible") {
    const auto cm = CoverageMap(1, {{0b1, 1.0, {}}});
    const std::vector<double> T = {0.3};
    CHECK(check_reversibility(build_chain(cm, UpdateRule::Lazy, fifo(), 2.0, T)).reversible);
  }
}

TEST_CASE("chain size cap") {
  Rng rng(1);
  const auto cm = testing::random_map(rng, 15);
  const std::vector<double> T(15, 1.0);
  CHECK_THROWS_AS(build_chain(cm, UpdateRule::Blind, lru(), 1.0, T), CapacityError);
}

TEST_CASE("single cache network is the Che approximation") {
  const int F = 1000, C = 100;
  const auto topo = make_custom_topology(CoverageMap(1, {{0b1, 1.0, {}}}));
  const auto c = zipf_catalog(F, 0.8, 1.0);
  const auto lambda = per_mass_rates(c, 1.0);
  const auto sol = solve_network(topo, c, lru(), UpdateRule::Blind, C, tight(C));
  const double T = bisect_T(
      [&](double t) {
        double s = 0.0;
        for (double l : lambda) s += -std::expm1(-l * t);
        return s;
      },
      C);
  CHECK(sol.T[0] == doctest::Approx(T).epsilon(1e-6));
  double sum = 0.0, hit = 0.0;
  for (int f = 0; f < F; ++f) {
    CHECK(sol.h[f][0] == doctest::Approx(-std::expm1(-lambda[f] * sol.T[0])).epsilon(1e-9));
    sum += sol.h[f][0];
    hit += lambda[f] * sol.h[f][0];
  }
  CHECK(std::fabs(sum - C) < 1e-6);
  CHECK(sol.hit_ratio == doctest::Approx(hit).epsilon(1e-9));
}

TEST_CASE("disjoint cells decouple") {
  const int B = 4, F = 200, C = 20;
  const auto topo = build_trefoil(B, 1);
  const auto c = zipf_catalog(F, 0.8, 1.0);
  for (auto p : {lru(), fifo(), qlru(0.1)}) {
    const auto net = solve_network(topo, c, p, UpdateRule::Blind, C, tight(C));
    // One isolated cell carries a quarter of the mass and a quarter of the traffic.
    const auto one = make_custom_topology(CoverageMap(1, {{0b1, 0.25, {}}}));
    Catalog quarter = c;
    quarter.total_rate = 0.25;
    const auto single = solve_network(one, quarter, p, UpdateRule::Blind, C, tight(C));
    CHECK(net.hit_ratio == doctest::Approx(single.hit_ratio).epsilon(1e-7));
    for (int b = 0; b < B; ++b) CHECK(net.T[b] == doctest::Approx(single.T[0]).epsilon(1e-6));
  }
}

TEST_CASE("property: occupancy meets the buffer constraint") {
  Rng rng(41);
  for (int trial = 0; trial < 12; ++trial) {
    const int B = 1 + static_cast<int>(uniform_index(rng, 4));
    const auto topo = make_custom_topology(testing::random_map(rng, B));
    const int F = 30 + static_cast<int>(uniform_index(rng, 40));
    const int C = 1 + static_cast<int>(uniform_index(rng, 5));
    const auto c = zipf_catalog(F, 0.5 + uniform01(rng), 1.0);
    const UpdateRule rules[] = {UpdateRule::Blind, UpdateRule::One, UpdateRule::All, UpdateRule::Lazy};
    const PolicySpec policies[] = {lru(), fifo(), qlru(0.05), random_policy()};
    const auto rule = rules[trial % 4];
    const auto p = policies[(trial / 4) % 4];
    SolveOptions o;
    const auto sol = solve_network(topo, c, p, rule, C, o);
    for (int b = 0; b < B; ++b) {
      double sum = 0.0;
      for (int f = 0; f < F; ++f) {
        CHECK(sol.h[f][b] >= 0.0);
        CHECK(sol.h[f][b] <= 1.0);
        sum += sol.h[f][b];
      }
      CHECK(std::fabs(sum - C) <= 1e-4 * C);
      CHECK(sol.occupancy[b] == doctest::Approx(sum));
    }
    CHECK(sol.hit_ratio > 0.0);
    CHECK(sol.hit_ratio < 1.0);
  }
}

TEST_CASE("symmetry lumping does not change the answer") {
  const auto topo = build_torus(2, 0.65, 128);
  const auto c = zipf_catalog(100, 0.8, 1.0);
  auto with = tight(10);
  auto without = tight(10);
  without.use_symmetry = false;
  for (auto rule : {UpdateRule::Blind, UpdateRule::Lazy}) {
    const auto a = solve_network(topo, c, qlru(0.1), rule, 10, with);
    const auto b = solve_network(topo, c, qlru(0.1), rule, 10, without);
    CHECK(a.lumped_states < b.lumped_states);
    CHECK(a.hit_ratio == doctest::Approx(b.hit_ratio).epsilon(1e-7));
    for (int k = 0; k < 4; ++k) CHECK(a.T[k] == doctest::Approx(b.T[k]).epsilon(1e-5));
  }
}

TEST_CASE("trefoil birth-death solution") {
  SUBCASE("marginals never grow with the copy count") {
    const auto c = zipf_catalog(100, 0.8, 1.0);
    for (int B = 2; B <= 8; ++B) {
      for (int d = 1; d < B; ++d) {
        const auto s = solve_trefoil(B, d, c, lru(), UpdateRule::Lazy, 5);
        for (int k = 1; k < B; ++k) {
          // Linear for d = 1, strictly concave while positive otherwise.
          if (d > 1 && s.delta[k - 1] > 0.0) CHECK(s.delta[k] < s.delta[k - 1]);
          else CHECK(s.delta[k] <= s.delta[k - 1] * (1 + 1e-12));
        }
        for (int k = 1; k <= B; ++k) {
          CHECK(s.delta[k - 1] == doctest::Approx(choose(B - k, d - 1) / choose(B, d)).epsilon(1e-12));
        }
      }
    }
  }
  SUBCASE("copy distribution is normalized and meets the buffer constraint") {
    const auto c = zipf_catalog(300, 0.8, 1.0);
    const auto s = solve_trefoil(6, 3, c, qlru(0.05), UpdateRule::Blind, 20, 1e-8);
    double copies = 0.0;
    for (const auto& p : s.pi) {
      CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0));
      for (int k = 0; k <= 6; ++k) copies += k * p[k];
    }
    CHECK(std::fabs(copies - 20 * 6) < 1e-6);
  }
  SUBCASE("full overlap with equal rates places one copy each") {
    // B = d = 2, F = 2C, equal popularity: the optimum keeps every content once.
    const auto s = solve_trefoil(2, 2, uniform_weights(10, 1.0), qlru(1e-3), UpdateRule::Lazy, 5, 1e-9);
    for (const auto& p : s.pi) CHECK(p[1] > 0.9);
  }
  SUBCASE("agrees with the full network solver") {
    const auto c = zipf_catalog(200, 0.8, 1.0);
    for (int B : {2, 3, 5, 8}) {
      for (int d : {1, B / 2 + 1, B}) {
        const auto topo = build_trefoil(B, d);
        for (auto rule : {UpdateRule::Blind, UpdateRule::One, UpdateRule::All, UpdateRule::Lazy}) {
          for (auto p : {lru(), fifo(), qlru(0.02)}) {
            const int C = 10;
            const auto t = solve_trefoil(B, d, c, p, rule, C, 1e-10 * C);
            const auto n = solve_network(topo, c, p, rule, C, tight(C));
            CHECK(t.hit_ratio == doctest::Approx(n.hit_ratio).epsilon(1e-6));
            CHECK(std::fabs(t.hit_ratio - n.hit_ratio) < 1e-6);
            CHECK(t.T == doctest::Approx(n.T[0]).epsilon(1e-5));
          }
        }
      }
    }
  }
  SUBCASE("parameter checks") {
    const auto c = zipf_catalog(20, 0.8, 1.0);
    CHECK_THROWS_AS(solve_trefoil(3, 4, c, lru(), UpdateRule::Lazy, 2), ParameterError);
    CHECK_THROWS_AS(solve_trefoil(3, 2, c, lru(), UpdateRule::Lazy, 20), ParameterError);
    CHECK_THROWS_AS(solve_trefoil(3, 2, c, klru(2), UpdateRule::Lazy, 2), ParameterError);
  }
}

TEST_CASE("two-stage LRU") {
  SUBCASE("single cache matches the two-stage Che recursion") {
    const int F = 500, C = 50;
    const auto topo = make_custom_topology(CoverageMap(1, {{0b1, 1.0, {}}}));
    const auto c = zipf_catalog(F, 0.8, 1.0);
    const auto lambda = per_mass_rates(c, 1.0);
    const double T1 = bisect_T(
        [&](double t) {
          double s = 0.0;
          for (double l : lambda) s += -std::expm1(-l * t);
          return s;
        },
        C);
    std::vector<double> h1(F);
    for (int f = 0; f < F; ++f) h1[f] = -std::expm1(-lambda[f] * T1);
    auto data = [&](int f, double t) {
      const double e = -std::expm1(-lambda[f] * t);
      return h1[f] * e / (std::exp(-lambda[f] * t) + h1[f] * e);
    };
    const double T2 = bisect_T(
        [&](double t) {
          double s = 0.0;
          for (int f = 0; f < F; ++f) s += data(f, t);
          return s;
        },
        C);
    double hit = 0.0;
    for (int f = 0; f < F; ++f) hit += lambda[f] * data(f, T2);

    const auto sol = solve_klru(topo, c, UpdateRule::Blind, C, klru(2), tight(C));
    CHECK(sol.T[0] == doctest::Approx(T2).epsilon(1e-6));
    CHECK(sol.T_meta[0][0] == doctest::Approx(T1).epsilon(1e-6));
    CHECK(sol.hit_ratio == doctest::Approx(hit).epsilon(1e-7));
  }
  SUBCASE("an unbounded metadata stage is plain LRU") {
    const auto topo = build_trefoil(3, 2);
    const auto c = zipf_catalog(100, 0.8, 1.0);
    auto p = klru(2);
    p.stage_capacities = {100};
    for (auto rule : {UpdateRule::Blind, UpdateRule::Lazy}) {
      const auto k = solve_klru(topo, c, rule, 10, p, tight(10));
      const auto l = solve_network(topo, c, lru(), rule, 10, tight(10));
      CHECK(k.hit_ratio == doctest::Approx(l.hit_ratio).epsilon(1e-7));
    }
  }
  SUBCASE("dispatch through solve_network") {
    const auto topo = build_trefoil(3, 2);
    const auto c = zipf_catalog(100, 0.8, 1.0);
    const auto a = solve_network(topo, c, klru(2), UpdateRule::Lazy, 10);
    const auto b = solve_klru(topo, c, UpdateRule::Lazy, 10);
    CHECK(a.hit_ratio == b.hit_ratio);
  }
}

TEST_CASE("on-off model") {
  const auto topo = build_trefoil(3, 2);
  const auto base = zipf_catalog(100, 0.8, 1.0);
  const int C = 10;
  const auto irm = solve_network(topo, base, lru(), UpdateRule::Blind, C, tight(C));
  SUBCASE("vanishing off periods") {
    Catalog c = base;
    c.onoff = OnOff{1.0, 1e-10};
    const auto s = solve_onoff(topo, c, lru(), UpdateRule::Blind, C, tight(C));
    CHECK(std::fabs(s.hit_ratio - irm.hit_ratio) < 1e-6);
  }
  SUBCASE("endless on periods") {
    Catalog c = base;
    c.onoff = OnOff{1e10, 1.0};
    const auto s = solve_onoff(topo, c, lru(), UpdateRule::Blind, C, tight(C));
    CHECK(std::fabs(s.hit_ratio - irm.hit_ratio) < 1e-6);
  }
  SUBCASE("short lifetimes hurt") {
    Catalog c = base;
    c.onoff = OnOff{5.0, 10.0};
    const auto s = solve_onoff(topo, c, lru(), UpdateRule::Blind, C);
    CHECK(s.hit_ratio > 0.0);
    CHECK(s.hit_ratio < irm.hit_ratio);
  }
  SUBCASE("needs parameters") { CHECK_THROWS_AS(solve_onoff(topo, base, lru(), UpdateRule::Blind, C), ConfigError); }
}

TEST_CASE("solver errors") {
  const auto topo = build_trefoil(3, 2);
  const auto c = zipf_catalog(20, 0.8, 1.0);
  CHECK_THROWS_AS(solve_network(topo, c, lru(), UpdateRule::Blind, 20), ParameterError);
  CHECK_THROWS_AS(solve_network(topo, c, lru(), UpdateRule::Blind, 0), ParameterError);
  SolveOptions o;
  o.max_iter = 1;
  o.tol = 1e-14;
  o.use_symmetry = false;
  const auto asym = make_custom_topology(CoverageMap(2, {{0b01, 0.3, {}}, {0b10, 1.0, {}}, {0b11, 0.8, {}}}));
  CHECK_THROWS_AS(solve_network(asym, c, lru(), UpdateRule::Lazy, 5, o), ConvergenceError);
}

TEST_CASE("model json") {
  const auto topo = build_trefoil(3, 2);
  const auto c = zipf_catalog(20, 0.8, 1.0);
  const auto s = solve_network(topo, c, lru(), UpdateRule::Blind, 3);
  const nlohmann::json j = s;
  CHECK(j.at("hit_ratio").get<double>() == s.hit_ratio);
  CHECK(j.at("per_cache").size() == 3);
}

TEST_CASE("joint state distributions") {
  const auto c = zipf_catalog(50, 0.8, 1.0);
  SUBCASE("single cache") {
    const auto topo = make_custom_topology(CoverageMap(1, {{0b1, 1.0, {}}}));
    const auto sol = solve_network(topo, c, qlru(0.1), UpdateRule::Lazy, 5, tight(5));
    const auto pi = state_distributions(topo, c, qlru(0.1), UpdateRule::Lazy, sol);
    REQUIRE(pi.size() == 50);
    for (std::size_t f = 0; f < pi.size(); ++f) {
      REQUIRE(pi[f].size() == 2);
      CHECK(pi[f][1] == doctest::Approx(sol.h[f][0]).epsilon(1e-9));
    }
  }
  SUBCASE("rows are distributions whose marginals are the occupancies") {
    const auto topo = testing::two_cell_topology();
    for (auto rule : {UpdateRule::One, UpdateRule::Blind, UpdateRule::Lazy}) {
      const auto sol = solve_network(topo, c, lru(), rule, 5, tight(5));
      const auto pi = state_distributions(topo, c, lru(), rule, sol);
      for (std::size_t f = 0; f < pi.size(); ++f) {
        CHECK(std::accumulate(pi[f].begin(), pi[f].end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
        for (int b = 0; b < 2; ++b) {
          double m = 0.0;
          for (std::size_t x = 0; x < pi[f].size(); ++x)
            if ((x >> b) & 1) m += pi[f][x];
          CHECK(m == doctest::Approx(sol.h[f][b]).epsilon(1e-9));
        }
      }
    }
  }
  SUBCASE("unsupported policies") {
    const auto topo = testing::two_cell_topology();
    const auto sol = solve_network(topo, c, lru(), UpdateRule::Blind, 5, tight(5));
    CHECK_THROWS_AS(state_distributions(topo, c, klru(2), UpdateRule::Blind, sol), ParameterError);
  }
}
