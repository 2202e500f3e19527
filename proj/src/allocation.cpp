#include "cellcache/allocation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>

#include "cellcache/errors.hpp"
#include "cellcache/simulator.hpp"

namespace cellcache {

Allocation::Allocation(int bs_count, std::size_t content_count) : F_(content_count), cache_(bs_count) {
  if (bs_count < 1) throw ParameterError("allocation needs at least one cache");
}

bool Allocation::has(int b, ContentId f) const {
  const auto& c = cache_.at(b);
  return std::binary_search(c.begin(), c.end(), f);
}

void Allocation::add(int b, ContentId f) {
  if (f >= F_) throw ParameterError("content id outside the catalog");
  auto& c = cache_.at(b);
  auto it = std::lower_bound(c.begin(), c.end(), f);
  if (it != c.end() && *it == f) throw ParameterError("content already cached");
  c.insert(it, f);
}

void Allocation::remove(int b, ContentId f) {
  auto& c = cache_.at(b);
  auto it = std::lower_bound(c.begin(), c.end(), f);
  if (it == c.end() || *it != f) throw ParameterError("content not cached");
  c.erase(it);
}

std::vector<BsSet> Allocation::holders() const {
  std::vector<BsSet> h(F_, 0);
  for (int b = 0; b < bs_count(); ++b) {
    for (auto f : cache_[b]) h[f] |= bit(b);
  }
  return h;
}

void Allocation::validate(int C) const {
  for (int b = 0; b < bs_count(); ++b) {
    if (static_cast<int>(cache_[b].size()) != C) {
      throw ParameterError("cache " + std::to_string(b) + " holds " + std::to_string(cache_[b].size()) +
                           " contents, expected " + std::to_string(C));
    }
  }
}

nlohmann::json allocation_to_json(const Allocation& a) {
  nlohmann::json j = nlohmann::json::object();
  for (int b = 0; b < a.bs_count(); ++b) j[std::to_string(b)] = a.cache(b);
  return j;
}

Allocation allocation_from_json(const nlohmann::json& j, std::size_t content_count) {
  int B = 0;
  for (const auto& [key, value] : j.items()) B = std::max(B, std::stoi(key) + 1);
  Allocation a(B, content_count);
  for (const auto& [key, value] : j.items()) {
    for (auto f : value.get<std::vector<ContentId>>()) a.add(std::stoi(key), f);
  }
  return a;
}

namespace {

// mu(union) lookup: a table for small B, atom scans otherwise.
class UnionMeasure {
 public:
  explicit UnionMeasure(const CoverageMap& cm) : cm_(cm) {
    if (cm.bs_count() <= 16) table_ = union_table(cm);
  }
  double operator()(BsSet s) const { return table_.empty() ? union_measure(cm_, s) : table_[s]; }
  double gain(int b, BsSet h) const { return (*this)(h | bit(b)) - (*this)(h); }

 private:
  const CoverageMap& cm_;
  std::vector<double> table_;
};

void check_sizes(const CoverageMap& cm, std::span<const double> lambda, int C) {
  if (cm.bs_count() < 1) throw DegenerateTopologyError("no base station");
  if (C < 0) throw ParameterError("C must be >= 0");
  if (static_cast<std::size_t>(C) > lambda.size()) throw ParameterError("C exceeds the catalog size");
  for (double l : lambda) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw ParameterError("rates must be finite and >= 0");
  }
}

// Every atom covered by exactly d cells with equal mass, one atom per
// d-subset: the union measure depends only on the number of cells.
bool symmetric_coverage(const CoverageMap& cm) {
  const auto atoms = cm.atoms();
  if (atoms.empty()) return false;
  const int B = cm.bs_count(), d = size_of(atoms.front().mask);
  double subsets = 1.0;
  for (int i = 1; i <= d; ++i) subsets = subsets * (B - d + i) / i;
  if (static_cast<double>(atoms.size()) != subsets) return false;
  const double m = atoms.front().mass;
  for (const auto& a : atoms) {
    if (size_of(a.mask) != d || std::fabs(a.mass - m) > 1e-12 * m) return false;
  }
  return true;
}

// Symmetric cells: the value of a placement depends only on copy counts, so
// pick the B*C largest marginals lambda_f * delta(k) (a knapsack with unit
// items) and lay the copies out cyclically, which keeps them on distinct caches.
GreedyResult knapsack_trace(const CoverageMap& cm, std::span<const double> lambda, int C) {
  const int B = cm.bs_count();
  const std::size_t F = lambda.size();
  std::vector<double> delta(B);
  for (int k = 1; k <= B; ++k) delta[k - 1] = union_measure(cm, full_set(k)) - union_measure(cm, full_set(k - 1));
  struct Item {
    double value;
    ContentId f;
    int k;
  };
  std::vector<Item> items;
  items.reserve(F * B);
  for (std::size_t f = 0; f < F; ++f) {
    for (int k = 1; k <= B; ++k) items.push_back({lambda[f] * delta[k - 1], static_cast<ContentId>(f), k});
  }
  // delta is non-increasing, so the copies of a content are taken in order.
  std::stable_sort(items.begin(), items.end(), [](const Item& x, const Item& y) {
    if (x.value != y.value) return x.value > y.value;
    if (x.f != y.f) return x.f < y.f;
    return x.k < y.k;
  });
  std::vector<int> copies(F, 0);
  GreedyResult out{Allocation(B, F), {}};
  const std::size_t take = static_cast<std::size_t>(B) * C;
  for (std::size_t i = 0; i < take; ++i) {
    ++copies[items[i].f];
    out.values.push_back(items[i].value);
  }
  int pos = 0;
  for (std::size_t f = 0; f < F; ++f) {
    for (int j = 0; j < copies[f]; ++j) {
      out.allocation.add(pos, static_cast<ContentId>(f));
      pos = (pos + 1) % B;
    }
  }
  return out;
}

}  // namespace

GreedyResult greedy_trace(const CoverageMap& cm, std::span<const double> lambda, int C) {
  check_sizes(cm, lambda, C);
  const int B = cm.bs_count();
  const std::size_t F = lambda.size();
  if (C == 0) return {Allocation(B, F), {}};
  if (B > 1 && symmetric_coverage(cm)) return knapsack_trace(cm, lambda, C);
  UnionMeasure U(cm);
  GreedyResult out{Allocation(B, F), {}};

  struct Entry {
    double value;
    ContentId f;
    int b;
    std::uint32_t version;
  };
  // Largest value first, then lowest f, then lowest b.
  auto after = [](const Entry& x, const Entry& y) {
    if (x.value != y.value) return x.value < y.value;
    if (x.f != y.f) return x.f > y.f;
    return x.b > y.b;
  };
  std::priority_queue<Entry, std::vector<Entry>, decltype(after)> pq(after);
  std::vector<BsSet> holders(F, 0);
  std::vector<std::uint32_t> version(F, 0);
  std::vector<int> room(B, C);
  int open = B;
  for (std::size_t f = 0; f < F; ++f) {
    for (int b = 0; b < B; ++b) pq.push({lambda[f] * U.gain(b, 0), static_cast<ContentId>(f), b, 0});
  }
  // Values only shrink as holders grow, so a stale entry is an upper bound.
  while (open > 0 && !pq.empty()) {
    Entry e = pq.top();
    pq.pop();
    if (room[e.b] == 0 || contains(holders[e.f], e.b)) continue;
    if (e.version != version[e.f]) {
      e.value = lambda[e.f] * U.gain(e.b, holders[e.f]);
      e.version = version[e.f];
      pq.push(e);
      continue;
    }
    out.allocation.add(e.b, e.f);
    out.values.push_back(e.value);
    holders[e.f] |= bit(e.b);
    ++version[e.f];
    if (--room[e.b] == 0) --open;
  }
  return out;
}

Allocation greedy(const CoverageMap& cm, std::span<const double> lambda, int C) {
  return greedy_trace(cm, lambda, C).allocation;
}

Allocation greedy(const Topology& topology, const Catalog& catalog, int C) {
  const auto lambda = per_mass_rates(catalog, topology.coverage.total_mass());
  return greedy(topology.coverage, lambda, C);
}

HitRate hit_rate(const Allocation& a, const CoverageMap& cm, std::span<const double> lambda) {
  if (a.content_count() != lambda.size()) throw ParameterError("allocation and catalog sizes differ");
  if (a.bs_count() != cm.bs_count()) throw ParameterError("allocation and topology sizes differ");
  UnionMeasure U(cm);
  const auto holders = a.holders();
  HitRate h;
  double total = 0.0;
  for (std::size_t f = 0; f < lambda.size(); ++f) {
    if (holders[f]) h.rate += lambda[f] * U(holders[f]);
    total += lambda[f];
  }
  total *= cm.total_mass();
  h.normalized = total > 0.0 ? h.rate / total : 0.0;
  return h;
}

HitRate hit_rate(const Allocation& a, const Topology& topology, const Catalog& catalog) {
  const auto lambda = per_mass_rates(catalog, topology.coverage.total_mass());
  return hit_rate(a, topology.coverage, lambda);
}

Allocation exhaustive_optimal(const CoverageMap& cm, std::span<const double> lambda, int C) {
  check_sizes(cm, lambda, C);
  const int B = cm.bs_count();
  const int F = static_cast<int>(lambda.size());
  if (F > 31) throw CapacityError("exhaustive search: catalog too large");
  // All C-subsets of the catalog as bitmasks, in lexicographic order.
  std::vector<std::uint32_t> subsets;
  std::vector<int> idx(C);
  std::iota(idx.begin(), idx.end(), 0);
  double count = 1.0;
  for (int i = 1; i <= C; ++i) count = count * (F - C + i) / i;
  if (std::pow(count, B) > 1e7 + 0.5) throw CapacityError("exhaustive search: more than 1e7 allocations");
  while (true) {
    std::uint32_t m = 0;
    for (int i : idx) m |= 1u << i;
    subsets.push_back(m);
    int i = C - 1;
    while (i >= 0 && idx[i] == F - C + i) --i;
    if (i < 0) break;
    ++idx[i];
    for (int k = i + 1; k < C; ++k) idx[k] = idx[k - 1] + 1;
  }
  UnionMeasure U(cm);
  std::vector<BsSet> holders(F, 0);
  std::vector<std::size_t> choice(B, 0), best_choice(B, 0);
  double best = -1.0;

  auto dfs = [&](auto&& self, int b, double value) -> void {
    if (b == B) {
      if (value > best) {
        best = value;
        best_choice = choice;
      }
      return;
    }
    for (std::size_t s = 0; s < subsets.size(); ++s) {
      double v = value;
      for (std::uint32_t m = subsets[s]; m; m &= m - 1) {
        const int f = std::countr_zero(m);
        v += lambda[f] * U.gain(b, holders[f]);
        holders[f] |= bit(b);
      }
      choice[b] = s;
      self(self, b + 1, v);
      for (std::uint32_t m = subsets[s]; m; m &= m - 1) holders[std::countr_zero(m)] &= ~bit(b);
    }
  };
  dfs(dfs, 0, 0.0);

  Allocation a(B, F);
  for (int b = 0; b < B; ++b) {
    for (std::uint32_t m = subsets[best_choice[b]]; m; m &= m - 1) a.add(b, std::countr_zero(m));
  }
  return a;
}

LocalOptimality is_locally_optimal(const Allocation& a, const CoverageMap& cm, std::span<const double> lambda,
                                   double tol) {
  if (a.content_count() != lambda.size()) throw ParameterError("allocation and catalog sizes differ");
  UnionMeasure U(cm);
  const auto holders = a.holders();
  LocalOptimality r;
  for (int b = 0; b < a.bs_count(); ++b) {
    for (auto out : a.cache(b)) {
      const double loss = lambda[out] * (U(holders[out]) - U(holders[out] & ~bit(b)));
      for (std::size_t in = 0; in < lambda.size(); ++in) {
        if (contains(holders[in], b)) continue;
        const double gain = lambda[in] * U.gain(b, holders[in]) - loss;
        if (gain > r.best_gain) {
          r.best_gain = gain;
          if (gain > tol) r.best = Swap{b, out, static_cast<ContentId>(in), gain};
        }
      }
    }
  }
  r.optimal = !r.best.has_value();
  return r;
}

Allocation limiting_allocation(const std::vector<std::vector<double>>& h, std::span<const double> lambda, int C) {
  const std::size_t F = h.size();
  if (F == 0 || F != lambda.size()) throw ParameterError("occupancy and catalog sizes differ");
  const int B = static_cast<int>(h.front().size());
  if (C < 0 || static_cast<std::size_t>(C) > F) throw ParameterError("C out of range");
  Allocation a(B, F);
  std::vector<ContentId> order(F);
  for (int b = 0; b < B; ++b) {
    std::iota(order.begin(), order.end(), ContentId{0});
    std::stable_sort(order.begin(), order.end(), [&](ContentId x, ContentId y) {
      if (h[x][b] != h[y][b]) return h[x][b] > h[y][b];
      return lambda[x] > lambda[y];
    });
    for (int i = 0; i < C; ++i) a.add(b, order[i]);
  }
  return a;
}

Allocation most_likely_allocation(const std::vector<std::vector<double>>& pi, int bs_count, int C) {
  const std::size_t F = pi.size();
  if (bs_count < 1 || bs_count > 16) throw ParameterError("bs_count out of range");
  if (C < 0 || static_cast<std::size_t>(C) > F) throw ParameterError("C out of range");
  const std::size_t S = std::size_t{1} << bs_count;
  const std::size_t base = static_cast<std::size_t>(C) + 1;
  double codes = std::pow(static_cast<double>(base), bs_count);
  if (codes * static_cast<double>(S) * static_cast<double>(F) > 2e8) {
    throw CapacityError("joint allocation search too large");
  }
  const std::size_t N = static_cast<std::size_t>(codes);
  std::vector<std::size_t> stride(bs_count, 1);
  for (int b = 1; b < bs_count; ++b) stride[b] = stride[b - 1] * base;

  // Remaining-capacity vectors are encoded in base C+1; add() returns N when
  // state s does not fit.
  auto add = [&](std::size_t code, std::size_t s) {
    std::size_t out = code;
    for (int b = 0; b < bs_count; ++b) {
      if (!((s >> b) & 1)) continue;
      if ((code / stride[b]) % base == static_cast<std::size_t>(C)) return N;
      out += stride[b];
    }
    return out;
  };

  constexpr double kNone = -HUGE_VAL;
  std::vector<double> score(N, kNone), next(N);
  std::vector<std::vector<std::uint16_t>> choice(F, std::vector<std::uint16_t>(N, 0));
  score[0] = 0.0;
  for (std::size_t f = 0; f < F; ++f) {
    if (pi[f].size() != S) throw ParameterError("state distribution size differs from 2^B");
    std::fill(next.begin(), next.end(), kNone);
    for (std::size_t code = 0; code < N; ++code) {
      if (score[code] == kNone) continue;
      for (std::size_t s = 0; s < S; ++s) {
        const std::size_t to = add(code, s);
        if (to == N) continue;
        const double v = score[code] + std::log(std::max(pi[f][s], 1e-300));
        if (v > next[to]) {
          next[to] = v;
          choice[f][to] = static_cast<std::uint16_t>(s);
        }
      }
    }
    score.swap(next);
  }
  std::size_t code = N - 1;  // every cache full
  if (score[code] == kNone) throw ParameterError("no allocation fills every cache");
  Allocation a(bs_count, F);
  for (std::size_t f = F; f-- > 0;) {
    const std::size_t s = choice[f][code];
    for (int b = 0; b < bs_count; ++b) {
      if ((s >> b) & 1) {
        a.add(b, static_cast<ContentId>(f));
        code -= stride[b];
      }
    }
  }
  return a;
}

DailyResult daily_workflow(std::span<const Request> trace, double window, DailyMode mode,
                           const Topology& topology, int C, std::size_t content_count, std::uint64_t seed) {
  if (!(window > 0.0)) throw ParameterError("window length must be positive");
  if (trace.empty()) throw ParameterError("empty trace");
  const double M = topology.coverage.total_mass();
  std::size_t F = content_count;
  for (const auto& r : trace) F = std::max<std::size_t>(F, r.content + std::size_t{1});
  const int W = std::max(1, static_cast<int>(std::ceil(trace.back().time / window)));
  if (mode == DailyMode::Forecast && W < 2) throw ParameterError("forecast needs at least two windows");

  auto slice = [&](int w) {
    const double t0 = w * window, t1 = (w + 1) * window;
    auto lo = std::lower_bound(trace.begin(), trace.end(), t0, [](const Request& r, double t) { return r.time < t; });
    auto hi = std::lower_bound(lo, trace.end(), t1, [](const Request& r, double t) { return r.time < t; });
    if (w == W - 1) hi = trace.end();
    return trace.subspan(lo - trace.begin(), hi - lo);
  };

  DailyResult out;
  Allocation previous(topology.bs_count, F);
  bool have_previous = false;
  for (int w = 0; w < W; ++w) {
    DailyWindow dw;
    dw.index = w;
    dw.t0 = w * window;
    dw.t1 = (w + 1) * window;
    const auto target = slice(w);
    const Catalog target_rates = estimate_rates(target, dw.t0, std::max(dw.t1, target.empty() ? dw.t1 : target.back().time + 1e-12), M, F);

    if (mode == DailyMode::Oracle) {
      if (target_rates.empty_window && have_previous) {
        dw.allocation = previous;
        dw.reused = true;
      } else {
        dw.allocation = greedy(topology.coverage, target_rates.lambda, C);
      }
    } else if (w == 0) {
      dw.allocation = Allocation(topology.bs_count, F);
    } else {
      const auto source = slice(w - 1);
      const Catalog source_rates = estimate_rates(source, (w - 1) * window, w * window, M, F);
      if (source_rates.empty_window && have_previous) {
        dw.allocation = previous;
        dw.reused = true;
      } else {
        dw.allocation = greedy(topology.coverage, source_rates.lambda, C);
      }
    }
    if (!(mode == DailyMode::Forecast && w == 0)) {
      previous = dw.allocation;
      have_previous = true;
    }

    dw.analytic = hit_rate(dw.allocation, topology.coverage, target_rates.lambda).normalized;
    if (!target.empty()) {
      SimConfig cfg;
      cfg.content_count = F;
      cfg.warmup_fraction = 0.0;
      cfg.horizon = dw.t1;
      cfg.seed = derive_seed(seed, "daily", w);
      cfg.static_holders = dw.allocation.holders();
      const SimMetrics m = run(topology, target, cfg);
      dw.requests = m.requests;
      dw.hits = m.hits;
    }
    out.requests += dw.requests;
    out.hits += dw.hits;
    out.windows.push_back(std::move(dw));
  }
  return out;
}

}  // namespace cellcache
