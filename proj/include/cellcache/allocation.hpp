#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cellcache/geometry.hpp"
#include "cellcache/workload.hpp"

namespace cellcache {

// Static placement x[b][f]; each cache keeps its content ids sorted.
class Allocation {
 public:
  Allocation() = default;
  Allocation(int bs_count, std::size_t content_count);

  int bs_count() const { return static_cast<int>(cache_.size()); }
  std::size_t content_count() const { return F_; }
  const std::vector<ContentId>& cache(int b) const { return cache_.at(b); }
  bool has(int b, ContentId f) const;
  void add(int b, ContentId f);
  void remove(int b, ContentId f);
  // Holder set of every content.
  std::vector<BsSet> holders() const;
  // Throws unless every cache holds exactly C distinct valid ids.
  void validate(int C) const;

  bool operator==(const Allocation& o) const { return F_ == o.F_ && cache_ == o.cache_; }

 private:
  std::size_t F_ = 0;
  std::vector<std::vector<ContentId>> cache_;
};

// {"0": [ids], "1": [ids], ...}
nlohmann::json allocation_to_json(const Allocation& a);
Allocation allocation_from_json(const nlohmann::json& j, std::size_t content_count);

struct GreedyResult {
  Allocation allocation;
  std::vector<double> values;  // marginal value of each pick, in order
};

// lambda: per-unit-mass rates.
GreedyResult greedy_trace(const CoverageMap& cm, std::span<const double> lambda, int C);
Allocation greedy(const CoverageMap& cm, std::span<const double> lambda, int C);
Allocation greedy(const Topology& topology, const Catalog& catalog, int C);

struct HitRate {
  double rate = 0.0;        // sum_f lambda_f mu(union of holders)
  double normalized = 0.0;  // divided by sum_f lambda_f M
};

HitRate hit_rate(const Allocation& a, const CoverageMap& cm, std::span<const double> lambda);
HitRate hit_rate(const Allocation& a, const Topology& topology, const Catalog& catalog);

// Brute force over all C-subsets of every cache; C(F, C)^B <= 1e7.
Allocation exhaustive_optimal(const CoverageMap& cm, std::span<const double> lambda, int C);

struct Swap {
  int bs = -1;
  ContentId out = 0;
  ContentId in = 0;
  double gain = 0.0;
};

struct LocalOptimality {
  bool optimal = true;
  std::optional<Swap> best;    // best improving swap when not optimal
  double best_gain = -HUGE_VAL;  // over all swaps, improving or not
};

LocalOptimality is_locally_optimal(const Allocation& a, const CoverageMap& cm, std::span<const double> lambda,
                                   double tol = 1e-12);

// Rounds occupancy probabilities h[f][b] to a placement: the C most likely
// contents of every cache, ties going to the more popular content.
Allocation limiting_allocation(const std::vector<std::vector<double>>& h, std::span<const double> lambda, int C);

// Most probable placement that fills every cache, treating contents as
// independent with joint-state distributions pi[f][x] over the 2^B holder sets.
// Small instances only: (C+1)^B * 2^B * F <= 2e8.
Allocation most_likely_allocation(const std::vector<std::vector<double>>& pi, int bs_count, int C);

enum class DailyMode { Oracle, Forecast };

struct DailyWindow {
  int index = 0;
  double t0 = 0.0;
  double t1 = 0.0;
  std::uint64_t requests = 0;
  std::uint64_t hits = 0;
  double analytic = 0.0;  // normalized hit rate of the allocation under the window's own rates
  bool reused = false;    // source window empty, previous placement kept
  Allocation allocation;

  double hit_ratio() const { return requests ? static_cast<double>(hits) / requests : 0.0; }
};

struct DailyResult {
  std::vector<DailyWindow> windows;
  std::uint64_t requests = 0;
  std::uint64_t hits = 0;
  double hit_ratio() const { return requests ? static_cast<double>(hits) / requests : 0.0; }
};

// Oracle: greedy on the target window's rates. Forecast: greedy on the
// previous window's rates; the first window starts from empty caches.
DailyResult daily_workflow(std::span<const Request> trace, double window, DailyMode mode,
                           const Topology& topology, int C, std::size_t content_count, std::uint64_t seed);

}  // namespace cellcache
