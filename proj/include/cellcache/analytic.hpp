#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "cellcache/geometry.hpp"
#include "cellcache/policy.hpp"
#include "cellcache/simulator.hpp"
#include "cellcache/workload.hpp"

namespace cellcache {

// nu(Lambda, T): mean rate at which a stored content leaves the cache.
double sojourn_rate(PolicyKind policy, double Lambda, double T);
// alpha(Lambda): rate at which a missing content enters the cache.
double insertion_rate(const PolicySpec& policy, double Lambda, int b = 0);

// Request mass (rate per unit lambda_f) that updates cache b when the holders
// of the content are `holders`. Blind: hit share if b holds, miss share
// otherwise. Lazy: mass of S_b not covered by the other holders.
double rule_mass(UpdateRule rule, const CoverageMap& cm, int b, BsSet holders);
double rule_rate(UpdateRule rule, const CoverageMap& cm, double lambda, int b, BsSet holders);

// Mass of requests that can insert the content at a non-holder b. For Lazy
// this is the miss share routed to b: a miss can only be served by one BS,
// so the other covering non-holders never see it.
double insertion_request_mass(UpdateRule rule, const CoverageMap& cm, int b, BsSet holders);

struct ContentChain {
  std::size_t n = 0;
  int bs_count = 0;  // > 0 when states are occupancy vectors over B caches
  std::vector<std::uint32_t> from, to;
  std::vector<double> rate;

  void add(std::size_t i, std::size_t j, double r);
  // Dense row-major generator; rows sum to zero.
  std::vector<double> generator() const;
};

// Full 2^B chain of one content. T holds one characteristic time per cache.
ContentChain build_chain(const CoverageMap& cm, UpdateRule rule, const PolicySpec& policy, double lambda,
                         std::span<const double> T, int max_bs = 14);

// GTH elimination for n <= 4096, Gauss-Seidel above.
std::vector<double> stationary(const ContentChain& chain);
double stationary_residual(const ContentChain& chain, std::span<const double> pi);

struct ReversibilityReport {
  bool reversible = false;
  double max_violation = 0.0;  // max |pi_i q_ij - pi_j q_ji| / max(pi_i q_ij, pi_j q_ji)
};

ReversibilityReport check_reversibility(const ContentChain& chain, double tol = 1e-10);
ReversibilityReport check_reversibility(const ContentChain& chain, std::span<const double> pi,
                                        double tol = 1e-10);

struct SolveOptions {
  double tol = 0.0;   // on max_b |occupancy_b - C|; 0 means 1e-4 * C
  int max_iter = 200;
  int bins = 0;       // > 0: group contents into this many rate classes
  bool use_symmetry = true;
  int max_bs = 14;    // cap on B for non-factorized chains without symmetry
};

struct ModelSolution {
  std::vector<double> T;                   // data-stage characteristic time per cache
  std::vector<std::vector<double>> T_meta; // kLRU metadata stages, [stage][b]
  std::vector<std::vector<double>> h;      // h[f][b]
  std::vector<double> occupancy;           // sum_f h[f][b]
  double hit_ratio = 0.0;
  int iterations = 0;
  int evaluations = 0;
  double residual = 0.0;
  int lumped_states = 0;
};

void to_json(nlohmann::json& j, const ModelSolution& s);

ModelSolution solve_network(const Topology& topology, const Catalog& catalog, const PolicySpec& policy,
                            UpdateRule rule, int C, const SolveOptions& options = {});

// Two-stage (or k-stage) LRU; metadata stages see the same update verdicts as
// the data stage.
ModelSolution solve_klru(const Topology& topology, const Catalog& catalog, UpdateRule rule, int C,
                         const PolicySpec& policy = klru(2), const SolveOptions& options = {});

ModelSolution solve_onoff(const Topology& topology, const Catalog& catalog, const PolicySpec& policy,
                          UpdateRule rule, int C, const SolveOptions& options = {});

// Per-content stationary distribution over the 2^B holder sets at the
// characteristic times of `solution`.
std::vector<std::vector<double>> state_distributions(const Topology& topology, const Catalog& catalog,
                                                     const PolicySpec& policy, UpdateRule rule,
                                                     const ModelSolution& solution);

struct TrefoilSolution {
  int bs_count = 0;
  int d = 0;
  double T = 0.0;
  std::vector<std::vector<double>> pi;     // pi[f][k], k = 0..B copies
  std::vector<std::vector<double>> log_A;  // log A[f][k], the T- and q-free part of the product form
  std::vector<double> delta;               // marginal mass of the k-th copy, k = 1..B (index k-1)
  double hit_ratio = 0.0;
  double copies = 0.0;                     // sum_f sum_k k pi[f][k]
  int evaluations = 0;
  double residual = 0.0;
};

void to_json(nlohmann::json& j, const TrefoilSolution& s);

// Birth-death chain on the number of copies; total mass M of the trefoil.
TrefoilSolution solve_trefoil(int B, int d, const Catalog& catalog, const PolicySpec& policy,
                              UpdateRule rule, int C, double tol = 0.0, double M = 1.0);

}  // namespace cellcache
