#pragma once

// Shared fixtures and hand-rolled generators for the test suites.

#include <cmath>
#include <vector>

#include "cellcache/geometry.hpp"
#include "cellcache/random.hpp"

namespace testing {

using namespace cellcache;

// Two unit-area cells overlapping on a quarter: {0}:3/4, {1}:3/4, {0,1}:1/4.
inline CoverageMap two_cells() {
  return CoverageMap(2, {{0b01, 0.75, {}}, {0b10, 0.75, {}}, {0b11, 0.25, {}}});
}

inline Topology two_cell_topology() { return make_custom_topology(two_cells()); }

// Random atoms over B cells; every cell gets some mass of its own.
inline CoverageMap random_map(Rng& rng, int B) {
  std::vector<Atom> atoms;
  for (BsSet m = 1; m <= full_set(B); ++m) {
    if (size_of(m) == 1 || uniform01(rng) < 0.4) atoms.push_back({m, 0.05 + uniform01(rng), {}});
  }
  return CoverageMap(B, std::move(atoms));
}

inline std::vector<double> random_rates(Rng& rng, int F) {
  std::vector<double> l(F);
  for (auto& x : l) x = 0.01 + uniform01(rng);
  return l;
}

inline double choose(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double r = 1.0;
  for (int i = 0; i < k; ++i) r = r * (n - i) / (i + 1);
  return r;
}

}  // namespace testing
