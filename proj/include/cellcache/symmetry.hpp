#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cellcache/geometry.hpp"

namespace cellcache {

// Permutations of BS labels that map every atom onto an atom of equal mass
// and equal reference split (and preserve per-cell weights such as q
// exponents). Only a generating set is kept.
struct Symmetry {
  int bs_count = 0;
  std::vector<std::vector<int>> generators;  // generators[g][b] = image of b
  std::vector<int> bs_orbit;                 // orbit index per BS
  int orbit_count = 0;
  bool complete = true;  // false if the search hit its node limit

  std::vector<std::vector<int>> orbits() const;
};

Symmetry find_symmetry(const CoverageMap& cm, std::span<const double> cell_weights = {},
                       std::size_t node_limit = 200000);

BsSet permute(BsSet set, const std::vector<int>& perm);

// Orbits of the occupancy vectors {0..2^B-1} under the group. orbit_of[x] is
// the orbit index; representatives are the smallest member, listed in
// increasing order so that the empty set is orbit 0.
struct StateOrbits {
  std::vector<std::uint32_t> orbit_of;
  std::vector<BsSet> rep;
  std::vector<std::uint32_t> size;
};

StateOrbits state_orbits(const Symmetry& sym);

}  // namespace cellcache
