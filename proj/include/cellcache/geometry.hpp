#pragma once

#include <bit>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace cellcache {

// Set of base stations as a bitmask; bit b is BS b (0-based).
using BsSet = std::uint32_t;
inline constexpr int kMaxBs = 32;

inline bool contains(BsSet set, int b) { return (set >> b) & 1u; }
inline BsSet bit(int b) { return BsSet{1} << b; }
inline int size_of(BsSet set) { return std::popcount(set); }
inline BsSet full_set(int bs_count) {
  return bs_count >= kMaxBs ? ~BsSet{0} : (BsSet{1} << bs_count) - 1;
}

struct Point {
  double x = 0.0;
  double y = 0.0;
};

// A maximal region whose points share the same covering set.
struct Atom {
  BsSet mask = 0;
  double mass = 0.0;
  // Share of the atom's users whose reference (nearest) BS is each member of
  // `mask`, listed in ascending BS order. Empty means a uniform split.
  std::vector<double> ref;

  double ref_share(int b) const;
};

class CoverageMap {
 public:
  CoverageMap() = default;
  // Atoms with an identical mask are merged; zero-mass atoms are dropped.
  CoverageMap(int bs_count, std::vector<Atom> atoms);

  int bs_count() const { return bs_count_; }
  std::span<const Atom> atoms() const { return atoms_; }
  double total_mass() const { return total_mass_; }
  const Atom* find(BsSet mask) const;

  // mu(S_b)
  double cell_mass(int b) const;
  // Mass of users whose reference BS is b.
  double reference_mass(int b) const;

 private:
  int bs_count_ = 0;
  std::vector<Atom> atoms_;
  double total_mass_ = 0.0;
};

// mu of the union of the cells in `set`.
double union_measure(const CoverageMap& cm, BsSet set);

// mu(S_b \ union of cells in holders). Throws ParameterError if b is in holders.
double marginal_measure(const CoverageMap& cm, int b, BsSet holders);

// union_measure for every subset of {0..B-1}, indexed by mask. B <= 24.
std::vector<double> union_table(const CoverageMap& cm);

enum class TopologyKind { Trefoil, Torus, Points, Custom };

std::string to_string(TopologyKind kind);

struct Region {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 1.0;
  double y1 = 1.0;
};

struct Topology {
  TopologyKind kind = TopologyKind::Custom;
  int bs_count = 0;
  std::vector<Point> bs_positions;  // empty for the abstract trefoil
  double radius = 0.0;
  bool wraparound = false;
  double side = 0.0;   // torus side length
  int coverage_d = 0;  // trefoil only
  CoverageMap coverage;

  bool has_geometry() const { return !bs_positions.empty() && radius > 0.0; }
  double distance2(Point p, int b) const;
  // Covering set of a point; 0 when no cell covers it.
  BsSet cover(Point p) const;
  // Closest BS center, ties to the lowest id.
  int nearest(Point p) const;
};

// Every user is covered by exactly d of the B cells; each d-subset carries
// mass M / C(B, d).
Topology build_trefoil(int bs_count, int d, double mass = 1.0);

// n x n base stations on a unit-spaced grid wrapped onto an n x n torus.
// Atom masses come from a row-major grid of sample points (unit user density).
// The per-axis resolution is rounded up to a multiple of n so that the sample
// grid shares the torus symmetries.
Topology build_torus(int n, double radius, int resolution = 512);

// Arbitrary BS positions, equal radii, sampled over `region` (unit density).
Topology build_points(std::vector<Point> positions, double radius, Region region,
                      int resolution = 512);

Topology make_custom_topology(CoverageMap coverage);

void to_json(nlohmann::json& j, const Topology& topo);
void from_json(const nlohmann::json& j, Topology& topo);

}  // namespace cellcache
