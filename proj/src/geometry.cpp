#include "cellcache/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <unordered_map>

#include "cellcache/errors.hpp"

namespace cellcache {

namespace {

double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return std::round(r);
}

struct AtomAccumulator {
  double count = 0.0;
  std::vector<double> ref;  // per BS id, length B
};

// Collapse per-sample covering sets into atoms.
CoverageMap make_map(int bs_count, const std::unordered_map<BsSet, AtomAccumulator>& acc,
                     double sample_area) {
  std::vector<BsSet> masks;
  masks.reserve(acc.size());
  for (const auto& [mask, a] : acc) masks.push_back(mask);
  std::sort(masks.begin(), masks.end());

  std::vector<Atom> atoms;
  atoms.reserve(masks.size());
  for (BsSet mask : masks) {
    const auto& a = acc.at(mask);
    Atom atom;
    atom.mask = mask;
    atom.mass = a.count * sample_area;
    for (int b = 0; b < bs_count; ++b) {
      if (contains(mask, b)) atom.ref.push_back(a.ref[b] / a.count);
    }
    atoms.push_back(std::move(atom));
  }
  return CoverageMap(bs_count, std::move(atoms));
}

}  // namespace

double Atom::ref_share(int b) const {
  if (!contains(mask, b)) return 0.0;
  if (ref.empty()) return 1.0 / size_of(mask);
  const int idx = std::popcount(mask & (bit(b) - 1));
  return ref[idx];
}

CoverageMap::CoverageMap(int bs_count, std::vector<Atom> atoms) : bs_count_(bs_count) {
  if (bs_count < 1 || bs_count > kMaxBs) {
    throw ParameterError("bs_count must be in [1, 32], got " + std::to_string(bs_count));
  }
  const BsSet all = full_set(bs_count);
  std::map<BsSet, Atom> merged;
  for (auto& a : atoms) {
    if (a.mask == 0) throw ParameterError("atom with empty covering set");
    if ((a.mask & ~all) != 0) throw ParameterError("atom mask references unknown BS");
    if (!(a.mass >= 0.0) || !std::isfinite(a.mass)) throw ParameterError("atom mass must be finite and >= 0");
    if (!a.ref.empty() && static_cast<int>(a.ref.size()) != size_of(a.mask)) {
      throw ParameterError("atom ref weights must have one entry per covering BS");
    }
    if (a.mass == 0.0) continue;
    auto it = merged.find(a.mask);
    if (it == merged.end()) {
      merged.emplace(a.mask, std::move(a));
      continue;
    }
    // Mass-weighted merge of the reference split.
    Atom& m = it->second;
    const int k = size_of(m.mask);
    std::vector<double> ref(k);
    const double total = m.mass + a.mass;
    int idx = 0;
    for (int b = 0; b < bs_count; ++b) {
      if (!contains(m.mask, b)) continue;
      ref[idx++] = (m.ref_share(b) * m.mass + a.ref_share(b) * a.mass) / total;
    }
    m.ref = std::move(ref);
    m.mass = total;
  }
  atoms_.reserve(merged.size());
  for (auto& [mask, a] : merged) {
    total_mass_ += a.mass;
    atoms_.push_back(std::move(a));
  }
}

const Atom* CoverageMap::find(BsSet mask) const {
  auto it = std::lower_bound(atoms_.begin(), atoms_.end(), mask,
                             [](const Atom& a, BsSet m) { return a.mask < m; });
  if (it != atoms_.end() && it->mask == mask) return &*it;
  return nullptr;
}

double CoverageMap::cell_mass(int b) const { return union_measure(*this, bit(b)); }

double CoverageMap::reference_mass(int b) const {
  double m = 0.0;
  for (const auto& a : atoms_) m += a.mass * a.ref_share(b);
  return m;
}

double union_measure(const CoverageMap& cm, BsSet set) {
  double m = 0.0;
  for (const auto& a : cm.atoms()) {
    if (a.mask & set) m += a.mass;
  }
  return m;
}

double marginal_measure(const CoverageMap& cm, int b, BsSet holders) {
  if (b < 0 || b >= cm.bs_count()) throw ParameterError("BS id out of range");
  if (contains(holders, b)) throw ParameterError("marginal_measure: b already holds the content");
  double m = 0.0;
  for (const auto& a : cm.atoms()) {
    if (contains(a.mask, b) && (a.mask & holders) == 0) m += a.mass;
  }
  return m;
}

std::vector<double> union_table(const CoverageMap& cm) {
  const int bs = cm.bs_count();
  if (bs > 24) throw CapacityError("union_table supports at most 24 base stations");
  const std::size_t n = std::size_t{1} << bs;
  // inside[S] = mass of atoms whose covering set is a subset of S.
  std::vector<double> inside(n, 0.0);
  for (const auto& a : cm.atoms()) inside[a.mask] += a.mass;
  for (int b = 0; b < bs; ++b) {
    for (std::size_t s = 0; s < n; ++s) {
      if (s & (std::size_t{1} << b)) inside[s] += inside[s ^ (std::size_t{1} << b)];
    }
  }
  std::vector<double> table(n);
  const std::size_t all = n - 1;
  for (std::size_t s = 0; s < n; ++s) table[s] = cm.total_mass() - inside[all & ~s];
  table[0] = 0.0;
  return table;
}

std::string to_string(TopologyKind kind) {
  switch (kind) {
    case TopologyKind::Trefoil: return "trefoil";
    case TopologyKind::Torus: return "torus";
    case TopologyKind::Points: return "points";
    case TopologyKind::Custom: return "custom";
  }
  return "custom";
}

double Topology::distance2(Point p, int b) const {
  double dx = std::abs(p.x - bs_positions[b].x);
  double dy = std::abs(p.y - bs_positions[b].y);
  if (wraparound) {
    dx = std::fmod(dx, side);
    dy = std::fmod(dy, side);
    dx = std::min(dx, side - dx);
    dy = std::min(dy, side - dy);
  }
  return dx * dx + dy * dy;
}

BsSet Topology::cover(Point p) const {
  if (!has_geometry()) throw ConfigError("topology '" + to_string(kind) + "' has no planar geometry");
  const double r2 = radius * radius;
  BsSet mask = 0;
  for (int b = 0; b < bs_count; ++b) {
    if (distance2(p, b) <= r2) mask |= bit(b);
  }
  return mask;
}

int Topology::nearest(Point p) const {
  if (!has_geometry()) throw ConfigError("topology '" + to_string(kind) + "' has no planar geometry");
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int b = 0; b < bs_count; ++b) {
    const double d = distance2(p, b);
    if (d < best_d) {
      best_d = d;
      best = b;
    }
  }
  return best;
}

Topology build_trefoil(int bs_count, int d, double mass) {
  if (bs_count < 1 || bs_count > kMaxBs) throw ParameterError("trefoil: B must be in [1, 32]");
  if (d < 1 || d > bs_count) {
    throw ParameterError("trefoil: coverage d=" + std::to_string(d) + " out of range [1, " +
                         std::to_string(bs_count) + "]");
  }
  if (!(mass > 0.0)) throw ParameterError("trefoil: mass must be positive");
  const double n_atoms = binomial(bs_count, d);
  if (n_atoms > 2e6) throw CapacityError("trefoil: too many atoms");
  const double atom_mass = mass / n_atoms;

  std::vector<Atom> atoms;
  atoms.reserve(static_cast<std::size_t>(n_atoms));
  // Enumerate d-subsets in lexicographic mask order (Gosper's hack).
  BsSet s = full_set(d);
  const BsSet limit = full_set(bs_count);
  while (true) {
    atoms.push_back(Atom{s, atom_mass, {}});
    if (d == bs_count) break;
    const BsSet c = s & (~s + 1);
    const BsSet r = s + c;
    if (r == 0 || r > limit) break;
    s = (((r ^ s) >> 2) / c) | r;
    if (s > limit) break;
  }

  Topology t;
  t.kind = TopologyKind::Trefoil;
  t.bs_count = bs_count;
  t.coverage_d = d;
  t.coverage = CoverageMap(bs_count, std::move(atoms));
  return t;
}

Topology build_torus(int n, double radius, int resolution) {
  if (n < 1 || n * n > kMaxBs) throw ParameterError("torus: n must satisfy 1 <= n*n <= 32");
  if (!(radius > 0.0)) throw ParameterError("torus: radius must be positive");
  if (resolution < 64) throw ParameterError("torus: resolution must be >= 64");
  const int per_unit = (resolution + n - 1) / n;
  const int res = per_unit * n;
  const int bs_count = n * n;

  // Integer half-sample coordinates: sample i sits at 2i+1, BS column c at
  // (2c+1)*per_unit, period 2*res. Squared distances are exact integers.
  const std::int64_t period = 2LL * res;
  const double r_half = radius * 2.0 * per_unit;
  const double r2 = r_half * r_half;
  std::vector<std::int64_t> bs_coord(n);
  for (int c = 0; c < n; ++c) bs_coord[c] = static_cast<std::int64_t>(2 * c + 1) * per_unit;

  auto wrap = [period](std::int64_t d) {
    d = d < 0 ? -d : d;
    d %= period;
    return std::min(d, period - d);
  };

  // Squared distance from each sample column/row to each BS column/row.
  std::vector<std::int64_t> d2(static_cast<std::size_t>(res) * n);
  for (int i = 0; i < res; ++i) {
    for (int c = 0; c < n; ++c) {
      const std::int64_t d = wrap(2LL * i + 1 - bs_coord[c]);
      d2[static_cast<std::size_t>(i) * n + c] = d * d;
    }
  }

  std::unordered_map<BsSet, AtomAccumulator> acc;
  for (int iy = 0; iy < res; ++iy) {
    for (int ix = 0; ix < res; ++ix) {
      BsSet mask = 0;
      std::int64_t best = std::numeric_limits<std::int64_t>::max();
      for (int r = 0; r < n; ++r) {
        const std::int64_t dy = d2[static_cast<std::size_t>(iy) * n + r];
        for (int c = 0; c < n; ++c) {
          const std::int64_t dd = dy + d2[static_cast<std::size_t>(ix) * n + c];
          if (static_cast<double>(dd) <= r2) {
            mask |= bit(r * n + c);
            best = std::min(best, dd);
          }
        }
      }
      if (mask == 0) continue;
      auto& a = acc[mask];
      if (a.ref.empty()) a.ref.assign(bs_count, 0.0);
      a.count += 1.0;
      // Equidistant nearest BSs share the sample.
      int ties = 0;
      for (int b = 0; b < bs_count; ++b) {
        if (!contains(mask, b)) continue;
        const std::int64_t dd = d2[static_cast<std::size_t>(iy) * n + b / n] +
                                d2[static_cast<std::size_t>(ix) * n + b % n];
        if (dd == best) ++ties;
      }
      for (int b = 0; b < bs_count; ++b) {
        if (!contains(mask, b)) continue;
        const std::int64_t dd = d2[static_cast<std::size_t>(iy) * n + b / n] +
                                d2[static_cast<std::size_t>(ix) * n + b % n];
        if (dd == best) a.ref[b] += 1.0 / ties;
      }
    }
  }
  if (acc.empty()) throw DegenerateTopologyError("torus: no sample is covered");

  const double sample_area = static_cast<double>(n) * n / (static_cast<double>(res) * res);
  Topology t;
  t.kind = TopologyKind::Torus;
  t.bs_count = bs_count;
  t.radius = radius;
  t.wraparound = true;
  t.side = n;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) t.bs_positions.push_back({c + 0.5, r + 0.5});
  }
  t.coverage = make_map(bs_count, acc, sample_area);
  return t;
}

Topology build_points(std::vector<Point> positions, double radius, Region region, int resolution) {
  if (positions.empty()) throw ParameterError("points: at least one BS position is required");
  if (static_cast<int>(positions.size()) > kMaxBs) throw ParameterError("points: at most 32 BSs");
  if (!(radius > 0.0)) throw ParameterError("points: radius must be positive");
  if (!(region.x1 > region.x0) || !(region.y1 > region.y0)) throw ParameterError("points: empty region");
  if (resolution < 2) throw ParameterError("points: resolution must be >= 2");
  const bool any_inside = std::any_of(positions.begin(), positions.end(), [&](Point p) {
    return p.x >= region.x0 && p.x <= region.x1 && p.y >= region.y0 && p.y <= region.y1;
  });
  if (!any_inside) throw ParameterError("points: no BS inside the region");

  Topology t;
  t.kind = TopologyKind::Points;
  t.bs_count = static_cast<int>(positions.size());
  t.bs_positions = std::move(positions);
  t.radius = radius;

  const double hx = (region.x1 - region.x0) / resolution;
  const double hy = (region.y1 - region.y0) / resolution;
  const double r2 = radius * radius;
  std::unordered_map<BsSet, AtomAccumulator> acc;
  std::vector<double> dist(t.bs_count);
  for (int iy = 0; iy < resolution; ++iy) {
    const double y = region.y0 + (iy + 0.5) * hy;
    for (int ix = 0; ix < resolution; ++ix) {
      const Point p{region.x0 + (ix + 0.5) * hx, y};
      BsSet mask = 0;
      double best = std::numeric_limits<double>::infinity();
      for (int b = 0; b < t.bs_count; ++b) {
        dist[b] = t.distance2(p, b);
        if (dist[b] <= r2) {
          mask |= bit(b);
          best = std::min(best, dist[b]);
        }
      }
      if (mask == 0) continue;
      auto& a = acc[mask];
      if (a.ref.empty()) a.ref.assign(t.bs_count, 0.0);
      a.count += 1.0;
      int ties = 0;
      for (int b = 0; b < t.bs_count; ++b) ties += contains(mask, b) && dist[b] == best;
      for (int b = 0; b < t.bs_count; ++b) {
        if (contains(mask, b) && dist[b] == best) a.ref[b] += 1.0 / ties;
      }
    }
  }
  if (acc.empty()) throw DegenerateTopologyError("points: no sample inside the region is covered");
  t.coverage = make_map(t.bs_count, acc, hx * hy);
  return t;
}

Topology make_custom_topology(CoverageMap coverage) {
  Topology t;
  t.kind = TopologyKind::Custom;
  t.bs_count = coverage.bs_count();
  t.coverage = std::move(coverage);
  return t;
}

void to_json(nlohmann::json& j, const Topology& topo) {
  j = nlohmann::json::object();
  j["kind"] = to_string(topo.kind);
  j["bs_count"] = topo.bs_count;
  auto bs = nlohmann::json::array();
  for (const auto& p : topo.bs_positions) bs.push_back({p.x, p.y});
  j["bs"] = bs;
  j["radius"] = topo.radius;
  j["wrap"] = topo.wraparound;
  if (topo.wraparound) j["side"] = topo.side;
  if (topo.kind == TopologyKind::Trefoil) j["d"] = topo.coverage_d;
  auto atoms = nlohmann::json::array();
  for (const auto& a : topo.coverage.atoms()) {
    nlohmann::json ja = {{"mask", a.mask}, {"mass", a.mass}};
    if (!a.ref.empty()) ja["ref"] = a.ref;
    atoms.push_back(std::move(ja));
  }
  j["atoms"] = atoms;
}

void from_json(const nlohmann::json& j, Topology& topo) {
  const std::string kind = j.value("kind", std::string("custom"));
  if (kind == "trefoil") topo.kind = TopologyKind::Trefoil;
  else if (kind == "torus") topo.kind = TopologyKind::Torus;
  else if (kind == "points") topo.kind = TopologyKind::Points;
  else if (kind == "custom") topo.kind = TopologyKind::Custom;
  else throw ConfigError("unknown topology kind '" + kind + "'");

  topo.bs_positions.clear();
  for (const auto& p : j.value("bs", nlohmann::json::array())) {
    topo.bs_positions.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  }
  topo.radius = j.value("radius", 0.0);
  topo.wraparound = j.value("wrap", false);
  topo.side = j.value("side", 0.0);
  topo.coverage_d = j.value("d", 0);

  std::vector<Atom> atoms;
  for (const auto& ja : j.at("atoms")) {
    Atom a;
    a.mask = ja.at("mask").get<BsSet>();
    a.mass = ja.at("mass").get<double>();
    if (ja.contains("ref")) a.ref = ja.at("ref").get<std::vector<double>>();
    atoms.push_back(std::move(a));
  }
  int bs_count = j.value("bs_count", 0);
  if (bs_count == 0) {
    bs_count = static_cast<int>(topo.bs_positions.size());
    for (const auto& a : atoms) bs_count = std::max(bs_count, static_cast<int>(std::bit_width(a.mask)));
  }
  if (!topo.bs_positions.empty() && static_cast<int>(topo.bs_positions.size()) != bs_count) {
    throw ConfigError("topology: 'bs' length does not match bs_count");
  }
  topo.bs_count = bs_count;
  topo.coverage = CoverageMap(bs_count, std::move(atoms));
  if (topo.coverage.total_mass() <= 0.0) throw DegenerateTopologyError("topology has no covered mass");
}

}  // namespace cellcache
