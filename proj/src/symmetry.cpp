#include "cellcache/symmetry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "cellcache/errors.hpp"

namespace cellcache {

namespace {

bool close(double a, double b) { return std::fabs(a - b) <= 1e-9 * std::max({1e-300, std::fabs(a), std::fabs(b)}); }

struct Searcher {
  const CoverageMap& cm;
  int B;
  std::vector<double> pair;  // pair[p*B+r] = mu(S_p & S_r)
  std::vector<double> weight;
  std::unordered_map<BsSet, const Atom*> by_mask;
  std::size_t nodes = 0;
  std::size_t limit;
  bool exhausted = false;

  std::vector<int> perm;
  std::vector<char> used;

  Searcher(const CoverageMap& c, std::span<const double> w, std::size_t lim)
      : cm(c), B(c.bs_count()), pair(static_cast<std::size_t>(B) * B, 0.0), limit(lim) {
    weight.assign(w.begin(), w.end());
    for (const auto& a : cm.atoms()) {
      by_mask[a.mask] = &a;
      for (BsSet s = a.mask; s; s &= s - 1) {
        const int p = std::countr_zero(s);
        for (BsSet t = a.mask; t; t &= t - 1) pair[p * B + std::countr_zero(t)] += a.mass;
      }
    }
  }

  bool compatible(int p, int img) const {
    if (!weight.empty() && !close(weight[p], weight[img])) return false;
    if (!close(pair[p * B + p], pair[img * B + img])) return false;
    for (int r = 0; r < B; ++r) {
      if (perm[r] < 0 || r == p) continue;
      if (!close(pair[p * B + r], pair[img * B + perm[r]])) return false;
    }
    return true;
  }

  bool verify() const {
    for (const auto& a : cm.atoms()) {
      const BsSet image = permute(a.mask, perm);
      auto it = by_mask.find(image);
      if (it == by_mask.end() || !close(it->second->mass, a.mass)) return false;
      for (BsSet s = a.mask; s; s &= s - 1) {
        const int b = std::countr_zero(s);
        if (!close(a.ref_share(b), it->second->ref_share(perm[b]))) return false;
      }
    }
    return true;
  }

  bool extend(int p) {
    if (++nodes > limit) {
      exhausted = true;
      return false;
    }
    if (p == B) return verify();
    if (perm[p] >= 0) return extend(p + 1);
    for (int img = 0; img < B; ++img) {
      if (used[img] || !compatible(p, img)) continue;
      perm[p] = img;
      used[img] = 1;
      if (extend(p + 1)) return true;
      perm[p] = -1;
      used[img] = 0;
      if (exhausted) return false;
    }
    return false;
  }

  // An automorphism fixing 0..i-1 and sending i to j, if one exists.
  bool find(int i, int j, std::vector<int>& out) {
    perm.assign(B, -1);
    used.assign(B, 0);
    for (int p = 0; p < i; ++p) {
      perm[p] = p;
      used[p] = 1;
    }
    if (!compatible(i, j)) return false;
    perm[i] = j;
    used[j] = 1;
    nodes = 0;
    if (!extend(0)) return false;
    out = perm;
    return true;
  }
};

int find_root(std::vector<std::uint32_t>& parent, std::uint32_t x) {
  while (parent[x] != x) {
    parent[x] = parent[parent[x]];
    x = parent[x];
  }
  return static_cast<int>(x);
}

}  // namespace

BsSet permute(BsSet set, const std::vector<int>& perm) {
  BsSet out = 0;
  for (; set; set &= set - 1) out |= bit(perm[std::countr_zero(set)]);
  return out;
}

std::vector<std::vector<int>> Symmetry::orbits() const {
  std::vector<std::vector<int>> out(orbit_count);
  for (int b = 0; b < bs_count; ++b) out[bs_orbit[b]].push_back(b);
  return out;
}

Symmetry find_symmetry(const CoverageMap& cm, std::span<const double> cell_weights, std::size_t node_limit) {
  const int B = cm.bs_count();
  if (!cell_weights.empty() && static_cast<int>(cell_weights.size()) != B) {
    throw ParameterError("find_symmetry: one weight per cell expected");
  }
  Symmetry sym;
  sym.bs_count = B;
  Searcher search(cm, cell_weights, node_limit);

  for (int i = 0; i < B; ++i) {
    // Orbit of i under the generators found at this level (all fix 0..i-1).
    std::vector<char> seen(B, 0);
    seen[i] = 1;
    std::vector<int> level;
    auto grow = [&]() {
      std::vector<int> stack;
      for (int p = 0; p < B; ++p) {
        if (seen[p]) stack.push_back(p);
      }
      while (!stack.empty()) {
        const int p = stack.back();
        stack.pop_back();
        for (int g : level) {
          const int img = sym.generators[g][p];
          if (!seen[img]) {
            seen[img] = 1;
            stack.push_back(img);
          }
        }
      }
    };
    for (int j = i + 1; j < B; ++j) {
      if (seen[j]) continue;
      std::vector<int> g;
      if (search.find(i, j, g)) {
        level.push_back(static_cast<int>(sym.generators.size()));
        sym.generators.push_back(std::move(g));
        grow();
      } else if (search.exhausted) {
        sym.complete = false;
        search.exhausted = false;
      }
    }
  }

  std::vector<std::uint32_t> parent(B);
  std::iota(parent.begin(), parent.end(), 0u);
  for (const auto& g : sym.generators) {
    for (int b = 0; b < B; ++b) {
      const int x = find_root(parent, b), y = find_root(parent, g[b]);
      if (x != y) parent[std::max(x, y)] = std::min(x, y);
    }
  }
  sym.bs_orbit.assign(B, -1);
  std::vector<int> index(B, -1);
  for (int b = 0; b < B; ++b) {
    const int r = find_root(parent, b);
    if (index[r] < 0) index[r] = sym.orbit_count++;
    sym.bs_orbit[b] = index[r];
  }
  return sym;
}

StateOrbits state_orbits(const Symmetry& sym) {
  const int B = sym.bs_count;
  if (B > 24) throw CapacityError("state enumeration limited to 24 cells");
  const std::uint32_t n = std::uint32_t{1} << B;
  std::vector<std::uint32_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0u);
  for (const auto& g : sym.generators) {
    for (std::uint32_t x = 0; x < n; ++x) {
      const int a = find_root(parent, x), b = find_root(parent, permute(x, g));
      if (a != b) parent[std::max(a, b)] = static_cast<std::uint32_t>(std::min(a, b));
    }
  }
  StateOrbits out;
  out.orbit_of.assign(n, 0);
  std::vector<std::int64_t> index(n, -1);
  for (std::uint32_t x = 0; x < n; ++x) {
    const auto r = static_cast<std::uint32_t>(find_root(parent, x));
    if (index[r] < 0) {
      index[r] = static_cast<std::int64_t>(out.rep.size());
      out.rep.push_back(x);  // r == x here since roots are the smallest member
      out.size.push_back(0);
    }
    out.orbit_of[x] = static_cast<std::uint32_t>(index[r]);
    ++out.size[index[r]];
  }
  return out;
}

}  // namespace cellcache
