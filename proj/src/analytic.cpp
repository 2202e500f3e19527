#include "cellcache/analytic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "cellcache/errors.hpp"
#include "cellcache/symmetry.hpp"

namespace cellcache {

namespace {

using ld = long double;

// Keeps down-rates strictly positive when exp(Lambda T) leaves the long
// double range; the chains stay irreducible.
constexpr ld kMinRate = 1e-4900L;

bool timer_like(PolicyKind k) { return k == PolicyKind::FIFO || k == PolicyKind::RANDOM; }

ld nu_ld(PolicyKind kind, ld Lambda, ld T) {
  if (timer_like(kind) || Lambda <= 0.0L) return 1.0L / T;
  const ld v = Lambda / std::expm1(Lambda * T);
  return v > kMinRate ? v : kMinRate;
}

// log(nu); usable far beyond the long double range of exp(Lambda T).
double log_nu(PolicyKind kind, double Lambda, double T) {
  if (timer_like(kind) || Lambda <= 0.0) return -std::log(T);
  const double x = Lambda * T;
  const double log_em1 = x > 30.0 ? x + std::log1p(-std::exp(-x)) : std::log(std::expm1(x));
  return std::log(Lambda) - log_em1;
}

double binom(int n, int k) {
  if (k < 0 || n < 0 || k > n) return 0.0;
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return std::round(r);
}

// GTH elimination on a dense matrix of off-diagonal rates (diagonal ignored).
// `a` is destroyed.
void gth(std::vector<ld>& a, std::size_t n, std::vector<ld>& pi) {
  pi.assign(n, 0.0L);
  for (std::size_t k = n - 1; k >= 1; --k) {
    ld s = 0.0L;
    const ld* row = &a[k * n];
    for (std::size_t j = 0; j < k; ++j) s += row[j];
    if (!(s > 0.0L)) throw SolverError("stationary: generator is reducible");
    for (std::size_t i = 0; i < k; ++i) {
      ld& aik = a[i * n + k];
      if (aik == 0.0L) continue;
      aik /= s;
      ld* ri = &a[i * n];
      for (std::size_t j = 0; j < k; ++j) ri[j] += aik * row[j];
    }
  }
  pi[0] = 1.0L;
  ld total = 1.0L;
  for (std::size_t k = 1; k < n; ++k) {
    ld v = 0.0L;
    for (std::size_t i = 0; i < k; ++i) v += pi[i] * a[i * n + k];
    pi[k] = v;
    total += v;
  }
  for (auto& p : pi) p /= total;
}

// Illinois false position on a monotone increasing g(u); expands from u0
// until the root is bracketed.
template <class G>
double log_root(G&& g, double u0, double ftol, int& evals, const char* what) {
  auto eval = [&](double u) {
    ++evals;
    return g(u);
  };
  double a = u0, ga = eval(a);
  if (std::fabs(ga) <= ftol) return a;
  double b = a, gb = ga, step = 1.0;
  for (int i = 0;; ++i) {
    b = a + (ga < 0.0 ? step : -step);
    if (std::fabs(b) > 700.0 || i > 80) {
      throw ConvergenceError(std::string(what) + ": cannot bracket the characteristic time", {ga});
    }
    gb = eval(b);
    if (std::fabs(gb) <= ftol) return b;
    if ((ga < 0.0) != (gb < 0.0)) break;
    a = b;
    ga = gb;
    step *= 2.0;
  }
  int side = 0;
  for (int it = 0; it < 300; ++it) {
    double c = (a * gb - b * ga) / (gb - ga);
    if (!std::isfinite(c)) c = 0.5 * (a + b);
    const double gc = eval(c);
    if (std::fabs(gc) <= ftol || std::fabs(b - a) < 1e-14 * std::max(1.0, std::fabs(c))) return c;
    if ((gc < 0.0) == (gb < 0.0)) {
      b = c;
      gb = gc;
      if (side == -1) ga *= 0.5;
      side = -1;
    } else {
      a = c;
      ga = gc;
      if (side == +1) gb *= 0.5;
      side = +1;
    }
  }
  throw ConvergenceError(std::string(what) + ": root finder did not converge", {std::min(std::fabs(ga), std::fabs(gb))});
}

// Single-cache occupancy alpha / (alpha + nu).
ld single_h(PolicyKind kind, ld alpha, ld Lambda, ld T) {
  if (alpha <= 0.0L) return 0.0L;
  return 1.0L / (1.0L + nu_ld(kind, Lambda, T) / alpha);
}

// Che time of one isolated cache fed with rates Lambda[f] (times counts).
double che_time(PolicyKind kind, double admission, std::span<const double> Lambda,
                std::span<const double> count, double C, int& evals) {
  double total = 0.0;
  for (std::size_t i = 0; i < Lambda.size(); ++i) total += Lambda[i] * count[i];
  if (!(total > 0.0)) throw ConvergenceError("no request reaches the cache", {C});
  const double u0 = std::log(C / (std::max(admission, 1e-300) * total));
  auto g = [&](double u) {
    const ld T = std::exp(static_cast<ld>(u));
    ld occ = 0.0L;
    for (std::size_t i = 0; i < Lambda.size(); ++i) {
      occ += count[i] * single_h(kind, admission * Lambda[i], Lambda[i], T);
    }
    return static_cast<double>(occ) - C;
  };
  return std::exp(log_root(g, std::clamp(u0, -600.0, 600.0), 1e-9 * C, evals, "che"));
}

struct ContentClass {
  double lambda = 0.0;
  double count = 0.0;
  std::vector<std::size_t> members;
};

std::vector<ContentClass> make_classes(const std::vector<double>& lambda, int bins) {
  std::vector<ContentClass> out;
  if (bins <= 0) {
    for (std::size_t f = 0; f < lambda.size(); ++f) {
      if (lambda[f] > 0.0) out.push_back({lambda[f], 1.0, {f}});
    }
    return out;
  }
  double lo = HUGE_VAL, hi = 0.0;
  for (double l : lambda) {
    if (l > 0.0) {
      lo = std::min(lo, l);
      hi = std::max(hi, l);
    }
  }
  if (!(hi > 0.0)) return out;
  const double span = std::log(hi / lo);
  std::vector<ContentClass> bucket(bins);
  for (std::size_t f = 0; f < lambda.size(); ++f) {
    if (!(lambda[f] > 0.0)) continue;
    int k = span > 0.0 ? static_cast<int>(std::log(lambda[f] / lo) / span * bins) : 0;
    k = std::clamp(k, 0, bins - 1);
    bucket[k].lambda += lambda[f];
    bucket[k].count += 1.0;
    bucket[k].members.push_back(f);
  }
  for (auto& c : bucket) {
    if (c.count > 0.0) {
      c.lambda /= c.count;
      out.push_back(std::move(c));
    }
  }
  return out;
}

// Per-content chain machinery shared by the network solvers. Chains are lumped
// over the orbits of the coverage automorphism group; T is kept constant on
// every BS orbit so that the lumping stays exact.
class Engine {
 public:
  struct Out {
    std::vector<double> occ;      // per BS orbit, average over its members
    std::vector<double> verdict;  // per BS orbit, E[update mass] (kLRU stage 1)
    double eu = 0.0;              // E[union mass of holders] while requests flow
  };

  Engine(const CoverageMap& cm, UpdateRule rule, const PolicySpec& policy, std::optional<OnOff> onoff,
         const SolveOptions& opt)
      : cm_(cm), rule_(rule), B_(cm.bs_count()), onoff_(onoff) {
    kind_ = policy.kind == PolicyKind::kLRU ? PolicyKind::LRU : policy.kind;
    adm_.resize(B_);
    for (int b = 0; b < B_; ++b) adm_[b] = policy.admission_at(b);
    factorized_ = (rule == UpdateRule::One || rule == UpdateRule::All) && !onoff;

    std::vector<double> weights;
    if (!policy.q_exponents.empty()) weights = policy.q_exponents;
    if (opt.use_symmetry) {
      sym_ = find_symmetry(cm, weights);
    } else {
      sym_.bs_count = B_;
      sym_.bs_orbit.resize(B_);
      std::iota(sym_.bs_orbit.begin(), sym_.bs_orbit.end(), 0);
      sym_.orbit_count = B_;
    }
    orbits_ = sym_.orbits();
    nb_ = sym_.orbit_count;

    if (factorized_) {
      fmass_.resize(B_);
      for (int b = 0; b < B_; ++b) fmass_[b] = rule_mass(rule, cm, b, 0);
      n_ = 2;
      return;
    }
    if (B_ > 24) throw CapacityError("too many cells for the per-content chain");
    if (sym_.generators.empty() && B_ > opt.max_bs) {
      throw CapacityError("per-content chain over 2^" + std::to_string(B_) +
                          " states exceeds the cap; use solve_trefoil for symmetric topologies");
    }
    const StateOrbits so = state_orbits(sym_);
    n_ = static_cast<int>(so.rep.size());
    if (n_ > 4096) throw CapacityError("lumped chain has more than 4096 states");
    rep_ = so.rep;
    target_.resize(static_cast<std::size_t>(n_) * B_);
    mass_.resize(static_cast<std::size_t>(n_) * B_);
    umass_.resize(n_);
    cnt_.assign(static_cast<std::size_t>(n_) * nb_, 0.0);
    vm_.assign(static_cast<std::size_t>(n_) * nb_, 0.0);
    for (int o = 0; o < n_; ++o) {
      const BsSet x = rep_[o];
      umass_[o] = union_measure(cm, x);
      for (int b = 0; b < B_; ++b) {
        const std::size_t i = static_cast<std::size_t>(o) * B_ + b;
        target_[i] = static_cast<int>(so.orbit_of[x ^ bit(b)]);
        mass_[i] = contains(x, b) ? rule_mass(rule, cm, b, x) : insertion_request_mass(rule, cm, b, x);
        const int O = sym_.bs_orbit[b];
        const double w = 1.0 / orbits_[O].size();
        cnt_[static_cast<std::size_t>(o) * nb_ + O] += contains(x, b) ? w : 0.0;
        vm_[static_cast<std::size_t>(o) * nb_ + O] += w * mass_[i];
      }
    }
  }

  int bs_count() const { return B_; }
  int orbit_count() const { return nb_; }
  const std::vector<std::vector<int>>& orbits() const { return orbits_; }
  int lumped_states() const { return factorized_ ? 0 : n_ * (onoff_ ? 2 : 1); }
  PolicyKind kind() const { return kind_; }
  double admission(int b) const { return adm_[b]; }

  // T per BS; upscale per BS (may be null).
  void eval(double lambda, const std::vector<double>& T, const double* upscale, Out& out) {
    out.occ.assign(nb_, 0.0);
    out.verdict.assign(nb_, 0.0);
    out.eu = 0.0;
    if (factorized_) {
      eval_factorized(lambda, T, upscale, out);
      return;
    }
    const std::size_t n = n_;
    const std::size_t N = onoff_ ? 2 * n : n;
    work_.assign(N * N, 0.0L);
    for (std::size_t o = 0; o < n; ++o) {
      const BsSet x = rep_[o];
      for (int b = 0; b < B_; ++b) {
        const std::size_t i = o * B_ + b;
        const ld m = mass_[i];
        const std::size_t t = target_[i];
        if (contains(x, b)) {
          work_[o * N + t] += nu_ld(kind_, lambda * m, T[b]);
          if (onoff_) work_[(n + o) * N + n + t] += 1.0L / T[b];
        } else if (m > 0.0L) {
          work_[o * N + t] += adm_[b] * lambda * m * (upscale ? upscale[b] : 1.0);
        }
      }
      if (onoff_) {
        work_[o * N + n + o] += 1.0L / onoff_->t_on;
        work_[(n + o) * N + o] += 1.0L / onoff_->t_off;
      }
    }
    gth(work_, N, pi_);
    ld eu = 0.0L;
    for (std::size_t o = 0; o < n; ++o) {
      const ld p_on = pi_[o];
      const ld p = onoff_ ? p_on + pi_[n + o] : p_on;
      eu += p_on * umass_[o];
      for (int O = 0; O < nb_; ++O) {
        out.occ[O] += static_cast<double>(p * cnt_[o * nb_ + O]);
        out.verdict[O] += static_cast<double>(p * vm_[o * nb_ + O]);
      }
    }
    out.eu = static_cast<double>(eu);
  }

 private:
  void eval_factorized(double lambda, const std::vector<double>& T, const double* upscale, Out& out) {
    h_.resize(B_);
    for (int b = 0; b < B_; ++b) {
      const ld Lambda = lambda * fmass_[b];
      const ld alpha = adm_[b] * Lambda * (upscale ? upscale[b] : 1.0);
      h_[b] = single_h(kind_, alpha, Lambda, T[b]);
    }
    for (int O = 0; O < nb_; ++O) {
      ld s = 0.0L;
      for (int b : orbits_[O]) s += h_[b];
      out.occ[O] = static_cast<double>(s / orbits_[O].size());
      ld v = 0.0L;
      for (int b : orbits_[O]) v += fmass_[b];
      out.verdict[O] = static_cast<double>(v / orbits_[O].size());
    }
    ld eu = 0.0L;
    for (const auto& a : cm_.atoms()) {
      ld miss = 1.0L;
      for (BsSet s = a.mask; s; s &= s - 1) miss *= 1.0L - h_[std::countr_zero(s)];
      eu += a.mass * (1.0L - miss);
    }
    out.eu = static_cast<double>(eu);
  }

  const CoverageMap& cm_;
  UpdateRule rule_;
  int B_;
  std::optional<OnOff> onoff_;
  PolicyKind kind_;
  std::vector<double> adm_;
  bool factorized_ = false;
  Symmetry sym_;
  std::vector<std::vector<int>> orbits_;
  int nb_ = 0;
  int n_ = 0;
  std::vector<BsSet> rep_;
  std::vector<int> target_;
  std::vector<double> mass_, umass_, cnt_, vm_, fmass_;
  std::vector<ld> work_, pi_, h_;
};

// Data-stage characteristic-time fixed point over the BS orbits.
class FixedPoint {
 public:
  FixedPoint(Engine& engine, const std::vector<ContentClass>& classes, double C, const SolveOptions& opt)
      : e_(engine), classes_(classes), C_(C), opt_(opt) {
    tol_ = opt.tol > 0.0 ? opt.tol : 1e-4 * C;
    occ_.assign(e_.orbit_count(), 0.0);
  }

  // per class, per BS (kLRU stage-1 presence); empty = none
  std::vector<std::vector<double>> upscale;

  double tol() const { return tol_; }
  int evaluations() const { return evals_; }

  // Initial guess: isolated cache per orbit with rule All rates.
  std::vector<double> che_guess(const CoverageMap& cm) {
    std::vector<double> T(e_.bs_count(), 1.0);
    std::vector<double> Lambda(classes_.size()), count(classes_.size());
    for (const auto& orbit : e_.orbits()) {
      const int b = orbit.front();
      const double mass = cm.cell_mass(b);
      for (std::size_t i = 0; i < classes_.size(); ++i) {
        Lambda[i] = classes_[i].lambda * mass;
        count[i] = classes_[i].count;
      }
      const double t = che_time(e_.kind(), e_.admission(b), Lambda, count, C_, evals_);
      for (int m : orbit) T[m] = t;
    }
    return T;
  }

  // Occupancy per orbit and E[union mass] at T.
  void evaluate(const std::vector<double>& T, std::vector<double>& occ, double& eu,
                std::vector<std::vector<double>>* per_class = nullptr,
                std::vector<std::vector<double>>* verdict = nullptr) {
    ++evals_;
    const int nb = e_.orbit_count();
    std::vector<ld> acc(nb, 0.0L);
    ld eacc = 0.0L;
    if (per_class) per_class->assign(classes_.size(), std::vector<double>(nb, 0.0));
    if (verdict) verdict->assign(classes_.size(), std::vector<double>(nb, 0.0));
    for (std::size_t i = 0; i < classes_.size(); ++i) {
      const auto& c = classes_[i];
      e_.eval(c.lambda, T, upscale.empty() ? nullptr : upscale[i].data(), out_);
      for (int O = 0; O < nb; ++O) acc[O] += c.count * static_cast<ld>(out_.occ[O]);
      eacc += c.count * c.lambda * static_cast<ld>(out_.eu);
      if (per_class) (*per_class)[i] = out_.occ;
      if (verdict) (*verdict)[i] = out_.verdict;
    }
    occ.resize(nb);
    for (int O = 0; O < nb; ++O) occ[O] = static_cast<double>(acc[O]);
    eu = static_cast<double>(eacc);
  }

  // Gauss-Seidel sweeps; T is updated in place.
  void solve(std::vector<double>& T, int& iterations, double& residual) {
    const auto& orbits = e_.orbits();
    double eu = 0.0;
    std::vector<double> occ;
    for (int sweep = 1; sweep <= opt_.max_iter; ++sweep) {
      for (std::size_t O = 0; O < orbits.size(); ++O) {
        auto g = [&](double u) {
          const double t = std::exp(u);
          for (int b : orbits[O]) T[b] = t;
          evaluate(T, occ, eu);
          return occ[O] - C_;
        };
        const double u = log_root(g, std::log(T[orbits[O].front()]), 0.25 * tol_, evals_, "solve_network");
        for (int b : orbits[O]) T[b] = std::exp(u);
      }
      evaluate(T, occ, eu);
      residual = 0.0;
      for (double o : occ) residual = std::max(residual, std::fabs(o - C_));
      iterations = sweep;
      if (residual <= tol_) {
        occ_ = occ;
        return;
      }
    }
    std::vector<double> res;
    for (double o : occ) res.push_back(o - C_);
    throw ConvergenceError("solve_network: no convergence within " + std::to_string(opt_.max_iter) + " sweeps",
                           res);
  }

 private:
  Engine& e_;
  const std::vector<ContentClass>& classes_;
  double C_;
  SolveOptions opt_;
  double tol_;
  int evals_ = 0;
  std::vector<double> occ_;
  Engine::Out out_;
};

void check_inputs(const Topology& topology, const std::vector<double>& lambda, int C) {
  if (topology.bs_count < 1 || topology.coverage.atoms().empty()) {
    throw DegenerateTopologyError("topology without coverage");
  }
  if (C < 1) throw ParameterError("C must be >= 1");
  if (static_cast<std::size_t>(C) >= lambda.size()) throw ParameterError("C must be smaller than F");
}

ModelSolution finish(Engine& engine, FixedPoint& fp, const std::vector<ContentClass>& classes,
                     std::vector<double> T, std::size_t F, double total_lambda, double M, double on_fraction) {
  ModelSolution s;
  std::vector<double> occ;
  double eu = 0.0;
  std::vector<std::vector<double>> per_class;
  fp.evaluate(T, occ, eu, &per_class);
  const int B = engine.bs_count();
  std::vector<int> orbit_of(B);
  for (std::size_t O = 0; O < engine.orbits().size(); ++O) {
    for (int b : engine.orbits()[O]) orbit_of[b] = static_cast<int>(O);
  }
  s.h.assign(F, std::vector<double>(B, 0.0));
  for (std::size_t i = 0; i < classes.size(); ++i) {
    for (auto f : classes[i].members) {
      for (int b = 0; b < B; ++b) s.h[f][b] = per_class[i][orbit_of[b]];
    }
  }
  s.occupancy.resize(B);
  for (int b = 0; b < B; ++b) s.occupancy[b] = occ[orbit_of[b]];
  s.T = std::move(T);
  s.hit_ratio = eu / (total_lambda * M * on_fraction);
  s.lumped_states = engine.lumped_states();
  return s;
}

}  // namespace

double sojourn_rate(PolicyKind policy, double Lambda, double T) {
  if (!(T > 0.0)) throw ParameterError("characteristic time must be positive");
  if (!(Lambda >= 0.0)) throw ParameterError("rate must be >= 0");
  if (timer_like(policy) || Lambda == 0.0) return 1.0 / T;
  return Lambda / std::expm1(Lambda * T);
}

double insertion_rate(const PolicySpec& policy, double Lambda, int b) {
  if (!(Lambda >= 0.0)) throw ParameterError("rate must be >= 0");
  return policy.admission_at(b) * Lambda;
}

double rule_mass(UpdateRule rule, const CoverageMap& cm, int b, BsSet holders) {
  if (b < 0 || b >= cm.bs_count()) throw ParameterError("BS id out of range");
  switch (rule) {
    case UpdateRule::All: return cm.cell_mass(b);
    case UpdateRule::One: return cm.reference_mass(b);
    case UpdateRule::Lazy: {
      const BsSet others = holders & ~bit(b);
      double m = 0.0;
      for (const auto& a : cm.atoms()) {
        if (contains(a.mask, b) && (a.mask & others) == 0) m += a.mass;
      }
      return m;
    }
    case UpdateRule::Blind: {
      double m = 0.0;
      const bool holds = contains(holders, b);
      for (const auto& a : cm.atoms()) {
        if (!contains(a.mask, b)) continue;
        const BsSet J = a.mask & holders;
        if (holds) {
          m += a.mass / size_of(J);
        } else if (J == 0) {
          m += a.mass / size_of(a.mask);
        }
      }
      return m;
    }
  }
  return 0.0;
}

double rule_rate(UpdateRule rule, const CoverageMap& cm, double lambda, int b, BsSet holders) {
  return lambda * rule_mass(rule, cm, b, holders);
}

double insertion_request_mass(UpdateRule rule, const CoverageMap& cm, int b, BsSet holders) {
  if (contains(holders, b)) return rule_mass(rule, cm, b, holders);
  if (rule == UpdateRule::Lazy) return rule_mass(UpdateRule::Blind, cm, b, holders);
  return rule_mass(rule, cm, b, holders);
}

void ContentChain::add(std::size_t i, std::size_t j, double r) {
  if (i >= n || j >= n || i == j) throw ParameterError("chain transition out of range");
  if (!(r >= 0.0)) throw ParameterError("chain rates must be >= 0");
  if (r == 0.0) return;
  from.push_back(static_cast<std::uint32_t>(i));
  to.push_back(static_cast<std::uint32_t>(j));
  rate.push_back(r);
}

std::vector<double> ContentChain::generator() const {
  if (n > 4096) throw CapacityError("dense generator limited to 4096 states");
  std::vector<double> Q(n * n, 0.0);
  for (std::size_t e = 0; e < rate.size(); ++e) {
    Q[from[e] * n + to[e]] += rate[e];
    Q[from[e] * n + from[e]] -= rate[e];
  }
  return Q;
}

ContentChain build_chain(const CoverageMap& cm, UpdateRule rule, const PolicySpec& policy, double lambda,
                         std::span<const double> T, int max_bs) {
  const int B = cm.bs_count();
  if (B > max_bs) {
    throw CapacityError("chain over 2^" + std::to_string(B) +
                        " states exceeds the cap; use solve_trefoil for symmetric topologies");
  }
  if (static_cast<int>(T.size()) != B) throw ParameterError("one characteristic time per cache expected");
  const PolicyKind kind = policy.kind == PolicyKind::kLRU ? PolicyKind::LRU : policy.kind;
  ContentChain chain;
  chain.bs_count = B;
  chain.n = std::size_t{1} << B;
  for (BsSet x = 0; x < chain.n; ++x) {
    for (int b = 0; b < B; ++b) {
      const BsSet y = x ^ bit(b);
      if (contains(x, b)) {
        chain.add(x, y, sojourn_rate(kind, lambda * rule_mass(rule, cm, b, x), T[b]));
      } else {
        chain.add(x, y, insertion_rate(policy, lambda * insertion_request_mass(rule, cm, b, x), b));
      }
    }
  }
  return chain;
}

std::vector<double> stationary(const ContentChain& chain) {
  const std::size_t n = chain.n;
  if (n == 0) throw ParameterError("empty chain");
  if (n == 1) return {1.0};
  std::vector<double> out(n);
  if (n <= 4096) {
    std::vector<ld> a(n * n, 0.0L), pi;
    for (std::size_t e = 0; e < chain.rate.size(); ++e) a[chain.from[e] * n + chain.to[e]] += chain.rate[e];
    gth(a, n, pi);
    for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<double>(pi[i]);
  } else {
    // Gauss-Seidel on pi_j * out_j = sum_i pi_i q_ij.
    std::vector<double> exit(n, 0.0);
    std::vector<std::size_t> start(n + 1, 0);
    for (std::size_t e = 0; e < chain.rate.size(); ++e) {
      exit[chain.from[e]] += chain.rate[e];
      ++start[chain.to[e] + 1];
    }
    for (std::size_t i = 0; i < n; ++i) start[i + 1] += start[i];
    std::vector<std::uint32_t> src(chain.rate.size());
    std::vector<double> w(chain.rate.size());
    std::vector<std::size_t> fill(start.begin(), start.end() - 1);
    for (std::size_t e = 0; e < chain.rate.size(); ++e) {
      const auto k = fill[chain.to[e]]++;
      src[k] = chain.from[e];
      w[k] = chain.rate[e];
    }
    for (double x : exit) {
      if (!(x > 0.0)) throw SolverError("stationary: absorbing state");
    }
    std::fill(out.begin(), out.end(), 1.0 / n);
    for (int sweep = 0; sweep < 200000; ++sweep) {
      for (std::size_t j = 0; j < n; ++j) {
        double in = 0.0;
        for (auto k = start[j]; k < start[j + 1]; ++k) in += out[src[k]] * w[k];
        out[j] = in / exit[j];
      }
      const double total = std::accumulate(out.begin(), out.end(), 0.0);
      if (!(total > 0.0)) throw SolverError("stationary: iteration collapsed");
      for (double& p : out) p /= total;
      if (sweep % 16 == 15 && stationary_residual(chain, out) < 1e-13) return out;
    }
    throw SolverError("stationary: Gauss-Seidel did not converge");
  }
  if (stationary_residual(chain, out) > 1e-12) throw SolverError("stationary: residual above 1e-12");
  return out;
}

double stationary_residual(const ContentChain& chain, std::span<const double> pi) {
  std::vector<ld> flow(chain.n, 0.0L);
  std::vector<ld> scale(chain.n, 0.0L);
  for (std::size_t e = 0; e < chain.rate.size(); ++e) {
    const ld f = static_cast<ld>(pi[chain.from[e]]) * chain.rate[e];
    flow[chain.to[e]] += f;
    flow[chain.from[e]] -= f;
    scale[chain.from[e]] += f;
  }
  ld worst = 0.0L, top = 0.0L;
  for (std::size_t i = 0; i < chain.n; ++i) {
    worst = std::max(worst, std::fabs(flow[i]));
    top = std::max(top, scale[i]);
  }
  return top > 0.0L ? static_cast<double>(worst / top) : 0.0;
}

ReversibilityReport check_reversibility(const ContentChain& chain, double tol) {
  const auto pi = stationary(chain);
  return check_reversibility(chain, pi, tol);
}

ReversibilityReport check_reversibility(const ContentChain& chain, std::span<const double> pi, double tol) {
  std::unordered_map<std::uint64_t, double> rates;
  rates.reserve(chain.rate.size());
  for (std::size_t e = 0; e < chain.rate.size(); ++e) {
    rates[(std::uint64_t{chain.from[e]} << 32) | chain.to[e]] += chain.rate[e];
  }
  ReversibilityReport rep;
  for (const auto& [key, r] : rates) {
    const auto i = key >> 32, j = key & 0xffffffffu;
    const auto back = rates.find((j << 32) | i);
    const ld fwd = static_cast<ld>(pi[i]) * r;
    const ld rev = back == rates.end() ? 0.0L : static_cast<ld>(pi[j]) * back->second;
    const ld top = std::max(fwd, rev);
    if (top <= 0.0L) continue;
    rep.max_violation = std::max(rep.max_violation, static_cast<double>(std::fabs(fwd - rev) / top));
  }
  rep.reversible = rep.max_violation < tol;
  return rep;
}

void to_json(nlohmann::json& j, const ModelSolution& s) {
  j = nlohmann::json::object();
  j["hit_ratio"] = s.hit_ratio;
  j["iterations"] = s.iterations;
  j["evaluations"] = s.evaluations;
  j["residual"] = s.residual;
  j["lumped_states"] = s.lumped_states;
  nlohmann::json per_cache = nlohmann::json::array();
  for (std::size_t b = 0; b < s.T.size(); ++b) {
    nlohmann::json c = {{"bs", b}, {"T", s.T[b]}, {"occupancy", s.occupancy[b]}};
    if (!s.T_meta.empty()) {
      std::vector<double> meta;
      for (const auto& stage : s.T_meta) meta.push_back(stage[b]);
      c["T_meta"] = meta;
    }
    per_cache.push_back(c);
  }
  j["per_cache"] = per_cache;
}

ModelSolution solve_network(const Topology& topology, const Catalog& catalog, const PolicySpec& policy,
                            UpdateRule rule, int C, const SolveOptions& options) {
  policy.validate();
  if (policy.kind == PolicyKind::kLRU) return solve_klru(topology, catalog, rule, C, policy, options);
  const CoverageMap& cm = topology.coverage;
  const double M = cm.total_mass();
  const auto lambda = per_mass_rates(catalog, M);
  check_inputs(topology, lambda, C);
  const auto classes = make_classes(lambda, options.bins);

  Engine engine(cm, rule, policy, std::nullopt, options);
  FixedPoint fp(engine, classes, C, options);
  std::vector<double> T = fp.che_guess(cm);
  int iterations = 0;
  double residual = 0.0;
  fp.solve(T, iterations, residual);
  ModelSolution s = finish(engine, fp, classes, std::move(T), lambda.size(),
                           std::accumulate(lambda.begin(), lambda.end(), 0.0), M, 1.0);
  s.iterations = iterations;
  s.residual = residual;
  s.evaluations = fp.evaluations();
  return s;
}

ModelSolution solve_onoff(const Topology& topology, const Catalog& catalog, const PolicySpec& policy,
                          UpdateRule rule, int C, const SolveOptions& options) {
  policy.validate();
  if (!catalog.onoff) throw ConfigError("solve_onoff: catalog has no onoff parameters");
  if (policy.kind == PolicyKind::kLRU) throw ParameterError("solve_onoff: kLRU is not supported");
  const OnOff oo = *catalog.onoff;
  if (!(oo.t_on > 0.0) || !(oo.t_off > 0.0)) throw ParameterError("solve_onoff: ON and OFF means must be positive");
  const CoverageMap& cm = topology.coverage;
  const double M = cm.total_mass();
  const auto lambda = per_mass_rates(catalog, M);
  check_inputs(topology, lambda, C);
  const auto classes = make_classes(lambda, options.bins);

  Engine engine(cm, rule, policy, oo, options);
  FixedPoint fp(engine, classes, C, options);
  std::vector<double> T = fp.che_guess(cm);
  int iterations = 0;
  double residual = 0.0;
  fp.solve(T, iterations, residual);
  ModelSolution s = finish(engine, fp, classes, std::move(T), lambda.size(),
                           std::accumulate(lambda.begin(), lambda.end(), 0.0), M, oo.on_fraction());
  s.iterations = iterations;
  s.residual = residual;
  s.evaluations = fp.evaluations();
  return s;
}

ModelSolution solve_klru(const Topology& topology, const Catalog& catalog, UpdateRule rule, int C,
                         const PolicySpec& policy, const SolveOptions& options) {
  PolicySpec spec = policy;
  if (spec.kind != PolicyKind::kLRU) throw ParameterError("solve_klru: policy must be kLRU");
  spec.validate();
  const CoverageMap& cm = topology.coverage;
  const double M = cm.total_mass();
  const auto lambda = per_mass_rates(catalog, M);
  check_inputs(topology, lambda, C);
  const auto classes = make_classes(lambda, options.bins);
  const int B = cm.bs_count();
  const int meta_stages = spec.k - 1;

  PolicySpec data = lru();
  data.q_exponents = spec.q_exponents;
  Engine engine(cm, rule, data, std::nullopt, options);
  FixedPoint fp(engine, classes, C, options);
  const auto& orbits = engine.orbits();
  std::vector<int> orbit_of(B);
  for (std::size_t O = 0; O < orbits.size(); ++O) {
    for (int b : orbits[O]) orbit_of[b] = static_cast<int>(O);
  }

  std::vector<double> T = fp.che_guess(cm);
  std::vector<std::vector<double>> T_meta(meta_stages, std::vector<double>(B, 1.0));
  int iterations = 0, outer = 0;
  double residual = 0.0, previous_hit = -1.0;
  std::vector<std::vector<double>> verdict;
  const std::size_t K = classes.size();
  std::vector<ld> Lambda(K);

  for (outer = 1; outer <= options.max_iter; ++outer) {
    int sweeps = 0;
    fp.solve(T, sweeps, residual);
    iterations += sweeps;
    std::vector<double> occ;
    double eu = 0.0;
    fp.evaluate(T, occ, eu, nullptr, &verdict);
    const double hit = eu / (std::accumulate(lambda.begin(), lambda.end(), 0.0) * M);

    // Metadata stages: isolated LRU caches refreshed at the verdict rate,
    // stage s admitting only what stage s-1 held.
    std::vector<std::vector<double>> presence(K, std::vector<double>(B, 1.0));
    for (int s = 0; s < meta_stages; ++s) {
      for (std::size_t O = 0; O < orbits.size(); ++O) {
        const int b0 = orbits[O].front();
        const double Cs = spec.stage_capacity(s, C);
        if (Cs >= static_cast<double>(lambda.size())) {
          // Room for the whole catalog: the stage never filters anything.
          for (std::size_t i = 0; i < K; ++i) {
            for (int b : orbits[O]) presence[i][b] = 1.0;
          }
          for (int b : orbits[O]) T_meta[s][b] = HUGE_VAL;
          continue;
        }
        for (std::size_t i = 0; i < K; ++i) Lambda[i] = classes[i].lambda * verdict[i][O];
        auto g = [&](double u) {
          const ld t = std::exp(static_cast<ld>(u));
          ld total = 0.0L;
          for (std::size_t i = 0; i < K; ++i) {
            total += classes[i].count * single_h(PolicyKind::LRU, Lambda[i] * presence[i][b0], Lambda[i], t);
          }
          return static_cast<double>(total) - Cs;
        };
        int evals = 0;
        const double t = std::exp(log_root(g, std::log(T_meta[s][b0]), 1e-9 * Cs, evals, "solve_klru"));
        for (std::size_t i = 0; i < K; ++i) {
          const double h =
              static_cast<double>(single_h(PolicyKind::LRU, Lambda[i] * presence[i][b0], Lambda[i], t));
          for (int b : orbits[O]) presence[i][b] = h;
        }
        for (int b : orbits[O]) T_meta[s][b] = t;
      }
    }
    double change = 0.0;
    if (!fp.upscale.empty()) {
      for (std::size_t i = 0; i < K; ++i) {
        for (int b = 0; b < B; ++b) change = std::max(change, std::fabs(presence[i][b] - fp.upscale[i][b]));
      }
    } else {
      change = HUGE_VAL;
    }
    fp.upscale = std::move(presence);
    if (change < 1e-9 || std::fabs(hit - previous_hit) < 1e-12) break;
    previous_hit = hit;
  }
  if (outer > options.max_iter) {
    throw ConvergenceError("solve_klru: stages did not settle", {residual});
  }
  fp.solve(T, iterations, residual);
  ModelSolution s = finish(engine, fp, classes, std::move(T), lambda.size(),
                           std::accumulate(lambda.begin(), lambda.end(), 0.0), M, 1.0);
  s.T_meta = std::move(T_meta);
  s.iterations = iterations;
  s.residual = residual;
  s.evaluations = fp.evaluations();
  return s;
}

void to_json(nlohmann::json& j, const TrefoilSolution& s) {
  j = {{"B", s.bs_count}, {"d", s.d},           {"T", s.T},
       {"hit_ratio", s.hit_ratio}, {"copies", s.copies}, {"evaluations", s.evaluations},
       {"residual", s.residual}};
}

TrefoilSolution solve_trefoil(int B, int d, const Catalog& catalog, const PolicySpec& policy, UpdateRule rule,
                              int C, double tol, double M) {
  policy.validate();
  if (B < 1 || d < 1 || d > B) throw ParameterError("trefoil needs 1 <= d <= B");
  if (B > kMaxBs) throw ParameterError("too many base stations");
  if (policy.kind == PolicyKind::kLRU) throw ParameterError("solve_trefoil: use solve_klru for kLRU");
  for (double g : policy.q_exponents) {
    if (g != policy.q_exponents.front()) throw ParameterError("solve_trefoil: per-cell q breaks the symmetry");
  }
  if (!(M > 0.0)) throw ParameterError("trefoil mass must be positive");
  const auto lambda = per_mass_rates(catalog, M);
  if (C < 1 || static_cast<std::size_t>(C) >= lambda.size()) throw ParameterError("need 1 <= C < F");
  const double adm = policy.admission_at(0);
  const PolicyKind kind = policy.kind;

  const double all = binom(B, d);
  const double m = M / all;
  std::vector<double> up(B), down(B + 1, 0.0), U(B + 1);
  for (int k = 0; k <= B; ++k) U[k] = M * (1.0 - binom(B - k, d) / all);
  for (int k = 0; k < B; ++k) {
    switch (rule) {
      case UpdateRule::All: up[k] = binom(B - 1, d - 1) * m; break;
      case UpdateRule::One: up[k] = M / B; break;
      default: up[k] = binom(B - k - 1, d - 1) * m / d; break;
    }
  }
  for (int k = 1; k <= B; ++k) {
    switch (rule) {
      case UpdateRule::All: down[k] = binom(B - 1, d - 1) * m; break;
      case UpdateRule::One: down[k] = M / B; break;
      case UpdateRule::Lazy: down[k] = binom(B - k, d - 1) * m; break;
      case UpdateRule::Blind: {
        double s = 0.0;
        for (int j = 1; j <= std::min(k, d); ++j) s += binom(k - 1, j - 1) * binom(B - k, d - j) * m / j;
        down[k] = s;
        break;
      }
    }
  }

  TrefoilSolution sol;
  sol.bs_count = B;
  sol.d = d;
  sol.delta.resize(B);
  for (int k = 1; k <= B; ++k) sol.delta[k - 1] = U[k] - U[k - 1];
  const std::size_t F = lambda.size();
  sol.log_A.assign(F, std::vector<double>(B + 1, 0.0));
  for (std::size_t f = 0; f < F; ++f) {
    for (int k = 1; k <= B; ++k) {
      const double num = (B - k + 1) * up[k - 1];
      sol.log_A[f][k] = num > 0.0 ? sol.log_A[f][k - 1] + std::log(num / (k * down[k])) : -HUGE_VAL;
    }
  }

  sol.pi.assign(F, std::vector<double>(B + 1, 0.0));
  std::vector<double> logw(B + 1);
  auto fill = [&](double T) {
    ld copies = 0.0L;
    for (std::size_t f = 0; f < F; ++f) {
      auto& p = sol.pi[f];
      const double l = lambda[f];
      if (!(l > 0.0) || !(adm > 0.0)) {
        std::fill(p.begin(), p.end(), 0.0);
        p[0] = 1.0;
        continue;
      }
      logw[0] = 0.0;
      double top = 0.0;
      for (int k = 1; k <= B; ++k) {
        const double birth = (B - k + 1) * adm * l * up[k - 1];
        if (!(birth > 0.0) || logw[k - 1] == -HUGE_VAL) {
          logw[k] = -HUGE_VAL;
          continue;
        }
        logw[k] = logw[k - 1] + std::log(birth) - std::log(static_cast<double>(k)) - log_nu(kind, l * down[k], T);
        top = std::max(top, logw[k]);
      }
      double z = 0.0;
      for (int k = 0; k <= B; ++k) {
        p[k] = logw[k] == -HUGE_VAL ? 0.0 : std::exp(logw[k] - top);
        z += p[k];
      }
      for (int k = 0; k <= B; ++k) {
        p[k] /= z;
        copies += k * static_cast<ld>(p[k]);
      }
    }
    return static_cast<double>(copies);
  };

  if (!(tol > 0.0)) tol = 1e-4 * C;
  // Initial guess: isolated cache fed by the whole cell.
  std::vector<double> Lambda(F), ones(F, 1.0);
  for (std::size_t f = 0; f < F; ++f) Lambda[f] = lambda[f] * binom(B - 1, d - 1) * m;
  int evals = 0;
  const double T0 = che_time(kind, adm, Lambda, ones, C, evals);
  auto g = [&](double u) { return fill(std::exp(u)) / B - C; };
  const double u = log_root(g, std::log(T0), 0.25 * tol, evals, "solve_trefoil");
  sol.T = std::exp(u);
  sol.copies = fill(sol.T);
  sol.residual = std::fabs(sol.copies / B - C);
  sol.evaluations = evals;
  ld hits = 0.0L, total = 0.0L;
  for (std::size_t f = 0; f < F; ++f) {
    ld eu = 0.0L;
    for (int k = 0; k <= B; ++k) eu += sol.pi[f][k] * static_cast<ld>(U[k]);
    hits += lambda[f] * eu;
    total += lambda[f] * static_cast<ld>(M);
  }
  sol.hit_ratio = static_cast<double>(hits / total);
  if (sol.residual > tol) throw ConvergenceError("solve_trefoil: occupancy off target", {sol.residual});
  return sol;
}

std::vector<std::vector<double>> state_distributions(const Topology& topology, const Catalog& catalog,
                                                     const PolicySpec& policy, UpdateRule rule,
                                                     const ModelSolution& solution) {
  if (policy.kind == PolicyKind::kLRU || catalog.onoff) {
    throw ParameterError("state distributions need a single-stage policy under IRM");
  }
  const CoverageMap& cm = topology.coverage;
  const auto lambda = per_mass_rates(catalog, cm.total_mass());
  std::vector<std::vector<double>> out;
  out.reserve(lambda.size());
  for (double l : lambda) out.push_back(stationary(build_chain(cm, rule, policy, l, solution.T)));
  return out;
}

}  // namespace cellcache
