#include "cellcache/simulator.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "cellcache/errors.hpp"

namespace cellcache {

std::string to_string(UpdateRule rule) {
  switch (rule) {
    case UpdateRule::Blind: return "Blind";
    case UpdateRule::One: return "One";
    case UpdateRule::All: return "All";
    case UpdateRule::Lazy: return "Lazy";
  }
  return "?";
}

UpdateRule parse_rule(std::string_view name) {
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "blind") return UpdateRule::Blind;
  if (s == "one") return UpdateRule::One;
  if (s == "all") return UpdateRule::All;
  if (s == "lazy") return UpdateRule::Lazy;
  throw ParameterError("unknown update rule '" + std::string(name) + "'");
}

namespace {

int nth_member(BsSet set, std::uint64_t n) {
  for (std::uint64_t i = 0; i < n; ++i) set &= set - 1;
  return std::countr_zero(set);
}

}  // namespace

Route route(BsSet I, BsSet holders, Rng& rng) {
  if (I == 0) throw ProtocolError("route: empty covering set");
  Route r;
  r.J = I & holders;
  r.hit = r.J != 0;
  const BsSet pool = r.hit ? r.J : I;
  const int n = size_of(pool);
  r.server = n == 1 ? std::countr_zero(pool) : nth_member(pool, uniform_index(rng, n));
  return r;
}

bool update_verdict(UpdateRule rule, BsSet I, BsSet J, int server, int b, int ref) {
  (void)I;
  switch (rule) {
    case UpdateRule::Blind: return b == server;
    case UpdateRule::All: return true;
    case UpdateRule::One: return b == ref;
    case UpdateRule::Lazy: return b == server && size_of(J) <= 1;
  }
  return false;
}

void to_json(nlohmann::json& j, const SimMetrics& m) {
  j = nlohmann::json::object();
  j["hit_ratio"] = m.hit_ratio();
  j["stderr"] = m.stderr_hit;
  j["requests"] = m.requests;
  j["hits"] = m.hits;
  j["total_requests"] = m.total_requests;
  j["warmup_cutoff"] = m.warmup_cutoff;
  nlohmann::json per_cache = nlohmann::json::array();
  for (std::size_t b = 0; b < m.cache_hits.size(); ++b) {
    per_cache.push_back({{"bs", b}, {"hits", m.cache_hits[b]}, {"served", m.cache_served[b]}});
  }
  j["per_cache"] = per_cache;
  nlohmann::json windows = nlohmann::json::array();
  for (const auto& w : m.windows) {
    windows.push_back({{"t0", w.t0}, {"t1", w.t1}, {"requests", w.requests}, {"hits", w.hits},
                       {"hit_ratio", w.hit_ratio()}});
  }
  j["windows"] = windows;
}

namespace {

struct Recorder {
  SimMetrics m;
  double cutoff = 0.0;
  std::optional<std::size_t> cutoff_count;
  double window = 0.0;
  double batch_len = 0.0;
  int batches = 0;
  std::vector<std::uint64_t> batch_req, batch_hit;

  Recorder(int B, std::size_t F, double cut, std::optional<std::size_t> count, double win,
           std::optional<double> horizon, int nb)
      : cutoff(cut), cutoff_count(count), window(win) {
    m.content_requests.assign(F, 0);
    m.content_hits.assign(F, 0);
    m.cache_hits.assign(B, 0);
    m.cache_served.assign(B, 0);
    m.warmup_cutoff = cut;
    if (horizon && *horizon > cut && nb > 1) {
      batches = nb;
      batch_len = (*horizon - cut) / nb;
      batch_req.assign(nb, 0);
      batch_hit.assign(nb, 0);
    }
  }

  bool counting(const Request& r) const {
    if (cutoff_count) return m.total_requests > *cutoff_count;
    return r.time >= cutoff;
  }

  void record(const Request& r, const Route& rt) {
    ++m.total_requests;
    m.end_time = r.time;
    if (window > 0.0) {
      const auto w = static_cast<std::size_t>(r.time / window);
      while (m.windows.size() <= w) {
        const double t0 = m.windows.size() * window;
        m.windows.push_back({t0, t0 + window, 0, 0});
      }
      ++m.windows[w].requests;
      m.windows[w].hits += rt.hit;
    }
    if (!counting(r)) {
      m.warmup_cutoff = r.time;
      return;
    }
    ++m.requests;
    m.hits += rt.hit;
    ++m.content_requests[r.content];
    m.content_hits[r.content] += rt.hit;
    ++m.cache_served[rt.server];
    m.cache_hits[rt.server] += rt.hit;
    if (batches > 0) {
      auto k = static_cast<int>((r.time - cutoff) / batch_len);
      k = std::clamp(k, 0, batches - 1);
      ++batch_req[k];
      batch_hit[k] += rt.hit;
    }
  }

  SimMetrics finish() {
    if (!cutoff_count) m.warmup_cutoff = cutoff;
    std::vector<double> ratios;
    for (int k = 0; k < batches; ++k) {
      if (batch_req[k] > 0) ratios.push_back(static_cast<double>(batch_hit[k]) / batch_req[k]);
    }
    if (ratios.size() >= 2) {
      double mean = 0.0;
      for (double x : ratios) mean += x;
      mean /= ratios.size();
      double ss = 0.0;
      for (double x : ratios) ss += (x - mean) * (x - mean);
      m.stderr_hit = std::sqrt(ss / (ratios.size() - 1) / ratios.size());
    } else if (m.requests > 0) {
      const double p = m.hit_ratio();
      m.stderr_hit = std::sqrt(p * (1.0 - p) / m.requests);
    }
    return std::move(m);
  }
};

double resolve_cutoff(std::optional<double> warmup_time, std::optional<std::size_t> warmup_requests,
                      double fraction, std::optional<double> horizon) {
  if (warmup_time) return *warmup_time;
  if (warmup_requests) return 0.0;
  if (!(fraction >= 0.0 && fraction < 1.0)) throw ParameterError("warmup fraction must be in [0, 1)");
  if (fraction == 0.0) return -HUGE_VAL;
  if (!horizon) throw ParameterError("a warmup fraction needs a known horizon");
  return fraction * *horizon;
}

void check_request(const Request& r, const Topology& topo, std::size_t F, double last) {
  if (r.time < last) throw ProtocolError("requests out of time order");
  if (r.mask == 0) throw ProtocolError("request with empty covering set");
  if ((r.mask & ~full_set(topo.bs_count)) != 0) throw ProtocolError("request covers an unknown BS");
  if (r.content >= F) throw ProtocolError("content id outside the catalog");
}

}  // namespace

SimMetrics run(const Topology& topology, RequestStream& stream, const SimConfig& config) {
  const int B = topology.bs_count;
  const std::size_t F = config.content_count;
  if (F == 0) throw ParameterError("simulation needs the catalog size");
  if (config.capacity < 0) throw ParameterError("capacity must be >= 0");
  if (config.horizon && config.warmup_time && *config.warmup_time >= *config.horizon) {
    throw ParameterError("warmup must end before the horizon");
  }
  const double cutoff =
      resolve_cutoff(config.warmup_time, config.warmup_requests, config.warmup_fraction, config.horizon);
  Recorder rec(B, F, cutoff, config.warmup_time ? std::nullopt : config.warmup_requests, config.window,
               config.horizon, config.batches);

  Rng route_rng(derive_seed(config.seed, "route"));
  Request r;
  double last = -HUGE_VAL;

  if (config.static_holders) {
    const auto& holders = *config.static_holders;
    if (holders.size() < F) throw ParameterError("static placement does not cover the catalog");
    while (stream.next(r)) {
      check_request(r, topology, F, last);
      last = r.time;
      rec.record(r, route(r.mask, holders[r.content], route_rng));
    }
    SimMetrics m = rec.finish();
    m.final_contents.assign(B, {});
    for (std::size_t f = 0; f < F; ++f) {
      for (int b = 0; b < B; ++b) {
        if (contains(holders[f], b)) m.final_contents[b].push_back(static_cast<ContentId>(f));
      }
    }
    return m;
  }

  std::vector<Cache> caches;
  caches.reserve(B);
  for (int b = 0; b < B; ++b) {
    caches.emplace_back(config.policy, config.capacity, F, derive_seed(config.seed, "cache", b), b);
  }
  std::vector<BsSet> holders(F, 0);

  while (stream.next(r)) {
    check_request(r, topology, F, last);
    last = r.time;
    const Route rt = route(r.mask, holders[r.content], route_rng);
    rec.record(r, rt);
    for (BsSet rest = r.mask; rest; rest &= rest - 1) {
      const int b = std::countr_zero(rest);
      if (!update_verdict(config.rule, r.mask, rt.J, rt.server, b, r.ref)) continue;
      const RequestOutcome out = caches[b].on_request(r.content, true);
      if (out.inserted) holders[r.content] |= bit(b);
      if (out.evicted >= 0) holders[out.evicted] &= ~bit(b);
    }
  }

  SimMetrics m = rec.finish();
  m.final_contents.reserve(B);
  for (const auto& c : caches) m.final_contents.push_back(c.contents());
  return m;
}

SimMetrics run(const Topology& topology, std::span<const Request> requests, const SimConfig& config) {
  SimConfig cfg = config;
  if (cfg.content_count == 0) {
    ContentId top = 0;
    for (const auto& r : requests) top = std::max(top, r.content);
    cfg.content_count = requests.empty() ? 1 : top + std::size_t{1};
  }
  if (!cfg.horizon) cfg.horizon = requests.empty() ? 0.0 : requests.back().time;
  VectorStream s(requests);
  return run(topology, s, cfg);
}

SimMetrics run_timer_experiment(const Topology& topology, RequestStream& stream, const TimerConfig& config) {
  const int B = topology.bs_count;
  const std::size_t F = config.content_count;
  if (F == 0) throw ParameterError("timer experiment needs the catalog size");
  std::vector<double> T = config.T;
  if (T.size() == 1) T.assign(B, T.front());
  if (static_cast<int>(T.size()) != B) throw ParameterError("need one timer mean per cache");
  const double cutoff = resolve_cutoff(config.warmup_time, std::nullopt, config.warmup_fraction, config.horizon);
  Recorder rec(B, F, cutoff, std::nullopt, 0.0, config.horizon, config.batches);

  std::vector<TimerCache> caches;
  caches.reserve(B);
  for (int b = 0; b < B; ++b) {
    caches.emplace_back(config.kind, T[b], config.renew_on_hit, F, derive_seed(config.seed, "timer", b));
  }
  Rng route_rng(derive_seed(config.seed, "route"));
  Request r;
  double last = -HUGE_VAL;
  while (stream.next(r)) {
    check_request(r, topology, F, last);
    last = r.time;
    BsSet holders = 0;
    for (BsSet rest = r.mask; rest; rest &= rest - 1) {
      const int b = std::countr_zero(rest);
      if (caches[b].lookup(r.content, r.time)) holders |= bit(b);
    }
    const Route rt = route(r.mask, holders, route_rng);
    rec.record(r, rt);
    for (BsSet rest = r.mask; rest; rest &= rest - 1) {
      const int b = std::countr_zero(rest);
      caches[b].timer_on_request(r.content, r.time,
                                 update_verdict(config.rule, r.mask, rt.J, rt.server, b, r.ref));
    }
  }
  return rec.finish();
}

}  // namespace cellcache
