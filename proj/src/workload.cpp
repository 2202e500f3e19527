#include "cellcache/workload.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "cellcache/errors.hpp"

namespace cellcache {

std::vector<double> per_mass_rates(const Catalog& catalog, double total_mass) {
  std::vector<double> rates = catalog.lambda;
  for (double l : rates) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw ParameterError("catalog rates must be finite and >= 0");
  }
  if (catalog.total_rate) {
    if (!(total_mass > 0.0)) throw ParameterError("total mass must be positive");
    const double sum = std::accumulate(rates.begin(), rates.end(), 0.0);
    if (!(sum > 0.0)) throw ParameterError("catalog weights sum to zero");
    const double scale = *catalog.total_rate / (sum * total_mass);
    for (double& l : rates) l *= scale;
  }
  return rates;
}

double zipf_normalization(int F, double s) {
  // Summed smallest-first to limit rounding error.
  double sum = 0.0;
  for (int f = F; f >= 1; --f) sum += std::pow(static_cast<double>(f), -s);
  return sum;
}

Catalog zipf_catalog(int F, double s, double total_rate) {
  if (F < 1) throw ParameterError("zipf: F must be >= 1");
  if (!(s >= 0.0)) throw ParameterError("zipf: exponent must be >= 0");
  if (!(total_rate > 0.0)) throw ParameterError("zipf: total_rate must be positive");
  const double norm = zipf_normalization(F, s);
  Catalog c;
  c.lambda.resize(F);
  for (int f = 1; f <= F; ++f) c.lambda[f - 1] = std::pow(static_cast<double>(f), -s) / norm;
  c.total_rate = total_rate;
  return c;
}

void to_json(nlohmann::json& j, const Catalog& c) {
  j = nlohmann::json::object();
  j["F"] = c.lambda.size();
  j["lambdas"] = c.lambda;
  if (c.total_rate) j["total_rate"] = *c.total_rate;
  if (c.onoff) j["onoff"] = {{"t_on", c.onoff->t_on}, {"t_off", c.onoff->t_off}};
}

void from_json(const nlohmann::json& j, Catalog& c) {
  static const std::vector<std::string> known = {"F", "s", "lambdas", "total_rate", "onoff"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError("catalog: unknown key '" + key + "'");
    }
  }
  if (j.contains("lambdas")) {
    c.lambda = j.at("lambdas").get<std::vector<double>>();
    if (j.contains("F") && j.at("F").get<std::size_t>() != c.lambda.size()) {
      throw ConfigError("catalog: F does not match the number of lambdas");
    }
    c.total_rate.reset();
    if (j.contains("total_rate")) c.total_rate = j.at("total_rate").get<double>();
  } else if (j.contains("s")) {
    if (!j.contains("F")) throw ConfigError("catalog: zipf catalogs need F");
    c = zipf_catalog(j.at("F").get<int>(), j.at("s").get<double>(), j.value("total_rate", 1.0));
  } else {
    throw ConfigError("catalog: needs either 's' or 'lambdas'");
  }
  c.onoff.reset();
  if (j.contains("onoff")) {
    OnOff o{j.at("onoff").at("t_on").get<double>(), j.at("onoff").at("t_off").get<double>()};
    if (!(o.t_on > 0.0) || !(o.t_off >= 0.0)) throw ConfigError("catalog: onoff means must be positive");
    c.onoff = o;
  }
}

AtomSampler::AtomSampler(const CoverageMap& cm) : cm_(&cm) {
  std::vector<double> w;
  w.reserve(cm.atoms().size());
  for (const auto& a : cm.atoms()) w.push_back(a.mass);
  if (w.empty()) throw DegenerateTopologyError("coverage map has no atoms");
  table_ = AliasTable(w);
}

void AtomSampler::draw(Rng& rng, Request& out) const {
  const Atom& a = cm_->atoms()[table_.sample(rng)];
  out.mask = a.mask;
  const int k = size_of(a.mask);
  int pick;
  if (a.ref.empty()) {
    pick = static_cast<int>(uniform_index(rng, k));
  } else {
    double u = uniform01(rng);
    pick = k - 1;
    for (int i = 0; i < k; ++i) {
      u -= a.ref[i];
      if (u < 0.0) {
        pick = i;
        break;
      }
    }
  }
  BsSet m = a.mask;
  for (int i = 0; i < pick; ++i) m &= m - 1;
  out.ref = std::countr_zero(m);
}

IrmStream::IrmStream(const Catalog& catalog, const Topology& topology, double horizon, std::uint64_t seed)
    : atoms_(topology.coverage), rng_(seed), horizon_(horizon) {
  const double mass = topology.coverage.total_mass();
  const auto rates = per_mass_rates(catalog, mass);
  contents_ = AliasTable(rates);
  total_rate_ = std::accumulate(rates.begin(), rates.end(), 0.0) * mass;
}

bool IrmStream::next(Request& out) {
  if (horizon_ <= 0.0) return false;
  now_ += exponential(rng_, total_rate_);
  if (now_ > horizon_) {
    horizon_ = 0.0;
    return false;
  }
  out.time = now_;
  out.content = static_cast<ContentId>(contents_.sample(rng_));
  atoms_.draw(rng_, out);
  return true;
}

OnOffStream::OnOffStream(const Catalog& catalog, const Topology& topology, double horizon,
                         std::uint64_t seed)
    : atoms_(topology.coverage), rng_(seed), horizon_(horizon) {
  if (!catalog.onoff) throw ConfigError("onoff stream requires onoff parameters in the catalog");
  onoff_ = *catalog.onoff;
  const double mass = topology.coverage.total_mass();
  rate_ = per_mass_rates(catalog, mass);
  for (double& r : rate_) r *= mass;
  const std::size_t F = rate_.size();
  on_.assign(F, false);
  switch_at_.assign(F, 0.0);
  heap_.reserve(F);
  for (std::size_t f = 0; f < F; ++f) {
    if (rate_[f] <= 0.0) continue;
    on_[f] = onoff_.t_off <= 0.0 || bernoulli(rng_, onoff_.on_fraction());
    const double mean = on_[f] ? onoff_.t_on : onoff_.t_off;
    switch_at_[f] = on_[f] && onoff_.t_off <= 0.0 ? HUGE_VAL : exponential(rng_, 1.0 / mean);
    schedule(static_cast<ContentId>(f), 0.0);
  }
}

void OnOffStream::schedule(ContentId f, double from) {
  double t = switch_at_[f];
  if (on_[f]) t = std::min(t, from + exponential(rng_, rate_[f]));
  if (t > horizon_) return;
  heap_.push_back({t, f});
  std::push_heap(heap_.begin(), heap_.end(), std::greater<>{});
}

bool OnOffStream::next(Request& out) {
  while (!heap_.empty()) {
    std::pop_heap(heap_.begin(), heap_.end(), std::greater<>{});
    const Pending ev = heap_.back();
    heap_.pop_back();
    const ContentId f = ev.content;
    if (ev.time == switch_at_[f]) {
      on_[f] = !on_[f];
      if (!on_[f] && onoff_.t_off <= 0.0) {
        on_[f] = true;  // degenerate OFF period
      }
      const double mean = on_[f] ? onoff_.t_on : onoff_.t_off;
      switch_at_[f] = ev.time + exponential(rng_, 1.0 / mean);
      schedule(f, ev.time);
      continue;
    }
    out.time = ev.time;
    out.content = f;
    atoms_.draw(rng_, out);
    schedule(f, ev.time);
    return true;
  }
  return false;
}

std::vector<Request> collect(RequestStream& stream) {
  std::vector<Request> out;
  Request r;
  while (stream.next(r)) out.push_back(r);
  return out;
}

std::vector<Request> irm_stream(const Catalog& catalog, const Topology& topology, double horizon,
                                std::uint64_t seed) {
  IrmStream s(catalog, topology, horizon, seed);
  return collect(s);
}

std::vector<Request> onoff_stream(const Catalog& catalog, const Topology& topology, double horizon,
                                  std::uint64_t seed) {
  OnOffStream s(catalog, topology, horizon, seed);
  return collect(s);
}

namespace {

bool parse_double(std::string_view s, double& out) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size() && std::isfinite(out);
}

bool parse_u64(std::string_view s, std::uint64_t& out) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

}  // namespace

Trace parse_trace(std::istream& in, const Topology& topology, std::uint64_t seed) {
  Trace trace;
  AtomSampler sampler(topology.coverage);
  Rng rng(seed);
  std::unordered_map<std::uint64_t, ContentId> dense;
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string_view> fields;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view(line);
    if (!view.empty() && view.back() == '\r') view.remove_suffix(1);
    if (view.empty()) continue;
    if (line_no == 1 && view.substr(0, 2) == "t,") continue;

    fields.clear();
    std::size_t start = 0;
    while (true) {
      const auto comma = view.find(',', start);
      fields.push_back(view.substr(start, comma == std::string_view::npos ? comma : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (fields.size() != 2 && fields.size() != 4) {
      throw ParseError("expected 't,content_id[,x,y]', got " + std::to_string(fields.size()) + " fields",
                       line_no);
    }
    Request r;
    std::uint64_t id = 0;
    if (!parse_double(fields[0], r.time)) throw ParseError("bad timestamp", line_no);
    if (!parse_u64(fields[1], id)) throw ParseError("bad content id", line_no);
    ++trace.rows;
    if (fields.size() == 4) {
      Point p;
      if (!parse_double(fields[2], p.x) || !parse_double(fields[3], p.y)) {
        throw ParseError("bad coordinates", line_no);
      }
      r.mask = topology.cover(p);
      if (r.mask == 0) {
        ++trace.dropped;
        continue;
      }
      r.ref = topology.nearest(p);
    } else {
      sampler.draw(rng, r);
    }
    auto [it, inserted] = dense.try_emplace(id, static_cast<ContentId>(trace.content_ids.size()));
    if (inserted) trace.content_ids.push_back(id);
    r.content = it->second;
    trace.requests.push_back(r);
  }
  std::stable_sort(trace.requests.begin(), trace.requests.end(),
                   [](const Request& a, const Request& b) { return a.time < b.time; });
  return trace;
}

Trace load_trace(const std::string& path, const Topology& topology, std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open trace '" + path + "'");
  return parse_trace(in, topology, seed);
}

void write_trace_csv(std::ostream& out, std::span<const Request> requests) {
  out << "t,content_id\n";
  out << std::setprecision(17);
  for (const auto& r : requests) out << r.time << ',' << r.content << '\n';
}

Catalog estimate_rates(std::span<const Request> stream, double t0, double t1, double total_mass,
                       std::size_t content_count) {
  if (!(t1 > t0)) throw ParameterError("estimate_rates: empty time window");
  if (!(total_mass > 0.0)) throw ParameterError("estimate_rates: total mass must be positive");
  Catalog c;
  c.lambda.assign(content_count, 0.0);
  std::size_t seen = 0;
  for (const auto& r : stream) {
    if (r.time < t0 || r.time >= t1) continue;
    if (r.content >= c.lambda.size()) c.lambda.resize(r.content + 1, 0.0);
    c.lambda[r.content] += 1.0;
    ++seen;
  }
  const double scale = 1.0 / ((t1 - t0) * total_mass);
  for (double& l : c.lambda) l *= scale;
  c.empty_window = seen == 0;
  return c;
}

std::vector<Request> churn_trace(const ChurnTraceSpec& spec, const Topology& topology, std::uint64_t seed) {
  if (spec.windows < 1 || spec.slots < 1) throw ParameterError("churn trace: windows and slots must be >= 1");
  if (!(spec.window_length > 0.0) || !(spec.total_rate > 0.0)) {
    throw ParameterError("churn trace: window length and rate must be positive");
  }
  if (!(spec.churn >= 0.0 && spec.churn <= 1.0)) throw ParameterError("churn trace: churn must be in [0, 1]");
  Rng rng(seed);
  const Catalog weights = zipf_catalog(spec.slots, spec.s, 1.0);
  AliasTable slot_table(weights.lambda);
  AtomSampler atoms(topology.coverage);

  std::vector<ContentId> owner(spec.slots);
  std::iota(owner.begin(), owner.end(), ContentId{0});
  ContentId next_id = static_cast<ContentId>(spec.slots);

  std::vector<Request> out;
  double t = 0.0;
  for (int w = 0; w < spec.windows; ++w) {
    if (w > 0) {
      for (auto& o : owner) {
        if (bernoulli(rng, spec.churn)) o = next_id++;
      }
    }
    const double end = (w + 1) * spec.window_length;
    t = w * spec.window_length;
    while (true) {
      t += exponential(rng, spec.total_rate);
      if (t >= end) break;
      Request r;
      r.time = t;
      r.content = owner[slot_table.sample(rng)];
      atoms.draw(rng, r);
      out.push_back(r);
    }
  }
  return out;
}

}  // namespace cellcache
