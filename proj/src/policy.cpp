#include "cellcache/policy.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "cellcache/errors.hpp"

namespace cellcache {

std::string to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::LRU: return "LRU";
    case PolicyKind::qLRU: return "qLRU";
    case PolicyKind::FIFO: return "FIFO";
    case PolicyKind::RANDOM: return "RANDOM";
    case PolicyKind::kLRU: return "kLRU";
  }
  return "?";
}

PolicyKind parse_policy(std::string_view name) {
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "lru") return PolicyKind::LRU;
  if (s == "qlru") return PolicyKind::qLRU;
  if (s == "fifo") return PolicyKind::FIFO;
  if (s == "random") return PolicyKind::RANDOM;
  if (s == "klru" || s == "2lru") return PolicyKind::kLRU;
  throw ParameterError("unknown policy '" + std::string(name) + "'");
}

double PolicySpec::q_at(int b) const {
  if (q_exponents.empty()) return q;
  if (b < 0 || static_cast<std::size_t>(b) >= q_exponents.size()) {
    throw ParameterError("q exponent missing for cache " + std::to_string(b));
  }
  return std::pow(q, q_exponents[b]);
}

int PolicySpec::stage_capacity(int stage, int data_capacity) const {
  if (stage >= k - 1 || stage_capacities.empty()) return data_capacity;
  return stage_capacities.at(stage);
}

void PolicySpec::validate() const {
  if (!(q >= 0.0 && q <= 1.0)) throw ParameterError("q must be in [0, 1]");
  for (double g : q_exponents) {
    if (!(g > 0.0) || !std::isfinite(g)) throw ParameterError("q exponents must be positive");
  }
  if (kind == PolicyKind::kLRU) {
    if (k < 2) throw ParameterError("kLRU needs k >= 2");
    if (!stage_capacities.empty() && static_cast<int>(stage_capacities.size()) != k - 1) {
      throw ParameterError("kLRU needs k-1 metadata stage capacities");
    }
    for (int c : stage_capacities) {
      if (c < 1) throw ParameterError("stage capacities must be >= 1");
    }
  }
}

PolicySpec lru() { return {}; }
PolicySpec qlru(double q) {
  PolicySpec p;
  p.kind = PolicyKind::qLRU;
  p.q = q;
  return p;
}
PolicySpec fifo() {
  PolicySpec p;
  p.kind = PolicyKind::FIFO;
  return p;
}
PolicySpec random_policy() {
  PolicySpec p;
  p.kind = PolicyKind::RANDOM;
  return p;
}
PolicySpec klru(int k) {
  PolicySpec p;
  p.kind = PolicyKind::kLRU;
  p.k = k;
  return p;
}

void to_json(nlohmann::json& j, const PolicySpec& p) {
  j = {{"name", to_string(p.kind)}};
  if (p.kind == PolicyKind::qLRU) j["q"] = p.q;
  if (!p.q_exponents.empty()) j["q_exponents"] = p.q_exponents;
  if (p.kind == PolicyKind::kLRU) {
    j["k"] = p.k;
    if (!p.stage_capacities.empty()) j["stage_capacities"] = p.stage_capacities;
  }
}

void from_json(const nlohmann::json& j, PolicySpec& p) {
  static const std::vector<std::string> known = {"name", "q", "q_exponents", "k", "stage_capacities"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError("policy: unknown key '" + key + "'");
    }
  }
  p = PolicySpec{};
  const auto name = j.at("name").get<std::string>();
  p.kind = parse_policy(name);
  if (name == "2lru" || name == "2LRU") p.k = 2;
  p.q = j.value("q", 1.0);
  if (j.contains("q_exponents")) p.q_exponents = j.at("q_exponents").get<std::vector<double>>();
  if (j.contains("k")) p.k = j.at("k").get<int>();
  if (j.contains("stage_capacities")) p.stage_capacities = j.at("stage_capacities").get<std::vector<int>>();
  p.validate();
}

void Cache::List::init(std::size_t F, int cap) {
  prev.assign(F, -1);
  next.assign(F, -1);
  in.assign(F, 0);
  head = tail = -1;
  size = 0;
  capacity = cap;
}

void Cache::List::push_front(ContentId f) {
  const auto i = static_cast<std::int32_t>(f);
  prev[f] = -1;
  next[f] = head;
  if (head >= 0) prev[head] = i;
  head = i;
  if (tail < 0) tail = i;
  in[f] = 1;
  ++size;
}

void Cache::List::erase(ContentId f) {
  const auto p = prev[f], n = next[f];
  if (p >= 0) next[p] = n; else head = n;
  if (n >= 0) prev[n] = p; else tail = p;
  prev[f] = next[f] = -1;
  in[f] = 0;
  --size;
}

ContentId Cache::List::pop_back() {
  const auto f = static_cast<ContentId>(tail);
  erase(f);
  return f;
}

std::vector<ContentId> Cache::List::items() const {
  std::vector<ContentId> out;
  out.reserve(size);
  for (auto i = head; i >= 0; i = next[i]) out.push_back(static_cast<ContentId>(i));
  return out;
}

void Cache::List::clear() {
  for (auto i = head; i >= 0;) {
    const auto n = next[i];
    prev[i] = next[i] = -1;
    in[i] = 0;
    i = n;
  }
  head = tail = -1;
  size = 0;
}

Cache::Cache(const PolicySpec& spec, int capacity, std::size_t content_count, std::uint64_t seed, int bs)
    : kind_(spec.kind), capacity_(capacity), admission_(spec.admission_at(bs)), rng_(seed) {
  spec.validate();
  if (capacity < 0) throw ParameterError("cache capacity must be >= 0");
  if (kind_ == PolicyKind::RANDOM) {
    slot_of_.assign(content_count, -1);
    slots_.reserve(capacity);
    return;
  }
  const int stages = kind_ == PolicyKind::kLRU ? spec.k : 1;
  stages_.resize(stages);
  for (int s = 0; s < stages; ++s) stages_[s].init(content_count, spec.stage_capacity(s, capacity));
}

bool Cache::lookup(ContentId f) const {
  if (kind_ == PolicyKind::RANDOM) return slot_of_[f] >= 0;
  return stages_.back().contains(f);
}

RequestOutcome Cache::on_request(ContentId f, bool update_allowed) {
  if (!update_allowed) return {lookup(f), false, -1};
  switch (kind_) {
    case PolicyKind::RANDOM: return random_request(f);
    case PolicyKind::kLRU: return klru_request(f);
    default: return list_request(f);
  }
}

RequestOutcome Cache::list_request(ContentId f) {
  List& l = stages_.front();
  RequestOutcome out;
  if (l.contains(f)) {
    out.hit = true;
    if (kind_ != PolicyKind::FIFO) l.move_to_front(f);
    return out;
  }
  if (capacity_ == 0) return out;
  if (kind_ == PolicyKind::qLRU && !bernoulli(rng_, admission_)) return out;
  if (static_cast<int>(l.size) >= capacity_) out.evicted = l.pop_back();
  l.push_front(f);
  out.inserted = true;
  return out;
}

RequestOutcome Cache::random_request(ContentId f) {
  RequestOutcome out;
  if (slot_of_[f] >= 0) {
    out.hit = true;
    return out;
  }
  if (capacity_ == 0) return out;
  if (static_cast<int>(slots_.size()) >= capacity_) {
    const auto victim_slot = uniform_index(rng_, slots_.size());
    const ContentId victim = slots_[victim_slot];
    slot_of_[victim] = -1;
    out.evicted = victim;
    slots_[victim_slot] = f;
    slot_of_[f] = static_cast<std::int32_t>(victim_slot);
  } else {
    slot_of_[f] = static_cast<std::int32_t>(slots_.size());
    slots_.push_back(f);
  }
  out.inserted = true;
  return out;
}

RequestOutcome Cache::klru_request(ContentId f) {
  // Stage s admits f only if stage s-1 held it when the request arrived.
  RequestOutcome out;
  bool below = true;
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    List& l = stages_[s];
    const bool here = l.contains(f);
    const bool last = s + 1 == stages_.size();
    if (here) {
      l.move_to_front(f);
    } else if (below && l.capacity > 0) {
      std::int64_t ev = -1;
      if (static_cast<int>(l.size) >= l.capacity) ev = l.pop_back();
      l.push_front(f);
      if (last) {
        out.inserted = true;
        out.evicted = ev;
      }
    }
    if (last) out.hit = here;
    below = here;
  }
  return out;
}

std::vector<ContentId> Cache::contents() const {
  if (kind_ == PolicyKind::RANDOM) return slots_;
  return stages_.back().items();
}

std::vector<ContentId> Cache::stage_contents(int stage) const {
  if (kind_ == PolicyKind::RANDOM) return stage == 0 ? slots_ : std::vector<ContentId>{};
  return stages_.at(stage).items();
}

std::size_t Cache::size() const {
  if (kind_ == PolicyKind::RANDOM) return slots_.size();
  return stages_.back().size;
}

void Cache::load(const std::vector<ContentId>& items) {
  if (static_cast<int>(items.size()) > capacity_) throw CapacityError("static placement exceeds cache capacity");
  if (kind_ == PolicyKind::RANDOM) {
    for (auto f : slots_) slot_of_[f] = -1;
    slots_.clear();
    for (auto f : items) {
      if (slot_of_[f] >= 0) continue;
      slot_of_[f] = static_cast<std::int32_t>(slots_.size());
      slots_.push_back(f);
    }
    return;
  }
  for (auto& l : stages_) l.clear();
  // Reverse so that items[0] ends up at the head.
  for (auto it = items.rbegin(); it != items.rend(); ++it) {
    if (!stages_.back().contains(*it)) stages_.back().push_front(*it);
  }
}

std::string to_string(TimerKind kind) {
  return kind == TimerKind::Deterministic ? "deterministic" : "exponential";
}

TimerCache::TimerCache(TimerKind kind, double mean, bool renew_on_hit, std::size_t content_count,
                       std::uint64_t seed)
    : kind_(kind), mean_(mean), renew_(renew_on_hit), rng_(seed), expiry_(content_count, -HUGE_VAL) {
  if (!(mean > 0.0) || !std::isfinite(mean)) throw ParameterError("timer mean must be positive and finite");
}

double TimerCache::draw() {
  return kind_ == TimerKind::Deterministic ? mean_ : exponential(rng_, 1.0 / mean_);
}

void TimerCache::advance(double now) {
  if (now < now_) throw ProtocolError("timer cache: out-of-order timestamp");
  now_ = now;
}

bool TimerCache::timer_on_request(ContentId f, double now, bool update_allowed) {
  advance(now);
  const bool hit = expiry_[f] > now;
  if (!update_allowed) return hit;
  if (!hit) {
    expiry_[f] = now + draw();
  } else if (renew_) {
    expiry_[f] = now + draw();
  }
  return hit;
}

void TimerCache::timer_tick(double now) {
  advance(now);
  for (double& e : expiry_) {
    if (e <= now) e = -HUGE_VAL;
  }
}

std::size_t TimerCache::size(double now) const {
  return static_cast<std::size_t>(
      std::count_if(expiry_.begin(), expiry_.end(), [now](double e) { return e > now; }));
}

}  // namespace cellcache
