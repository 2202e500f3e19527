#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cellcache/random.hpp"
#include "cellcache/workload.hpp"

namespace cellcache {

enum class PolicyKind { LRU, qLRU, FIFO, RANDOM, kLRU };

std::string to_string(PolicyKind kind);
// Accepts "lru", "qlru", "fifo", "random", "klru" and "2lru" (case-insensitive).
PolicyKind parse_policy(std::string_view name);

struct PolicySpec {
  PolicyKind kind = PolicyKind::LRU;
  double q = 1.0;                    // qLRU admission probability
  std::vector<double> q_exponents;   // per-cell gamma_b, q_b = q^gamma_b; empty = uniform
  int k = 2;                         // kLRU stages, the last one holds data
  std::vector<int> stage_capacities; // metadata stages; empty = C each

  double q_at(int b) const;
  // Admission probability actually applied on a miss at cache b.
  double admission_at(int b) const { return kind == PolicyKind::qLRU ? q_at(b) : 1.0; }
  int stage_capacity(int stage, int data_capacity) const;
  void validate() const;
};

PolicySpec lru();
PolicySpec qlru(double q);
PolicySpec fifo();
PolicySpec random_policy();
PolicySpec klru(int k = 2);

void to_json(nlohmann::json& j, const PolicySpec& p);
void from_json(const nlohmann::json& j, PolicySpec& p);

struct RequestOutcome {
  bool hit = false;       // data-stage membership before the request
  bool inserted = false;  // f entered the data stage
  std::int64_t evicted = -1;
};

// Capacity-based cache over content ids [0, F).
class Cache {
 public:
  Cache(const PolicySpec& spec, int capacity, std::size_t content_count, std::uint64_t seed, int bs = 0);

  bool lookup(ContentId f) const;
  // update_allowed is the update rule's verdict for this cache; when false the
  // state is left untouched.
  RequestOutcome on_request(ContentId f, bool update_allowed);

  // Data-stage contents, most recent first where the policy keeps an order.
  std::vector<ContentId> contents() const;
  std::vector<ContentId> stage_contents(int stage) const;
  std::size_t size() const;
  int capacity() const { return capacity_; }
  PolicyKind kind() const { return kind_; }

  // Overwrites the data stage (static placement). Metadata stages are cleared.
  void load(const std::vector<ContentId>& items);

 private:
  // Doubly-linked list threaded through arrays indexed by content id.
  struct List {
    std::vector<std::int32_t> prev, next;
    std::vector<std::uint8_t> in;
    std::int32_t head = -1, tail = -1;
    std::size_t size = 0;
    int capacity = 0;

    void init(std::size_t F, int cap);
    bool contains(ContentId f) const { return in[f] != 0; }
    void push_front(ContentId f);
    void erase(ContentId f);
    void move_to_front(ContentId f) {
      if (head == static_cast<std::int32_t>(f)) return;
      erase(f);
      push_front(f);
    }
    ContentId pop_back();
    std::vector<ContentId> items() const;
    void clear();
  };

  RequestOutcome random_request(ContentId f);
  RequestOutcome list_request(ContentId f);
  RequestOutcome klru_request(ContentId f);

  PolicyKind kind_;
  int capacity_;
  double admission_;
  Rng rng_;
  std::vector<List> stages_;  // LRU/qLRU/FIFO: one; kLRU: k
  // RANDOM
  std::vector<ContentId> slots_;
  std::vector<std::int32_t> slot_of_;
};

enum class TimerKind { Deterministic, Exponential };

std::string to_string(TimerKind kind);

// Capacity-free cache where each stored content carries its own timer.
class TimerCache {
 public:
  TimerCache(TimerKind kind, double mean, bool renew_on_hit, std::size_t content_count, std::uint64_t seed);

  bool lookup(ContentId f, double now) const { return expiry_[f] > now; }
  bool timer_on_request(ContentId f, double now, bool update_allowed);
  // Erases every content whose timer has run out by `now`.
  void timer_tick(double now);
  std::size_t size(double now) const;
  double mean() const { return mean_; }

 private:
  double draw();
  void advance(double now);

  TimerKind kind_;
  double mean_;
  bool renew_;
  Rng rng_;
  std::vector<double> expiry_;  // -inf when absent
  double now_ = -HUGE_VAL;
};

}  // namespace cellcache
