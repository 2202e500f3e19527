#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cellcache/geometry.hpp"
#include "cellcache/policy.hpp"
#include "cellcache/random.hpp"
#include "cellcache/workload.hpp"

namespace cellcache {

enum class UpdateRule { Blind, One, All, Lazy };

std::string to_string(UpdateRule rule);
UpdateRule parse_rule(std::string_view name);

struct Route {
  int server = -1;
  BsSet J = 0;
  bool hit = false;
};

// J = I & holders; the server is uniform in J on a hit, uniform in I otherwise.
Route route(BsSet I, BsSet holders, Rng& rng);

// `ref` is the requesting user's reference cache; only the One rule reads it.
bool update_verdict(UpdateRule rule, BsSet I, BsSet J, int server, int b, int ref);

struct SimConfig {
  PolicySpec policy;
  UpdateRule rule = UpdateRule::Blind;
  int capacity = 1;
  std::size_t content_count = 0;  // 0: taken from the catalog/stream
  // Warmup: an explicit time wins over a request count, which wins over a
  // fraction of the horizon.
  std::optional<double> warmup_time;
  std::optional<std::size_t> warmup_requests;
  double warmup_fraction = 0.5;
  std::optional<double> horizon;  // needed for the fraction and for batch means
  double window = 0.0;            // > 0: windowed hit-ratio series
  int batches = 20;
  std::uint64_t seed = 1;
  // Frozen placement: holders per content, no cache is ever updated.
  std::optional<std::vector<BsSet>> static_holders;
};

struct WindowStat {
  double t0 = 0.0;
  double t1 = 0.0;
  std::uint64_t requests = 0;
  std::uint64_t hits = 0;
  double hit_ratio() const { return requests ? static_cast<double>(hits) / requests : 0.0; }
};

struct SimMetrics {
  std::uint64_t total_requests = 0;  // including warmup
  std::uint64_t requests = 0;        // post-warmup
  std::uint64_t hits = 0;
  double warmup_cutoff = 0.0;
  double end_time = 0.0;
  std::vector<std::uint64_t> content_requests;
  std::vector<std::uint64_t> content_hits;
  std::vector<std::uint64_t> cache_hits;    // hits served by each BS
  std::vector<std::uint64_t> cache_served;  // requests routed to each BS
  std::vector<WindowStat> windows;
  double stderr_hit = 0.0;  // batch-means standard error
  std::vector<std::vector<ContentId>> final_contents;

  double hit_ratio() const { return requests ? static_cast<double>(hits) / requests : 0.0; }
};

void to_json(nlohmann::json& j, const SimMetrics& m);

SimMetrics run(const Topology& topology, RequestStream& stream, const SimConfig& config);
SimMetrics run(const Topology& topology, std::span<const Request> requests, const SimConfig& config);

struct TimerConfig {
  TimerKind kind = TimerKind::Deterministic;
  bool renew_on_hit = false;  // false: FIFO-like, true: LRU-like
  std::vector<double> T;      // per cache; a single value is broadcast
  UpdateRule rule = UpdateRule::Blind;
  std::size_t content_count = 0;
  std::optional<double> warmup_time;
  double warmup_fraction = 0.5;
  std::optional<double> horizon;
  int batches = 20;
  std::uint64_t seed = 1;
};

SimMetrics run_timer_experiment(const Topology& topology, RequestStream& stream, const TimerConfig& config);

}  // namespace cellcache
