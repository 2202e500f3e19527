#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cellcache/geometry.hpp"
#include "cellcache/random.hpp"

namespace cellcache {

using ContentId = std::uint32_t;

struct OnOff {
  double t_on = 0.0;   // mean ON sojourn
  double t_off = 0.0;  // mean OFF sojourn

  double on_fraction() const { return t_on / (t_on + t_off); }
};

struct Catalog {
  // Request rate per unit of user mass, per content (during ON periods when
  // `onoff` is set). When `total_rate` is set these are relative weights and
  // are rescaled so that sum(lambda) * M == total_rate.
  std::vector<double> lambda;
  std::optional<double> total_rate;
  std::optional<OnOff> onoff;
  // Set by estimate_rates when the window held no request.
  bool empty_window = false;

  std::size_t size() const { return lambda.size(); }
};

// Absolute per-unit-mass rates for a topology of covered mass `total_mass`.
std::vector<double> per_mass_rates(const Catalog& catalog, double total_mass);

double zipf_normalization(int F, double s);

// lambda_f proportional to f^-s (f = 1..F), scaled to `total_rate` network-wide.
Catalog zipf_catalog(int F, double s, double total_rate);

void to_json(nlohmann::json& j, const Catalog& c);
void from_json(const nlohmann::json& j, Catalog& c);

struct Request {
  double time = 0.0;
  ContentId content = 0;
  BsSet mask = 0;  // covering set I_u of the requesting user
  int ref = -1;    // reference BS of the user (update rule "one")
};

// Draws a covering atom proportionally to its mass, then the reference BS
// from the atom's reference split.
class AtomSampler {
 public:
  explicit AtomSampler(const CoverageMap& cm);
  void draw(Rng& rng, Request& out) const;

 private:
  const CoverageMap* cm_;
  AliasTable table_;
};

class RequestStream {
 public:
  virtual ~RequestStream() = default;
  virtual bool next(Request& out) = 0;
};

// Merged Poisson process over all contents and atoms.
class IrmStream : public RequestStream {
 public:
  IrmStream(const Catalog& catalog, const Topology& topology, double horizon, std::uint64_t seed);
  bool next(Request& out) override;
  double total_rate() const { return total_rate_; }

 private:
  AtomSampler atoms_;
  AliasTable contents_;
  Rng rng_;
  double horizon_;
  double total_rate_ = 0.0;
  double now_ = 0.0;
};

// Per-content ON-OFF modulated Poisson process, synchronized across cells.
class OnOffStream : public RequestStream {
 public:
  OnOffStream(const Catalog& catalog, const Topology& topology, double horizon, std::uint64_t seed);
  bool next(Request& out) override;

 private:
  struct Pending {
    double time;
    ContentId content;
    bool operator>(const Pending& o) const {
      return time != o.time ? time > o.time : content > o.content;
    }
  };
  void schedule(ContentId f, double from);

  AtomSampler atoms_;
  Rng rng_;
  double horizon_;
  OnOff onoff_;
  std::vector<double> rate_;     // network-wide rate per content while ON
  std::vector<bool> on_;
  std::vector<double> switch_at_;
  std::vector<Pending> heap_;
};

class VectorStream : public RequestStream {
 public:
  explicit VectorStream(std::span<const Request> requests) : requests_(requests) {}
  bool next(Request& out) override {
    if (pos_ >= requests_.size()) return false;
    out = requests_[pos_++];
    return true;
  }

 private:
  std::span<const Request> requests_;
  std::size_t pos_ = 0;
};

std::vector<Request> collect(RequestStream& stream);

std::vector<Request> irm_stream(const Catalog& catalog, const Topology& topology, double horizon,
                                std::uint64_t seed);
std::vector<Request> onoff_stream(const Catalog& catalog, const Topology& topology, double horizon,
                                  std::uint64_t seed);

struct Trace {
  std::vector<Request> requests;        // dense content ids, time-sorted
  std::vector<std::uint64_t> content_ids;  // dense id -> id in the file
  std::size_t rows = 0;
  std::size_t dropped = 0;              // rows whose coordinates are uncovered
};

// CSV rows "t,content_id[,x,y]"; an optional first line "t,content_id..." is
// treated as a header. Rows without coordinates are placed on an atom drawn
// proportionally to mass.
Trace parse_trace(std::istream& in, const Topology& topology, std::uint64_t seed);
Trace load_trace(const std::string& path, const Topology& topology, std::uint64_t seed);
void write_trace_csv(std::ostream& out, std::span<const Request> requests);

// lambda_hat_f = count_f(window) / (|window| * M) over [t0, t1).
Catalog estimate_rates(std::span<const Request> stream, double t0, double t1, double total_mass,
                       std::size_t content_count);

// Synthetic non-stationary trace: `slots` popularity ranks with Zipf(s)
// weights; at every window boundary each slot is handed to a fresh content
// with probability `churn`.
struct ChurnTraceSpec {
  int windows = 5;
  double window_length = 1.0;
  int slots = 1000;
  double s = 0.8;
  double total_rate = 1.0;
  double churn = 0.5;
};

std::vector<Request> churn_trace(const ChurnTraceSpec& spec, const Topology& topology,
                                 std::uint64_t seed);

}  // namespace cellcache
