#pragma once

// Event-driven Monte-Carlo simulation of the unslotted collision channel.
//
// Two source models are provided:
//  - infinite-user: aggregate Poisson(lambda) arrivals, each transmission
//    exponential(mu); updates are anonymous, so overlapping updates always
//    collide (including "self-collisions").
//  - on/off: N alternating-renewal sources, each idle for exponential time
//    with mean 1/lambda0 - 1/mu and then transmitting for exponential(mu).
//
// A transmission is lost if any other transmission overlaps any part of it;
// a collision-free transmission is received with probability p_c. On
// delivery at time t of an update that started at time s, the monitor's age
// drops to t - s. Time averages integrate the sawtooth exactly.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "aoi/collision.hpp"

namespace aoi::sim {

// When the run stops accepting new updates: a fixed end time or a fixed
// number of started updates (all sources combined).
class Horizon {
 public:
  enum class Kind { Time, Updates };

  static Horizon time(double end_time) { return Horizon(Kind::Time, end_time, 0); }
  static Horizon updates(std::uint64_t count) { return Horizon(Kind::Updates, 0.0, count); }

  Kind kind() const { return kind_; }
  double end_time() const { return end_time_; }
  std::uint64_t update_count() const { return updates_; }

 private:
  Horizon(Kind k, double t, std::uint64_t n) : kind_(k), end_time_(t), updates_(n) {}
  Kind kind_;
  double end_time_;
  std::uint64_t updates_;
};

inline constexpr std::uint64_t kDefaultUpdates = 100'000;
inline constexpr std::uint64_t kDefaultUpdatesPerSource = 50'000;
inline constexpr std::size_t kDefaultBatches = 32;
inline constexpr double kDefaultWarmupFraction = 0.01;

struct InfiniteUserSimConfig {
  collision::ChannelParams params;
  Horizon horizon = Horizon::updates(kDefaultUpdates);
  std::uint64_t seed = 1;
  double warmup_fraction = kDefaultWarmupFraction;
  std::size_t batches = kDefaultBatches;
  bool record_trace = false;

  void validate() const;
};

struct OnOffSimConfig {
  std::size_t n_sources = 20;
  double lambda0 = 0.6;  // per-source offered update rate
  double mu = 20.0;
  double p_c = 1.0;
  // Unset: n_sources * updates_per_source started updates.
  std::optional<Horizon> horizon;
  std::uint64_t updates_per_source = kDefaultUpdatesPerSource;
  std::uint64_t seed = 1;
  double warmup_fraction = kDefaultWarmupFraction;
  std::size_t batches = kDefaultBatches;
  bool record_trace = false;

  double rho() const { return static_cast<double>(n_sources) * lambda0 / mu; }
  Horizon effective_horizon() const;
  void validate() const;
};

struct TraceEvent {
  enum class Type { Arrival, Departure };

  double time = 0.0;
  Type type = Type::Arrival;
  std::uint64_t update_id = 0;
  std::uint64_t source_id = 0;
};

// "time type update_id source_id", one event per line; type is A or D.
void write_trace(std::ostream& os, const std::vector<TraceEvent>& trace);

struct SimResult {
  // Infinite-user: time-average system age. On/off: time-average individual
  // age averaged over sources.
  double mean_age = 0.0;
  double ci_halfwidth = 0.0;  // 95%, batch means (or across replications)
  // Any-source age; equal to mean_age for the infinite-user model.
  double system_age = 0.0;
  std::vector<double> per_source_ages;  // on/off only

  std::uint64_t transmissions = 0;
  std::uint64_t successful_deliveries = 0;
  std::uint64_t failed_collision_free = 0;
  std::uint64_t collided = 0;
  // Time shares after warm-up.
  double channel_busy_fraction = 0.0;
  std::vector<double> occupancy_fraction;  // [k] = share of time with k active
  double observed_time = 0.0;

  std::size_t replications = 1;
  bool degenerate = false;
  std::vector<std::string> warnings;
  std::vector<TraceEvent> trace;
};

SimResult simulate_system_age(const InfiniteUserSimConfig& config);
SimResult simulate_individual_age(const OnOffSimConfig& config);

// Seed of replication / stream `stream` derived from `base`.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

// Independent replications with seeds derive_seed(base_seed, r), run in
// parallel and aggregated in replication order. With n_replications >= 2 the
// CI is the t-interval over replication means.
SimResult replicate(const InfiniteUserSimConfig& config, std::size_t n_replications,
                    std::uint64_t base_seed);
SimResult replicate(const OnOffSimConfig& config, std::size_t n_replications, std::uint64_t base_seed);

// Two-sided 95% Student-t critical value.
double t_critical_95(std::size_t degrees_of_freedom);

}  // namespace aoi::sim
