#include "aoi/simulator.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <queue>
#include <random>
#include <sstream>
#include <thread>

#include "aoi/error.hpp"

namespace aoi::sim {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// mt19937_64 with explicit 53-bit uniform and inversion exponential so that
// draws do not depend on the standard library's distribution classes.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : engine_(seed) {}

  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double exponential(double rate) { return -std::log1p(-uniform()) / rate; }
  bool bernoulli(double p) { return p >= 1.0 || uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

// Age process t - u(t), integrated lazily between resets.
struct Sawtooth {
  double generated = 0.0;  // generation time of the freshest delivered update
  double last = 0.0;
  double integral = 0.0;

  void advance(double t, bool observing) {
    if (observing) integral += (t - last) * (0.5 * (t + last) - generated);
    last = t;
  }
  void deliver(double t, double generation_time, bool observing) {
    advance(t, observing);
    generated = std::max(generated, generation_time);
  }
};

struct Transmission {
  std::uint64_t id;
  std::uint64_t source;
  double start;
  bool tainted;
};

// Active transmissions; any overlap taints every party to it.
class Channel {
 public:
  void start(std::uint64_t id, std::uint64_t source, double t) {
    const bool overlap = !active_.empty();
    for (auto& a : active_) a.tainted = true;
    active_.push_back({id, source, t, overlap});
  }

  Transmission finish(std::uint64_t id) {
    auto it = std::find_if(active_.begin(), active_.end(), [id](const Transmission& a) { return a.id == id; });
    Transmission done = *it;
    *it = active_.back();
    active_.pop_back();
    return done;
  }

  std::size_t size() const { return active_.size(); }

 private:
  std::vector<Transmission> active_;
};

// Warm-up, batch boundaries, occupancy and per-source sawtooths.
class Recorder {
 public:
  Recorder(std::size_t n_sources, std::size_t batches)
      : sources_(n_sources), batches_(batches), batch_start_integral_(n_sources, 0.0) {}

  bool observing() const { return observing_; }

  void track_occupancy(double t, std::size_t active) {
    if (observing_) {
      if (occupancy_.size() <= active) occupancy_.resize(active + 1, 0.0);
      occupancy_[active] += t - last_event_;
    }
    last_event_ = t;
  }

  void begin(double t) {
    observing_ = true;
    start_ = t;
    batch_start_ = t;
    last_event_ = t;
    for (auto& s : sources_) {
      s.last = t;
      s.integral = 0.0;
    }
    system_.last = t;
    system_.integral = 0.0;
    std::fill(batch_start_integral_.begin(), batch_start_integral_.end(), 0.0);
  }

  void close_batch(double t, bool final) {
    double sum = 0.0;
    for (std::size_t i = 0; i < sources_.size(); ++i) {
      sources_[i].advance(t, true);
      sum += sources_[i].integral - batch_start_integral_[i];
      batch_start_integral_[i] = sources_[i].integral;
    }
    system_.advance(t, true);
    const double duration = t - batch_start_;
    if (duration > 0.0) batch_means_.push_back(sum / static_cast<double>(sources_.size()) / duration);
    batch_start_ = t;
    if (final) {
      observing_ = false;
      end_ = t;
    }
  }

  void deliver(std::size_t source, double t, double generation_time) {
    if (source < sources_.size()) sources_[source].deliver(t, generation_time, observing_);
    system_.deliver(t, generation_time, observing_);
  }

  void fill(SimResult& r) const {
    const double span = end_ - start_;
    r.observed_time = span;
    r.per_source_ages.clear();
    double total = 0.0;
    for (const auto& s : sources_) {
      r.per_source_ages.push_back(s.integral / span);
      total += s.integral;
    }
    r.mean_age = total / static_cast<double>(sources_.size()) / span;
    r.system_age = system_.integral / span;

    r.occupancy_fraction.clear();
    for (double o : occupancy_) r.occupancy_fraction.push_back(o / span);
    r.channel_busy_fraction = occupancy_.empty() ? 0.0 : 1.0 - occupancy_[0] / span;

    const auto b = batch_means_.size();
    if (b >= 2) {
      double mean = 0.0;
      for (double y : batch_means_) mean += y;
      mean /= static_cast<double>(b);
      double ss = 0.0;
      for (double y : batch_means_) ss += (y - mean) * (y - mean);
      const double sd = std::sqrt(ss / static_cast<double>(b - 1));
      r.ci_halfwidth = t_critical_95(b - 1) * sd / std::sqrt(static_cast<double>(b));
    } else {
      r.ci_halfwidth = std::numeric_limits<double>::infinity();
    }
  }

 private:
  std::vector<Sawtooth> sources_;
  Sawtooth system_;
  std::size_t batches_;
  bool observing_ = false;
  double start_ = 0.0;
  double end_ = 0.0;
  double batch_start_ = 0.0;
  double last_event_ = 0.0;
  std::vector<double> batch_start_integral_;
  std::vector<double> batch_means_;
  std::vector<double> occupancy_;
};

// Observation marks: the warm-up end followed by `batches` boundaries, the
// last of which ends the observation window. In update-count mode each mark
// is the start time of a given update; in time mode it is a fixed instant.
class Schedule {
 public:
  Schedule(const Horizon& h, double warmup_fraction, std::size_t batches) : horizon_(h) {
    if (h.kind() == Horizon::Kind::Time) {
      const double warm = warmup_fraction * h.end_time();
      times_.push_back(warm);
      for (std::size_t b = 1; b <= batches; ++b) {
        times_.push_back(b == batches ? h.end_time()
                                      : warm + (h.end_time() - warm) * static_cast<double>(b) /
                                                   static_cast<double>(batches));
      }
    } else {
      const auto n = h.update_count();
      const auto warm = static_cast<std::uint64_t>(std::ceil(warmup_fraction * static_cast<double>(n)));
      indices_.push_back(warm);
      for (std::size_t b = 1; b <= batches; ++b) {
        indices_.push_back(warm + (n - warm) * b / batches);
      }
    }
  }

  bool accepts(double t, std::uint64_t started) const {
    return horizon_.kind() == Horizon::Kind::Time ? t <= horizon_.end_time()
                                                  : started < horizon_.update_count();
  }

  // Fires every mark due before an event at time t; `started` counts updates
  // begun before this event, `is_start` says whether this event begins one.
  void before_event(double t, std::uint64_t started, bool is_start, Recorder& rec, Channel& ch) {
    if (horizon_.kind() == Horizon::Kind::Time) {
      while (next_ < times_.size() && times_[next_] <= t) fire(times_[next_], rec, ch);
    } else {
      // Index 0 marks t = 0; index k marks the start of the k-th update.
      while (next_ < indices_.size() &&
             (indices_[next_] == 0 || (is_start && indices_[next_] == started + 1))) {
        fire(indices_[next_] == 0 ? 0.0 : t, rec, ch);
      }
    }
  }

  // Time-mode runs can drain without reaching the last mark.
  void finish(double t, Recorder& rec, Channel& ch) {
    while (next_ < times_.size()) fire(times_[next_], rec, ch);
    while (next_ < indices_.size()) fire(t, rec, ch);
  }

  std::size_t marks() const { return std::max(times_.size(), indices_.size()); }

 private:
  void fire(double t, Recorder& rec, Channel& ch) {
    rec.track_occupancy(t, ch.size());
    if (next_ == 0) {
      rec.begin(t);
    } else {
      rec.close_batch(t, next_ + 1 == marks());
    }
    ++next_;
  }

  Horizon horizon_;
  std::vector<double> times_;
  std::vector<std::uint64_t> indices_;
  std::size_t next_ = 0;
};

void validate_common(const Horizon& h, double warmup_fraction, std::size_t batches) {
  if (h.kind() == Horizon::Kind::Time && !(h.end_time() > 0.0 && std::isfinite(h.end_time()))) {
    throw InvalidParams("simulation end time must be positive and finite");
  }
  if (h.kind() == Horizon::Kind::Updates && h.update_count() == 0) {
    throw InvalidParams("simulation update count must be positive");
  }
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) {
    throw InvalidParams("warm-up fraction must lie in [0, 1)");
  }
  if (batches < 2) throw InvalidParams("at least two batches are needed for a confidence interval");
  if (h.kind() == Horizon::Kind::Updates) {
    const auto n = h.update_count();
    const auto warm = static_cast<std::uint64_t>(std::ceil(warmup_fraction * static_cast<double>(n)));
    if (n - warm < batches) throw InvalidParams("too few updates for the requested number of batches");
  }
}

void finalize(SimResult& r) {
  if (r.successful_deliveries == 0) {
    r.degenerate = true;
    r.warnings.push_back("no successful deliveries; age grows without bound over the horizon");
  }
}

struct Departure {
  double time;
  std::uint64_t id;
  bool operator>(const Departure& o) const { return time > o.time || (time == o.time && id > o.id); }
};

}  // namespace

void InfiniteUserSimConfig::validate() const {
  params.validate();
  validate_common(horizon, warmup_fraction, batches);
}

Horizon OnOffSimConfig::effective_horizon() const {
  return horizon ? *horizon : Horizon::updates(static_cast<std::uint64_t>(n_sources) * updates_per_source);
}

void OnOffSimConfig::validate() const {
  if (n_sources < 2) throw InvalidParams("on/off simulation needs at least two sources");
  if (!(lambda0 > 0.0) || !(mu > 0.0) || !std::isfinite(lambda0) || !std::isfinite(mu)) {
    throw InvalidParams("per-source rate and service rate must be positive and finite");
  }
  if (!(lambda0 < mu)) {
    throw InvalidParams("per-source rate must be below the service rate (idle time would be non-positive)");
  }
  if (!(p_c > 0.0 && p_c <= 1.0)) throw InvalidParams("success probability must lie in (0, 1]");
  if (!horizon && updates_per_source == 0) throw InvalidParams("updates per source must be positive");
  validate_common(effective_horizon(), warmup_fraction, batches);
}

void write_trace(std::ostream& os, const std::vector<TraceEvent>& trace) {
  const auto old = os.precision(17);
  for (const auto& e : trace) {
    os << e.time << ' ' << (e.type == TraceEvent::Type::Arrival ? 'A' : 'D') << ' ' << e.update_id << ' '
       << e.source_id << '\n';
  }
  os.precision(old);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return splitmix64(splitmix64(base) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

double t_critical_95(std::size_t degrees_of_freedom) {
  if (degrees_of_freedom == 0) return std::numeric_limits<double>::infinity();
  boost::math::students_t dist(static_cast<double>(degrees_of_freedom));
  return boost::math::quantile(dist, 0.975);
}

SimResult simulate_system_age(const InfiniteUserSimConfig& config) {
  config.validate();
  const auto& p = config.params;
  Stream arrivals(derive_seed(config.seed, 0));
  Stream service(derive_seed(config.seed, 1));
  Stream reception(derive_seed(config.seed, 2));

  SimResult r;
  Recorder rec(1, config.batches);
  Schedule schedule(config.horizon, config.warmup_fraction, config.batches);
  Channel channel;
  std::priority_queue<Departure, std::vector<Departure>, std::greater<>> departures;

  double next_arrival = arrivals.exponential(p.lambda);
  bool accepting = true;
  double now = 0.0;
  while (true) {
    const bool arrival_next = accepting && (departures.empty() || next_arrival < departures.top().time);
    if (!arrival_next && departures.empty()) break;

    if (arrival_next) {
      if (!schedule.accepts(next_arrival, r.transmissions)) {
        accepting = false;
        continue;
      }
      now = next_arrival;
      schedule.before_event(now, r.transmissions, true, rec, channel);
      rec.track_occupancy(now, channel.size());
      const std::uint64_t id = r.transmissions++;
      channel.start(id, 0, now);
      departures.push({now + service.exponential(p.mu), id});
      if (config.record_trace) r.trace.push_back({now, TraceEvent::Type::Arrival, id, 0});
      next_arrival = now + arrivals.exponential(p.lambda);
      if (!schedule.accepts(next_arrival, r.transmissions)) accepting = false;
    } else {
      const auto dep = departures.top();
      departures.pop();
      now = dep.time;
      schedule.before_event(now, r.transmissions, false, rec, channel);
      rec.track_occupancy(now, channel.size());
      const auto done = channel.finish(dep.id);
      if (config.record_trace) r.trace.push_back({now, TraceEvent::Type::Departure, dep.id, 0});
      if (done.tainted) {
        ++r.collided;
      } else if (reception.bernoulli(p.p_c)) {
        ++r.successful_deliveries;
        rec.deliver(0, now, done.start);
      } else {
        ++r.failed_collision_free;
      }
    }
  }
  schedule.finish(now, rec, channel);
  rec.fill(r);
  finalize(r);
  return r;
}

SimResult simulate_individual_age(const OnOffSimConfig& config) {
  config.validate();
  const auto n = config.n_sources;
  const double idle_rate = 1.0 / (1.0 / config.lambda0 - 1.0 / config.mu);
  Stream reception(derive_seed(config.seed, 0));
  std::vector<Stream> streams;
  streams.reserve(n);
  for (std::size_t i = 0; i < n; ++i) streams.emplace_back(derive_seed(config.seed, i + 1));

  struct SourceEvent {
    double time;
    std::size_t source;
    bool operator>(const SourceEvent& o) const {
      return time > o.time || (time == o.time && source > o.source);
    }
  };
  // Per source: current update id while transmitting.
  std::vector<std::optional<std::uint64_t>> sending(n);
  std::priority_queue<SourceEvent, std::vector<SourceEvent>, std::greater<>> events;
  for (std::size_t i = 0; i < n; ++i) events.push({streams[i].exponential(idle_rate), i});

  std::vector<std::uint64_t> delivered(n, 0);
  SimResult r;
  Recorder rec(n, config.batches);
  Schedule schedule(config.effective_horizon(), config.warmup_fraction, config.batches);
  Channel channel;
  bool accepting = true;
  double now = 0.0;
  while (!events.empty()) {
    const auto ev = events.top();
    events.pop();
    const auto i = ev.source;
    if (!sending[i]) {
      // Idle period ends: start a transmission.
      if (!accepting) continue;
      if (!schedule.accepts(ev.time, r.transmissions)) {
        accepting = false;
        continue;
      }
      now = ev.time;
      schedule.before_event(now, r.transmissions, true, rec, channel);
      rec.track_occupancy(now, channel.size());
      const std::uint64_t id = r.transmissions++;
      channel.start(id, i, now);
      sending[i] = id;
      events.push({now + streams[i].exponential(config.mu), i});
      if (config.record_trace) r.trace.push_back({now, TraceEvent::Type::Arrival, id, i});
      if (!schedule.accepts(now, r.transmissions)) accepting = false;
    } else {
      now = ev.time;
      schedule.before_event(now, r.transmissions, false, rec, channel);
      rec.track_occupancy(now, channel.size());
      const auto done = channel.finish(*sending[i]);
      if (config.record_trace) r.trace.push_back({now, TraceEvent::Type::Departure, done.id, i});
      sending[i].reset();
      if (done.tainted) {
        ++r.collided;
      } else if (reception.bernoulli(config.p_c)) {
        ++r.successful_deliveries;
        ++delivered[i];
        rec.deliver(i, now, done.start);
      } else {
        ++r.failed_collision_free;
      }
      if (accepting) events.push({now + streams[i].exponential(idle_rate), i});
    }
  }
  schedule.finish(now, rec, channel);
  rec.fill(r);
  finalize(r);
  const auto silent = std::count(delivered.begin(), delivered.end(), 0u);
  if (silent > 0) {
    r.warnings.push_back(std::to_string(silent) + " source(s) had no successful delivery in the observation window");
  }
  return r;
}

namespace {

template <typename Config, typename Run>
SimResult replicate_impl(const Config& config, std::size_t n_replications, std::uint64_t base_seed, Run run) {
  if (n_replications == 0) throw InvalidParams("at least one replication is required");
  std::vector<SimResult> results(n_replications);
  std::vector<std::exception_ptr> errors(n_replications);

  const std::size_t workers =
      std::min<std::size_t>(n_replications, std::max(1u, std::thread::hardware_concurrency()));
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t k = w; k < n_replications; k += workers) {
          try {
            Config c = config;
            c.seed = derive_seed(base_seed, k);
            results[k] = run(c);
          } catch (...) {
            errors[k] = std::current_exception();
          }
        }
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  if (n_replications == 1) return std::move(results.front());

  SimResult agg;
  agg.replications = n_replications;
  const double count = static_cast<double>(n_replications);
  double mean = 0.0;
  for (const auto& r : results) mean += r.mean_age;
  mean /= count;
  double ss = 0.0;
  for (const auto& r : results) ss += (r.mean_age - mean) * (r.mean_age - mean);
  agg.mean_age = mean;
  agg.ci_halfwidth = t_critical_95(n_replications - 1) * std::sqrt(ss / (count - 1.0)) / std::sqrt(count);

  for (std::size_t k = 0; k < n_replications; ++k) {
    const auto& r = results[k];
    agg.system_age += r.system_age / count;
    agg.transmissions += r.transmissions;
    agg.successful_deliveries += r.successful_deliveries;
    agg.failed_collision_free += r.failed_collision_free;
    agg.collided += r.collided;
    agg.channel_busy_fraction += r.channel_busy_fraction / count;
    agg.observed_time += r.observed_time;
    if (agg.per_source_ages.size() < r.per_source_ages.size()) agg.per_source_ages.resize(r.per_source_ages.size(), 0.0);
    for (std::size_t i = 0; i < r.per_source_ages.size(); ++i) agg.per_source_ages[i] += r.per_source_ages[i] / count;
    if (agg.occupancy_fraction.size() < r.occupancy_fraction.size()) agg.occupancy_fraction.resize(r.occupancy_fraction.size(), 0.0);
    for (std::size_t i = 0; i < r.occupancy_fraction.size(); ++i) agg.occupancy_fraction[i] += r.occupancy_fraction[i] / count;
    agg.degenerate = agg.degenerate || r.degenerate;
    for (const auto& w : r.warnings) agg.warnings.push_back("replication " + std::to_string(k) + ": " + w);
  }
  return agg;
}

}  // namespace

SimResult replicate(const InfiniteUserSimConfig& config, std::size_t n_replications, std::uint64_t base_seed) {
  return replicate_impl(config, n_replications, base_seed, simulate_system_age);
}

SimResult replicate(const OnOffSimConfig& config, std::size_t n_replications, std::uint64_t base_seed) {
  return replicate_impl(config, n_replications, base_seed, simulate_individual_age);
}

}  // namespace aoi::sim
