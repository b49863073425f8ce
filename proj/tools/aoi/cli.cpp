#include "cli.hpp"

#if __has_include(<CLI/CLI.hpp>)
#include <CLI/CLI.hpp>
#else
#include <CLI11.hpp>
#endif
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include "aoi/collision.hpp"
#include "aoi/error.hpp"
#include "aoi/simulator.hpp"

namespace aoi::cli {

namespace {

using collision::ChannelParams;
using Json = nlohmann::ordered_json;

// A run that finished but whose result is a failure (exit 1).
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad flag values detected after parsing (exit 2).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr std::uint64_t kMinValidationEvents = 10'000;

const std::set<std::string>& metric_names() {
  static const std::set<std::string> names{"appendix", "asymptotic", "closed_form", "individual",
                                           "lower_bound", "simulated", "slotted", "truncated"};
  return names;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::uint64_t default_seed() {
  if (const char* s = std::getenv("AOI_SEED"); s != nullptr && *s != '\0') {
    try {
      std::size_t pos = 0;
      const auto v = std::stoull(s, &pos);
      if (pos == std::string(s).size()) return v;
    } catch (const std::exception&) {
    }
    throw UsageError(std::string("AOI_SEED is not an unsigned integer: ") + s);
  }
  return 1;
}

void print_warnings(const std::vector<collision::RangeWarning>& ws, std::ostream& err) {
  for (const auto& w : ws) err << "warning: " << w.message << '\n';
}

// Output goes to `out` for "-" and to a file otherwise.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) : stream_(&fallback) {
    if (path != "-" && !path.empty()) {
      file_.open(path);
      if (!file_) throw RuntimeFailure("cannot open output file " + path);
      stream_ = &file_;
    }
  }
  std::ostream& get() { return *stream_; }

 private:
  std::ofstream file_;
  std::ostream* stream_;
};

// ---------------------------------------------------------------- sweep

struct SweepOptions {
  std::vector<double> rho;
  double rho_min = 0.05;
  double rho_max = 5.0;
  std::size_t points = 50;
  std::string spacing = "log";
  std::vector<double> p_c{1.0};
  double mu = 1.0;
  std::vector<std::string> metrics;
  std::size_t max_collisions = 60;
  std::size_t n_sources = 20;
  std::uint64_t events = 1'000'000;
  std::optional<std::uint64_t> seed;
  std::string out = "-";
};

std::vector<double> rho_grid(const SweepOptions& o) {
  if (!o.rho.empty()) return o.rho;
  if (o.points == 0) throw UsageError("--points must be positive");
  if (!(o.rho_min > 0.0) || !(o.rho_max >= o.rho_min)) {
    throw UsageError("--rho-min/--rho-max must satisfy 0 < min <= max");
  }
  std::vector<double> grid(o.points);
  for (std::size_t i = 0; i < o.points; ++i) {
    const double f = o.points == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(o.points - 1);
    grid[i] = o.spacing == "log" ? o.rho_min * std::pow(o.rho_max / o.rho_min, f)
                                 : o.rho_min + (o.rho_max - o.rho_min) * f;
  }
  return grid;
}

double evaluate_metric(const std::string& metric, double rho, double p_c, const SweepOptions& o,
                       std::uint64_t seed) {
  const auto params = ChannelParams::from_load(rho, o.mu, p_c);
  if (metric == "closed_form") return collision::system_age_closed_form(params);
  if (metric == "truncated") return collision::system_age_truncated(params, o.max_collisions);
  if (metric == "appendix") return collision::appendix_recursion_age(params, o.max_collisions);
  if (metric == "lower_bound") return collision::lower_bound(params);
  if (metric == "slotted") return collision::slotted_age(rho);
  if (metric == "asymptotic") return collision::asymptotic_individual_age(rho) / o.mu;
  if (metric == "individual") {
    // Service rate scales with the number of sources.
    const double mu = o.mu * static_cast<double>(o.n_sources);
    return collision::individual_age(ChannelParams::from_load(rho, mu, 1.0), o.n_sources);
  }
  if (metric == "simulated") {
    sim::InfiniteUserSimConfig c;
    c.params = params;
    c.horizon = sim::Horizon::updates(o.events);
    c.seed = seed;
    return sim::simulate_system_age(c).mean_age;
  }
  throw UsageError("unknown metric " + metric);
}

int cmd_sweep(SweepOptions o, std::ostream& out, std::ostream& err) {
  std::set<std::string> metrics;
  for (const auto& m : o.metrics) {
    if (m.empty()) continue;
    if (!metric_names().count(m)) throw UsageError("unknown metric '" + m + "'");
    metrics.insert(m);
  }
  if (metrics.empty()) throw UsageError("--metrics must name at least one metric");
  if (o.p_c.empty()) throw UsageError("--pc must list at least one value");
  const auto grid = rho_grid(o);
  for (double rho : grid) {
    if (!(rho > 0.0)) throw UsageError("offered loads must be positive");
  }
  for (double p : o.p_c) ChannelParams::from_load(1.0, o.mu, p).validate();

  const double max_rho = *std::max_element(grid.begin(), grid.end());
  print_warnings(collision::range_warnings(ChannelParams::from_load(max_rho, o.mu, 1.0),
                                           metrics.count("truncated") || metrics.count("appendix")
                                               ? o.max_collisions
                                               : 0),
                 err);

  const std::uint64_t base_seed = o.seed.value_or(default_seed());
  const std::size_t n_points = grid.size() * o.p_c.size();
  std::vector<std::vector<std::pair<std::string, double>>> rows(n_points);
  std::vector<std::exception_ptr> errors(n_points);
  const std::size_t workers = std::min<std::size_t>(n_points, std::max(1u, std::thread::hardware_concurrency()));
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t k = w; k < n_points; k += workers) {
          try {
            const double rho = grid[k / o.p_c.size()];
            const double p_c = o.p_c[k % o.p_c.size()];
            for (const auto& m : metrics) {
              rows[k].emplace_back(m, evaluate_metric(m, rho, p_c, o, sim::derive_seed(base_seed, k)));
            }
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

  Sink sink(o.out, out);
  auto& os = sink.get();
  os << "# schema_version=" << kSchemaVersion << '\n';
  os << "rho,p_c,metric,value\n";
  for (std::size_t k = 0; k < n_points; ++k) {
    const double rho = grid[k / o.p_c.size()];
    const double p_c = o.p_c[k % o.p_c.size()];
    for (const auto& [m, v] : rows[k]) os << fmt(rho) << ',' << fmt(p_c) << ',' << m << ',' << fmt(v) << '\n';
  }
  return kExitOk;
}

// ---------------------------------------------------------------- optimize

struct OptimizeOptions {
  std::string objective = "system";
  double p_c = 1.0;
  double mu = 1.0;
  double lo = collision::kDefaultBracketLo;
  double hi = collision::kDefaultBracketHi;
  double tol = 1e-6;
};

int cmd_optimize(const OptimizeOptions& o, std::ostream& out) {
  const auto objective = o.objective == "asymptotic" ? collision::LoadObjective::asymptotic_individual()
                                                     : collision::LoadObjective::system_age(o.p_c, o.mu);
  const auto best = collision::optimize_load(objective, o.lo, o.hi, o.tol);
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["rho_star"] = best.rho_star;
  j["value_star"] = best.value_star;
  out << j.dump(2) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- validate

struct ValidateOptions {
  double rho = 0.5;
  double p_c = 1.0;
  double mu = 1.0;
  std::uint64_t events = 1'000'000;
  std::optional<std::uint64_t> seed;
  std::string trace;
};

int cmd_validate(const ValidateOptions& o, std::ostream& out, std::ostream& err) {
  const auto params = ChannelParams::from_load(o.rho, o.mu, o.p_c);
  params.validate();
  print_warnings(collision::range_warnings(params), err);
  const std::uint64_t seed = o.seed.value_or(default_seed());

  Json j;
  j["schema_version"] = kSchemaVersion;
  j["rho"] = o.rho;
  j["p_c"] = o.p_c;
  j["mu"] = o.mu;
  j["n_events"] = o.events;
  j["seed"] = seed;
  const double theory = collision::system_age_closed_form(params);
  j["theory"] = theory;

  std::vector<std::string> flags;
  bool pass = true;
  if (o.events < kMinValidationEvents) {
    flags.emplace_back("insufficient samples");
    pass = false;
  }

  sim::InfiniteUserSimConfig c;
  c.params = params;
  c.horizon = sim::Horizon::updates(o.events);
  c.seed = seed;
  c.record_trace = !o.trace.empty();
  sim::SimResult r;
  try {
    r = sim::simulate_system_age(c);
  } catch (const InvalidParams& e) {
    // Too short to batch: report rather than abort.
    flags.emplace_back(e.what());
    j["pass"] = false;
    j["flags"] = flags;
    out << j.dump(2) << '\n';
    return kExitFailure;
  }
  if (!o.trace.empty()) {
    Sink sink(o.trace, out);
    sim::write_trace(sink.get(), r.trace);
  }
  const double error = r.mean_age - theory;
  j["simulated"] = r.mean_age;
  j["ci_halfwidth"] = r.ci_halfwidth;
  j["relative_error"] = error / theory;
  j["inside_ci"] = std::abs(error) <= r.ci_halfwidth;
  j["inside_3ci"] = std::abs(error) <= 3.0 * r.ci_halfwidth;
  j["successful_deliveries"] = r.successful_deliveries;
  j["collided"] = r.collided;
  j["failed_collision_free"] = r.failed_collision_free;
  if (r.degenerate) pass = false;
  for (const auto& w : r.warnings) flags.push_back(w);
  pass = pass && std::abs(error) <= 3.0 * r.ci_halfwidth;
  j["pass"] = pass;
  j["flags"] = flags;
  out << j.dump(2) << '\n';
  return pass ? kExitOk : kExitFailure;
}

// ---------------------------------------------------------------- simulate-onoff

struct OnOffOptions {
  std::size_t n_sources = 20;
  double rho = 0.6;
  std::optional<double> mu;
  double p_c = 1.0;
  std::uint64_t updates = sim::kDefaultUpdatesPerSource;
  std::optional<std::uint64_t> seed;
  std::string out = "-";
  std::string trace;
};

int cmd_simulate_onoff(const OnOffOptions& o, std::ostream& out) {
  if (o.n_sources < 2) {
    throw UsageError("simulate-onoff needs --N >= 2 (with one source individual and system age coincide)");
  }
  if (!(o.rho > 0.0)) throw UsageError("--rho must be positive");
  const double mu = o.mu.value_or(static_cast<double>(o.n_sources));
  sim::OnOffSimConfig c;
  c.n_sources = o.n_sources;
  c.mu = mu;
  c.lambda0 = o.rho * mu / static_cast<double>(o.n_sources);
  c.p_c = o.p_c;
  c.updates_per_source = o.updates;
  c.seed = o.seed.value_or(default_seed());
  c.record_trace = !o.trace.empty();
  const auto r = sim::simulate_individual_age(c);

  if (!o.trace.empty()) {
    Sink sink(o.trace, out);
    sim::write_trace(sink.get(), r.trace);
  }
  const auto params = ChannelParams::from_load(o.rho, mu, 1.0);
  Sink sink(o.out, out);
  auto& os = sink.get();
  os << "# schema_version=" << kSchemaVersion << '\n';
  os << "source_id,time_avg_age\n";
  for (std::size_t i = 0; i < r.per_source_ages.size(); ++i) os << i << ',' << fmt(r.per_source_ages[i]) << '\n';
  os << "mean," << fmt(r.mean_age) << '\n';
  os << "individual_N," << fmt(collision::individual_age(params, o.n_sources)) << '\n';
  os << "asymptotic," << fmt(collision::asymptotic_individual_age(o.rho) * static_cast<double>(o.n_sources) / mu)
     << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- config file

// `key = value` lines; '#' and ';' start comments. Keys are long option names
// of the selected subcommand and act as defaults for flags not given on the
// command line.
std::vector<std::pair<std::string, std::string>> read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path);
  std::vector<std::pair<std::string, std::string>> kv;
  std::string line;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError("config line without '=': " + line);
    kv.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return kv;
}

// Splices config defaults into the argument list right after the subcommand.
std::vector<std::string> apply_config(std::vector<std::string> args) {
  std::optional<std::string> config;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + 2));
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      config = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  }
  if (!config) return args;

  std::size_t sub = 1;
  while (sub < args.size() && args[sub].rfind("-", 0) == 0) ++sub;
  if (sub >= args.size()) return args;

  std::vector<std::string> injected;
  for (const auto& [key, value] : read_config(*config)) {
    const std::string flag = "--" + key;
    const bool given = std::any_of(args.begin() + static_cast<std::ptrdiff_t>(sub) + 1, args.end(),
                                   [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
    if (given) continue;
    injected.push_back(flag);
    std::istringstream values(value);
    std::string v;
    while (values >> v) injected.push_back(v);
  }
  args.insert(args.begin() + static_cast<std::ptrdiff_t>(sub) + 1, injected.begin(), injected.end());
  return args;
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Age of information on an unslotted random-access collision channel", "aoi"};
  app.require_subcommand(1);
  app.add_option("--config", "key=value file of defaults for the subcommand's flags");

  SweepOptions sweep;
  auto* s = app.add_subcommand("sweep", "Evaluate age metrics over a grid of offered loads (CSV)");
  s->add_option("--rho", sweep.rho, "Explicit offered loads (overrides the generated grid)")->delimiter(',');
  s->add_option("--rho-min", sweep.rho_min, "Smallest offered load of the generated grid");
  s->add_option("--rho-max", sweep.rho_max, "Largest offered load of the generated grid");
  s->add_option("--points", sweep.points, "Number of grid points");
  s->add_option("--spacing", sweep.spacing, "Grid spacing")->check(CLI::IsMember({"log", "linear"}));
  s->add_option("--pc", sweep.p_c, "Success probabilities of collision-free updates")->delimiter(',');
  s->add_option("--mu", sweep.mu, "Service rate");
  s->add_option("--metrics", sweep.metrics,
                "appendix, asymptotic, closed_form, individual, lower_bound, simulated, slotted, truncated")
      ->delimiter(',')
      ->required();
  s->add_option("--M", sweep.max_collisions, "Truncation level for truncated/appendix");
  s->add_option("--N", sweep.n_sources, "Number of sources for the individual metric (service rate N*mu)");
  s->add_option("--events", sweep.events, "Updates per simulated point");
  s->add_option("--seed", sweep.seed, "Base seed for simulated points (default: $AOI_SEED or 1)");
  s->add_option("--out", sweep.out, "Output CSV path, '-' for stdout");

  OptimizeOptions opt;
  auto* o = app.add_subcommand("optimize", "Find the offered load minimizing an age objective (JSON)");
  o->add_option("--objective", opt.objective, "system or asymptotic")
      ->check(CLI::IsMember({"system", "asymptotic"}));
  o->add_option("--pc", opt.p_c, "Success probability (system objective)");
  o->add_option("--mu", opt.mu, "Service rate (system objective)");
  o->add_option("--lo", opt.lo, "Lower end of the search interval");
  o->add_option("--hi", opt.hi, "Upper end of the search interval");
  o->add_option("--tol", opt.tol, "Width of the final interval");

  ValidateOptions val;
  auto* v = app.add_subcommand("validate", "Compare a simulation with the exact system age (JSON)");
  v->add_option("--rho", val.rho, "Offered load");
  v->add_option("--pc", val.p_c, "Success probability");
  v->add_option("--mu", val.mu, "Service rate");
  v->add_option("--events", val.events, "Number of simulated updates");
  v->add_option("--seed", val.seed, "Seed (default: $AOI_SEED or 1)");
  v->add_option("--trace", val.trace, "Write the event trace to this file");

  OnOffOptions onoff;
  auto* f = app.add_subcommand("simulate-onoff", "Simulate N on/off sources and report individual ages (CSV)");
  f->add_option("--N", onoff.n_sources, "Number of sources (>= 2)");
  f->add_option("--rho", onoff.rho, "Aggregate offered load");
  f->add_option("--mu", onoff.mu, "Service rate (default: N)");
  f->add_option("--pc", onoff.p_c, "Success probability of collision-free updates");
  f->add_option("--updates", onoff.updates, "Updates generated per source");
  f->add_option("--seed", onoff.seed, "Seed (default: $AOI_SEED or 1)");
  f->add_option("--out", onoff.out, "Output CSV path, '-' for stdout");
  f->add_option("--trace", onoff.trace, "Write the event trace to this file");

  try {
    auto args = apply_config(raw_args);
    std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*s) return cmd_sweep(sweep, out, err);
    if (*o) return cmd_optimize(opt, out);
    if (*v) return cmd_validate(val, out, err);
    if (*f) return cmd_simulate_onoff(onoff, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const InvalidParams& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const BracketError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace aoi::cli
