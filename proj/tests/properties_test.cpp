// Property suites: randomized inputs from a fixed-seed generator, each case
// checked against an invariant rather than a stored value.

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "aoi/collision.hpp"
#include "aoi/shs.hpp"
#include "aoi/simulator.hpp"
#include "cli.hpp"
#include "support/oracles.hpp"

namespace {

using aoi::collision::ChannelParams;
namespace col = aoi::collision;

constexpr int kCases = 40;

struct Gen {
  std::mt19937_64 rng{20240611};
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  double log_uniform(double lo, double hi) { return std::exp(uniform(std::log(lo), std::log(hi))); }
  std::size_t index(std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); }
};

TEST(SeriesProperties, BetaGammaIdentities) {
  Gen g;
  for (int i = 0; i < kCases; ++i) {
    const double rho = g.log_uniform(0.01, 10.0);
    const auto s = col::compute_series(rho);
    for (std::size_t j = 1; j + 1 < s.beta.size(); ++j) {
      EXPECT_LE(s.beta[j + 1], s.beta[j]);
      EXPECT_GE(s.beta[j + 1], 0.0);
      EXPECT_LE(s.beta[j], 1.0);
      EXPECT_NEAR(s.beta[j] - s.beta[j + 1], aoi::testing::poisson_pmf(rho, static_cast<int>(j)), 1e-13);
      EXPECT_NEAR(s.gamma_at(j), 1.0 + rho / static_cast<double>(j + 1) * s.gamma_at(j + 1), 1e-12 * s.gamma_at(j));
    }
    if (rho <= 2.0) {
      for (int j = 1; j <= 10; ++j) {
        const double direct = aoi::testing::gamma_direct(rho, j);
        EXPECT_NEAR(s.gamma_at(j), direct, 1e-12 * direct);
      }
    }
  }
}

TEST(ShsProperties, RateScaling) {
  Gen g;
  for (int i = 0; i < kCases / 4; ++i) {
    const auto base = ChannelParams::from_load(g.log_uniform(0.05, 4.0), 1.0, g.uniform(0.2, 1.0));
    const double c = g.log_uniform(0.1, 50.0);
    const auto scaled = ChannelParams{base.lambda * c, base.mu * c, base.p_c};
    const std::size_t m = g.index(10, 60);

    const auto a = aoi::shs::solve_age(col::build_chain(base, m));
    const auto b = aoi::shs::solve_age(col::build_chain(scaled, m));
    for (std::size_t q = 0; q <= m; ++q) {
      EXPECT_NEAR(b.pi[q], a.pi[q], 1e-12);
      for (int k = 0; k < 2; ++k) EXPECT_NEAR(b.v[q][k] * c, a.v[q][k], 1e-10 * a.delta);
    }
    EXPECT_NEAR(b.delta * c / a.delta, 1.0, 1e-10);
    EXPECT_NEAR(col::system_age_closed_form(scaled) * c / col::system_age_closed_form(base), 1.0, 1e-10);
  }
}

TEST(ShsProperties, PermutationEquivariance) {
  Gen g;
  for (int i = 0; i < kCases / 4; ++i) {
    const auto params = ChannelParams::from_load(g.log_uniform(0.1, 3.0), g.uniform(0.5, 2.0), g.uniform(0.3, 1.0));
    const std::size_t m = g.index(3, 25);
    const auto model = col::build_chain(params, m);
    std::vector<std::size_t> perm(m + 1);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), g.rng);

    aoi::shs::ShsModel relabeled(m + 1, 2);
    for (const auto& t : model.transitions()) {
      relabeled.add_transition(perm[t.from_state], perm[t.to_state], t.rate, t.reset);
    }
    const auto a = aoi::shs::solve_age(model);
    const auto b = aoi::shs::solve_age(relabeled);
    EXPECT_NEAR(b.delta, a.delta, 1e-12 * a.delta);
    for (std::size_t q = 0; q <= m; ++q) {
      EXPECT_NEAR(b.pi[perm[q]], a.pi[q], 1e-13);
      for (int k = 0; k < 2; ++k) EXPECT_NEAR(b.v[perm[q]][k], a.v[q][k], 1e-11 * a.delta);
    }
  }
}

TEST(ShsProperties, CollisionChainComponentsCoincideAwayFromStateOne) {
  Gen g;
  for (int i = 0; i < kCases / 2; ++i) {
    const auto params = ChannelParams::from_load(g.log_uniform(0.05, 6.0), g.uniform(0.5, 3.0), g.uniform(0.1, 1.0));
    const std::size_t m = g.index(3, 80);
    const auto sol = aoi::shs::solve_age(col::build_chain(params, m));
    for (std::size_t k = 0; k <= m; ++k) {
      if (k == 1) {
        EXPECT_LT(sol.v[1][0], sol.v[1][1]);
        continue;
      }
      EXPECT_NEAR(sol.v[k][0], sol.v[k][1], 1e-10 * std::max(sol.v[k][1], sol.delta * 1e-3)) << "k=" << k;
    }
    for (const auto& row : sol.v) {
      for (double x : row) EXPECT_GE(x, -1e-12);
    }
  }
}

TEST(ShsProperties, TripleAgreement) {
  Gen g;
  for (int i = 0; i < kCases / 2; ++i) {
    const auto p = ChannelParams::from_load(g.log_uniform(0.05, 2.0), g.uniform(0.5, 3.0), g.uniform(0.3, 1.0));
    const double solver = col::system_age_truncated(p, 120);
    EXPECT_NEAR(col::appendix_recursion_age(p, 120) / solver, 1.0, 1e-9);
    EXPECT_NEAR(col::system_age_closed_form(p) / solver, 1.0, 1e-8);
    EXPECT_GE(col::system_age_closed_form(p), col::lower_bound(p));
  }
}

TEST(SimProperties, TraceConservation) {
  Gen g;
  for (int i = 0; i < 10; ++i) {
    aoi::sim::InfiniteUserSimConfig c;
    c.params = ChannelParams::from_load(g.log_uniform(0.1, 3.0), g.uniform(0.5, 2.0), g.uniform(0.2, 1.0));
    c.horizon = aoi::sim::Horizon::updates(10'000);
    c.seed = g.rng();
    c.record_trace = true;
    const auto r = aoi::sim::simulate_system_age(c);
    EXPECT_EQ(r.successful_deliveries + r.failed_collision_free + r.collided, r.transmissions);
    const auto ivs = aoi::testing::intervals_from_trace(r.trace);
    EXPECT_EQ(ivs.size(), r.transmissions);
    EXPECT_EQ(aoi::testing::overlap_free(ivs).size(), r.successful_deliveries + r.failed_collision_free);
    EXPECT_TRUE(std::is_sorted(r.trace.begin(), r.trace.end(),
                               [](const auto& a, const auto& b) { return a.time < b.time; }));
  }
}

TEST(SimProperties, OccupancyIsPoisson) {
  // Active-transmitter count seen by every 25th arrival (well separated, so
  // nearly independent samples), binned 0..5 and >= 6.
  aoi::sim::InfiniteUserSimConfig c;
  c.params = ChannelParams::from_load(1.5);
  c.horizon = aoi::sim::Horizon::updates(1'000'000);
  c.seed = 31;
  c.record_trace = true;
  const auto r = aoi::sim::simulate_system_age(c);
  constexpr int kBins = 7;
  std::vector<double> observed(kBins, 0.0);
  long active = 0;
  std::uint64_t arrivals = 0;
  for (const auto& e : r.trace) {
    if (e.type == aoi::sim::TraceEvent::Type::Arrival) {
      if (++arrivals % 25 == 0) observed[std::min<long>(active, kBins - 1)] += 1.0;
      ++active;
    } else {
      --active;
    }
  }
  const double n = std::accumulate(observed.begin(), observed.end(), 0.0);
  double chi2 = 0.0;
  double tail = 1.0;
  for (int k = 0; k < kBins; ++k) {
    const double p = k + 1 < kBins ? aoi::testing::poisson_pmf(1.5, k) : tail;
    tail -= p;
    chi2 += (observed[k] - n * p) * (observed[k] - n * p) / (n * p);
  }
  // 99.9% point of chi-square with 6 degrees of freedom.
  EXPECT_LT(chi2, 22.46);
}

TEST(SimProperties, CliOutputIsByteIdentical) {
  const std::vector<std::vector<std::string>> commands{
      {"aoi", "sweep", "--points", "7", "--pc", "0.5,1", "--metrics", "closed_form,simulated,slotted", "--events",
       "20000", "--seed", "4"},
      {"aoi", "simulate-onoff", "--N", "4", "--rho", "0.6", "--updates", "3000", "--seed", "9"},
      {"aoi", "validate", "--rho", "0.5", "--events", "20000", "--seed", "7"},
  };
  for (const auto& args : commands) {
    std::ostringstream out1, err1, out2, err2;
    const int a = aoi::cli::run(args, out1, err1);
    const int b = aoi::cli::run(args, out2, err2);
    EXPECT_EQ(a, b);
    EXPECT_FALSE(out1.str().empty());
    EXPECT_EQ(out1.str(), out2.str()) << args[1];
  }
}

}  // namespace
