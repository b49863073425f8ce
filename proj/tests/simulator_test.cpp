#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "aoi/collision.hpp"
#include "aoi/error.hpp"
#include "aoi/simulator.hpp"
#include "support/oracles.hpp"

namespace {

using aoi::collision::ChannelParams;
using aoi::sim::Horizon;
using aoi::sim::InfiniteUserSimConfig;
using aoi::sim::OnOffSimConfig;

InfiniteUserSimConfig infinite(double rho, double p_c, std::uint64_t updates, std::uint64_t seed) {
  InfiniteUserSimConfig c;
  c.params = ChannelParams::from_load(rho, 1.0, p_c);
  c.horizon = Horizon::updates(updates);
  c.seed = seed;
  return c;
}

TEST(SimConfigTest, RejectsInvalidConfigs) {
  auto c = infinite(0.5, 1.0, 1000, 1);
  c.horizon = Horizon::updates(0);
  EXPECT_THROW(aoi::sim::simulate_system_age(c), aoi::InvalidParams);
  c.horizon = Horizon::time(-1.0);
  EXPECT_THROW(aoi::sim::simulate_system_age(c), aoi::InvalidParams);
  c = infinite(0.5, 1.0, 1000, 1);
  c.batches = 1;
  EXPECT_THROW(aoi::sim::simulate_system_age(c), aoi::InvalidParams);
  c = infinite(0.5, 0.0, 1000, 1);
  EXPECT_THROW(aoi::sim::simulate_system_age(c), aoi::InvalidParams);

  OnOffSimConfig o;
  o.n_sources = 2;
  o.lambda0 = 2.0;
  o.mu = 2.0;
  EXPECT_THROW(aoi::sim::simulate_individual_age(o), aoi::InvalidParams);
  o.lambda0 = 3.0;
  EXPECT_THROW(aoi::sim::simulate_individual_age(o), aoi::InvalidParams);
  o.lambda0 = 0.5;
  o.n_sources = 1;
  EXPECT_THROW(aoi::sim::simulate_individual_age(o), aoi::InvalidParams);
}

TEST(SystemAgeSimTest, OptimumPerfectChannel) {
  const auto r = aoi::sim::simulate_system_age(infinite(0.5195, 1.0, 1'000'000, 1));
  EXPECT_NEAR(r.mean_age / 5.513, 1.0, 0.02);
  EXPECT_GT(r.ci_halfwidth, 0.0);
  EXPECT_FALSE(r.degenerate);
  EXPECT_DOUBLE_EQ(r.mean_age, r.system_age);
  EXPECT_EQ(r.per_source_ages.size(), 1u);
}

TEST(SystemAgeSimTest, OptimumLossyChannel) {
  const auto r = aoi::sim::simulate_system_age(infinite(0.5625, 0.5, 1'000'000, 2));
  EXPECT_NEAR(r.mean_age / 10.40, 1.0, 0.02);
  EXPECT_GT(r.failed_collision_free, 0u);
}

TEST(SystemAgeSimTest, BusyFractionIsInfiniteServerOccupancy) {
  const auto r = aoi::sim::simulate_system_age(infinite(0.5, 1.0, 1'000'000, 5));
  const double expected = 1.0 - std::exp(-0.5);
  EXPECT_NEAR(r.channel_busy_fraction / expected, 1.0, 0.005);
  EXPECT_NEAR(std::accumulate(r.occupancy_fraction.begin(), r.occupancy_fraction.end(), 0.0), 1.0, 1e-9);
}

TEST(SystemAgeSimTest, TimeHorizon) {
  auto c = infinite(0.8, 0.9, 0, 9);
  c.horizon = Horizon::time(500'000.0);
  const auto r = aoi::sim::simulate_system_age(c);
  EXPECT_NEAR(r.observed_time, 0.99 * 500'000.0, 1e-6);
  const double theory = aoi::collision::system_age_closed_form(c.params);
  EXPECT_NEAR(r.mean_age / theory, 1.0, 0.03);
}

TEST(SystemAgeSimTest, OverloadedChannelIsFlaggedDegenerate) {
  InfiniteUserSimConfig c;
  c.params = ChannelParams::from_load(200.0);
  c.horizon = Horizon::updates(2000);
  const auto r = aoi::sim::simulate_system_age(c);
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.successful_deliveries, 0u);
  ASSERT_FALSE(r.warnings.empty());
  EXPECT_GT(r.mean_age, 0.0);
}

TEST(SystemAgeSimTest, TraceAgreesWithIntervalSweep) {
  auto c = infinite(0.7, 0.6, 5'000, 17);
  c.record_trace = true;
  const auto r = aoi::sim::simulate_system_age(c);
  ASSERT_EQ(r.trace.size(), 2 * r.transmissions);
  const auto ivs = aoi::testing::intervals_from_trace(r.trace);
  const auto clean = aoi::testing::overlap_free(ivs);
  EXPECT_EQ(clean.size(), r.successful_deliveries + r.failed_collision_free);
  EXPECT_EQ(r.successful_deliveries + r.failed_collision_free + r.collided, r.transmissions);
  EXPECT_EQ(r.transmissions, 5'000u);
}

TEST(SystemAgeSimTest, SawtoothIntegralMatchesSampledPath) {
  // With a perfect channel every overlap-free update is delivered, so the age
  // path can be rebuilt from the trace alone.
  auto c = infinite(0.6, 1.0, 20'000, 23);
  c.record_trace = true;
  c.warmup_fraction = 0.0;
  const auto r = aoi::sim::simulate_system_age(c);
  const auto ivs = aoi::testing::intervals_from_trace(r.trace);
  std::vector<std::pair<double, double>> deliveries;
  for (auto id : aoi::testing::overlap_free(ivs)) deliveries.emplace_back(ivs.at(id).end, ivs.at(id).start);
  const double sampled = aoi::testing::sampled_age_average(deliveries, 0.0, r.observed_time, 20'000'000);
  EXPECT_NEAR(sampled / r.mean_age, 1.0, 1e-4);
}

TEST(SystemAgeSimTest, SeededDeterminism) {
  auto c = infinite(0.9, 0.8, 10'000, 77);
  c.record_trace = true;
  const auto a = aoi::sim::simulate_system_age(c);
  const auto b = aoi::sim::simulate_system_age(c);
  EXPECT_EQ(a.mean_age, b.mean_age);
  EXPECT_EQ(a.ci_halfwidth, b.ci_halfwidth);
  ASSERT_EQ(a.trace.size(), b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    EXPECT_EQ(a.trace[i].time, b.trace[i].time);
    EXPECT_EQ(a.trace[i].update_id, b.trace[i].update_id);
  }
  c.seed = 78;
  EXPECT_NE(aoi::sim::simulate_system_age(c).mean_age, a.mean_age);
}

TEST(SystemAgeSimTest, WriteTraceFormat) {
  std::vector<aoi::sim::TraceEvent> trace{{0.5, aoi::sim::TraceEvent::Type::Arrival, 3, 7},
                                          {1.25, aoi::sim::TraceEvent::Type::Departure, 3, 7}};
  std::ostringstream os;
  aoi::sim::write_trace(os, trace);
  EXPECT_EQ(os.str(), "0.5 A 3 7\n1.25 D 3 7\n");
}

TEST(OnOffSimTest, PerSourceAgesAndSummary) {
  OnOffSimConfig c;
  c.n_sources = 5;
  c.mu = 5.0;
  c.lambda0 = 0.6;
  c.updates_per_source = 20'000;
  c.seed = 4;
  const auto r = aoi::sim::simulate_individual_age(c);
  ASSERT_EQ(r.per_source_ages.size(), 5u);
  const double avg = std::accumulate(r.per_source_ages.begin(), r.per_source_ages.end(), 0.0) / 5.0;
  EXPECT_NEAR(avg, r.mean_age, 1e-12 * avg);
  EXPECT_LT(r.system_age, r.mean_age);
  EXPECT_EQ(r.transmissions, 100'000u);
  EXPECT_EQ(r.successful_deliveries + r.failed_collision_free + r.collided, r.transmissions);
  EXPECT_TRUE(r.warnings.empty());
}

TEST(OnOffSimTest, NoSelfCollisionsInTrace) {
  OnOffSimConfig c;
  c.n_sources = 4;
  c.mu = 4.0;
  c.lambda0 = 1.5;
  c.updates_per_source = 2'000;
  c.record_trace = true;
  const auto r = aoi::sim::simulate_individual_age(c);
  const auto ivs = aoi::testing::intervals_from_trace(r.trace);
  std::map<std::uint64_t, std::vector<aoi::testing::Interval>> by_source;
  for (const auto& [id, iv] : ivs) by_source[iv.source].push_back(iv);
  for (auto& [src, list] : by_source) {
    std::sort(list.begin(), list.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
    for (std::size_t i = 1; i < list.size(); ++i) EXPECT_GE(list[i].start, list[i - 1].end);
  }
  EXPECT_EQ(aoi::testing::overlap_free(ivs).size(), r.successful_deliveries + r.failed_collision_free);
}

TEST(OnOffSimTest, ApproachesAsymptoticAge) {
  OnOffSimConfig c;
  c.n_sources = 20;
  c.mu = 20.0;
  c.lambda0 = 0.6;
  c.seed = 3;
  const auto r = aoi::sim::simulate_individual_age(c);
  const double asymptotic = aoi::collision::asymptotic_individual_age(0.6);
  EXPECT_NEAR(r.mean_age / asymptotic, 1.0, 0.05);
  EXPECT_LE(r.mean_age, aoi::collision::individual_age(ChannelParams::from_load(0.6, 20.0), 20));
}

TEST(ReplicateTest, SingleReplicationEqualsDerivedSeedRun) {
  auto c = infinite(0.5, 1.0, 50'000, 0);
  const auto rep = aoi::sim::replicate(c, 1, 99);
  c.seed = aoi::sim::derive_seed(99, 0);
  const auto single = aoi::sim::simulate_system_age(c);
  EXPECT_EQ(rep.mean_age, single.mean_age);
  EXPECT_EQ(rep.ci_halfwidth, single.ci_halfwidth);
  EXPECT_EQ(rep.transmissions, single.transmissions);
}

TEST(ReplicateTest, DeterministicAcrossCalls) {
  const auto c = infinite(0.5, 0.8, 20'000, 0);
  const auto a = aoi::sim::replicate(c, 8, 5);
  const auto b = aoi::sim::replicate(c, 8, 5);
  EXPECT_EQ(a.mean_age, b.mean_age);
  EXPECT_EQ(a.ci_halfwidth, b.ci_halfwidth);
  EXPECT_EQ(a.successful_deliveries, b.successful_deliveries);
  EXPECT_EQ(a.replications, 8u);
}

TEST(ReplicateTest, ConfidenceIntervalShrinksWithReplications) {
  const auto c = infinite(0.5, 1.0, 100'000, 0);
  const auto one = aoi::sim::replicate(c, 1, 11);
  const auto many = aoi::sim::replicate(c, 20, 11);
  const double ratio = many.ci_halfwidth / one.ci_halfwidth;
  const double expected = 1.0 / std::sqrt(20.0);
  EXPECT_GT(ratio, 0.5 * expected);
  EXPECT_LT(ratio, 2.0 * expected);
  EXPECT_THROW(aoi::sim::replicate(c, 0, 1), aoi::InvalidParams);
}

TEST(ReplicateTest, OnOffReplicationsAverageSources) {
  OnOffSimConfig c;
  c.n_sources = 3;
  c.mu = 3.0;
  c.lambda0 = 0.5;
  c.updates_per_source = 5'000;
  const auto r = aoi::sim::replicate(c, 4, 2);
  EXPECT_EQ(r.per_source_ages.size(), 3u);
  EXPECT_EQ(r.transmissions, 4u * 15'000u);
}

TEST(DeriveSeedTest, StreamsDiffer) {
  EXPECT_NE(aoi::sim::derive_seed(1, 0), aoi::sim::derive_seed(1, 1));
  EXPECT_NE(aoi::sim::derive_seed(1, 0), aoi::sim::derive_seed(2, 0));
  EXPECT_EQ(aoi::sim::derive_seed(1, 5), aoi::sim::derive_seed(1, 5));
}

TEST(StudentTTest, KnownQuantiles) {
  EXPECT_NEAR(aoi::sim::t_critical_95(31), 2.0395, 1e-4);
  EXPECT_NEAR(aoi::sim::t_critical_95(19), 2.0930, 1e-4);
  EXPECT_TRUE(std::isinf(aoi::sim::t_critical_95(0)));
}

}  // namespace
