#include <benchmark/benchmark.h>

#include "aoi/collision.hpp"
#include "aoi/shs.hpp"
#include "aoi/simulator.hpp"

namespace {

using aoi::collision::ChannelParams;
namespace col = aoi::collision;

const ChannelParams kParams = ChannelParams::from_load(0.5195, 1.0, 0.8);

void BM_SolveAge(benchmark::State& state) {
  const auto model = col::build_chain(kParams, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(aoi::shs::solve_age(model).delta);
}
BENCHMARK(BM_SolveAge)->Arg(60)->Arg(120)->Arg(500)->Unit(benchmark::kMillisecond);

void BM_ClosedForm(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(col::system_age_closed_form(kParams));
}
BENCHMARK(BM_ClosedForm);

void BM_Recursion(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(col::appendix_recursion_age(kParams, m));
}
BENCHMARK(BM_Recursion)->Arg(60)->Arg(500);

void BM_OptimizeLoad(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(col::optimize_load(col::LoadObjective::system_age(1.0)).rho_star);
}
BENCHMARK(BM_OptimizeLoad)->Unit(benchmark::kMillisecond);

void BM_SimulateSystemAge(benchmark::State& state) {
  aoi::sim::InfiniteUserSimConfig cfg;
  cfg.params = kParams;
  cfg.horizon = aoi::sim::Horizon::updates(static_cast<std::uint64_t>(state.range(0)));
  for (auto _ : state) {
    ++cfg.seed;
    benchmark::DoNotOptimize(aoi::sim::simulate_system_age(cfg).mean_age);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SimulateSystemAge)->Arg(100'000)->Unit(benchmark::kMillisecond);

void BM_SimulateOnOff(benchmark::State& state) {
  aoi::sim::OnOffSimConfig cfg;
  cfg.updates_per_source = 5'000;
  for (auto _ : state) {
    ++cfg.seed;
    benchmark::DoNotOptimize(aoi::sim::simulate_individual_age(cfg).mean_age);
  }
}
BENCHMARK(BM_SimulateOnOff)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
