// Serial reference against the OpenMP runner on the same replicates.

#include <benchmark/benchmark.h>
#include <omp.h>

#include "backfill/simulate.hpp"

namespace {

using namespace backfill;

const Scenario& scenario()
{
    static const Scenario s = builtin_scenarios().at(2);
    return s;
}

void BM_SimulateSerial(benchmark::State& state)
{
    DesignConfig design;
    design.backfill = BackfillPolicy::Full;
    const int sims = static_cast<int>(state.range(0));
    for (auto _ : state) {
        benchmark::DoNotOptimize(simulate_serial(design, scenario(), sims, 7));
    }
    state.SetItemsProcessed(state.iterations() * sims);
}

void BM_SimulateParallel(benchmark::State& state)
{
    DesignConfig design;
    design.backfill = BackfillPolicy::Full;
    const int sims = static_cast<int>(state.range(0));
    const int workers = static_cast<int>(state.range(1));
    for (auto _ : state) {
        benchmark::DoNotOptimize(simulate_parallel(design, scenario(), sims, 7, workers));
    }
    state.SetItemsProcessed(state.iterations() * sims);
}

void BM_Fit(benchmark::State& state)
{
    const std::vector<Observation> data{{1.5, 1.0, false}, {1.5, 1.0, false}, {1.5, 1.0, false},
                                        {2.5, 1.0, false}, {2.5, 1.0, true},  {2.5, 1.0, false}};
    const SamplerConfig config;
    const PriorHyper prior;
    std::uint64_t seed = 1;
    for (auto _ : state) {
        Xoshiro256 rng(seed++);
        benchmark::DoNotOptimize(fit(data, prior, config, rng));
    }
}

} // namespace

BENCHMARK(BM_SimulateSerial)->Arg(16)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SimulateParallel)
    ->ArgsProduct({{16}, {1, 2, 4}})
    ->Unit(benchmark::kMillisecond)
    ->UseRealTime();
BENCHMARK(BM_Fit)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
