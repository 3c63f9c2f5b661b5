#include "rislocate/harness/experiment.hpp"
#include "rislocate/harness/trial_runner.hpp"

#include <benchmark/benchmark.h>

using namespace rislocate::harness;

namespace {

const Scenario& desk() {
    static const Scenario sc = resolve(ExperimentConfig{});
    return sc;
}

void BM_TrialsSerial(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(run_trials_serial(desk(), 1, int(state.range(0))));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_TrialsParallel(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(run_trials_parallel(desk(), 1, int(state.range(0))));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_RankSuiteSerial(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(rank_suite_serial(1, int(state.range(0)), 8));
}

void BM_RankSuiteParallel(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(rank_suite_parallel(1, int(state.range(0)), 8));
}

}  // namespace

BENCHMARK(BM_TrialsSerial)->Arg(16)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TrialsParallel)->Arg(16)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_RankSuiteSerial)->Arg(200)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RankSuiteParallel)->Arg(200)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
