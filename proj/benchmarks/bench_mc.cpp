#include <benchmark/benchmark.h>

#include "covtest/mc.hpp"

using namespace covtest;

namespace {

// Replicate throughput of a full power estimate (both statistics share one
// Gram per replicate); the worker count is the benchmark argument.
void BM_EstimatePower(benchmark::State& state) {
  SimulationPlan plan;
  plan.n = 80;
  plan.p = 40;
  plan.replicates = 2000;
  plan.statistics = {Statistic::Tn, Statistic::CLR};
  plan.workers = static_cast<int>(state.range(0));
  const std::vector<double> thresholds{1.7, 1.7};
  const auto model = CovarianceModel::equi_correlation(40, 0.05);
  for (auto _ : state) benchmark::DoNotOptimize(estimate_power(plan, model, thresholds));
  state.SetItemsProcessed(state.iterations() * plan.replicates);
}

void BM_Calibrate(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        calibrate_null_threshold(Statistic::Tn, 80, 40, 0.05, 2000, 1, 1));
  }
  state.SetItemsProcessed(state.iterations() * 2000);
}

}  // namespace

BENCHMARK(BM_EstimatePower)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Calibrate)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
