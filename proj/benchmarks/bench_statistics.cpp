#include <benchmark/benchmark.h>

#include "covtest/covmodels.hpp"
#include "covtest/rng.hpp"
#include "covtest/stats.hpp"

using namespace covtest;

namespace {

DataMatrix make_data(Index n, Index p) {
  RngStream stream(1, 0);
  return sample(CovarianceModel::identity(p), n, stream);
}

// O(n^2 p) reference: every pair through the kernel.
double pairwise_T(const DataMatrix& x) {
  const Index n = x.n();
  const Matrix& v = x.values();
  double sum = 0.0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const double d = v.row(i).dot(v.row(j));
      sum += d * d - v.row(i).squaredNorm() - v.row(j).squaredNorm();
    }
  }
  const double dn = static_cast<double>(n);
  return 2.0 * sum / (dn * (dn - 1.0)) + static_cast<double>(x.p());
}

void BM_T_Pairwise(benchmark::State& state) {
  const auto x = make_data(state.range(0), state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(pairwise_T(x));
}

void BM_T_SampleGram(benchmark::State& state) {
  const auto x = make_data(state.range(0), state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(statistic_T(x, GramPath::SampleGram));
}

void BM_T_FeatureGram(benchmark::State& state) {
  const auto x = make_data(state.range(0), state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(statistic_T(x, GramPath::FeatureGram));
}

void BM_L(benchmark::State& state) {
  const auto x = make_data(state.range(0), state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(statistic_L(x));
}

void BM_Sample(benchmark::State& state) {
  const auto f = factorize(CovarianceModel::equi_correlation(state.range(1), 0.1).build());
  std::uint64_t r = 0;
  for (auto _ : state) {
    RngStream stream(7, r++);
    benchmark::DoNotOptimize(sample(f, state.range(0), stream));
  }
}

void shapes(benchmark::internal::Benchmark* b) {
  b->Args({80, 40})->Args({200, 40})->Args({200, 100})->Args({100, 400});
}

}  // namespace

BENCHMARK(BM_T_Pairwise)->Apply(shapes);
BENCHMARK(BM_T_SampleGram)->Apply(shapes);
BENCHMARK(BM_T_FeatureGram)->Apply(shapes);
BENCHMARK(BM_L)->Args({80, 40})->Args({200, 100});
BENCHMARK(BM_Sample)->Args({80, 40})->Args({200, 100});
