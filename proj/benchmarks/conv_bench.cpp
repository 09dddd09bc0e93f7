// Microbenchmarks for direct vs separable convolution and for the
// closed-form decomposition itself.

#include <benchmark/benchmark.h>

#include <random>

#include "lrf/conv.hpp"
#include "lrf/decompose.hpp"
#include "lrf/tensor.hpp"

namespace {

lrf::FeatureMap random_map(int c, int y, int x, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  lrf::FeatureMap z(c, y, x);
  for (double& v : z.data()) v = dist(rng);
  return z;
}

lrf::FactorPair random_factors(int k, int c, int n, int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  lrf::FactorPair f(k, c, n, d);
  for (double& v : f.v_data()) v = dist(rng);
  for (double& v : f.h_data()) v = dist(rng);
  return f;
}

// Args: {C, N, d, K, input size}
void BM_ConvDirect(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const int n = static_cast<int>(state.range(1));
  const int d = static_cast<int>(state.range(2));
  const int k = static_cast<int>(state.range(3));
  const int size = static_cast<int>(state.range(4));
  lrf::FeatureMap z = random_map(c, size, size, 1);
  lrf::KernelTensor w = lrf::reconstruct(random_factors(k, c, n, d, 2));
  for (auto _ : state) {
    lrf::FeatureMap out = lrf::conv_direct(z, w, {});
    benchmark::DoNotOptimize(out.data().data());
  }
}

void BM_ConvSeparable(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const int n = static_cast<int>(state.range(1));
  const int d = static_cast<int>(state.range(2));
  const int k = static_cast<int>(state.range(3));
  const int size = static_cast<int>(state.range(4));
  lrf::FeatureMap z = random_map(c, size, size, 1);
  lrf::FactorPair f = random_factors(k, c, n, d, 2);
  for (auto _ : state) {
    lrf::FeatureMap out = lrf::conv_separable(z, f, {});
    benchmark::DoNotOptimize(out.data().data());
  }
}

// Args: {C, N, d, K}
void BM_Decompose(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const int n = static_cast<int>(state.range(1));
  const int d = static_cast<int>(state.range(2));
  const int k = static_cast<int>(state.range(3));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  lrf::KernelTensor w(c, d, d, n);
  for (double& v : w.data()) v = dist(rng);
  for (auto _ : state) {
    lrf::FactorPair f = lrf::decompose_closed_form(w, k);
    benchmark::DoNotOptimize(f.v_data().data());
  }
}

}  // namespace

BENCHMARK(BM_ConvDirect)
    ->Args({3, 96, 11, 8, 32})
    ->Args({192, 128, 5, 8, 32})
    ->Args({128, 256, 5, 16, 32})
    ->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvSeparable)
    ->Args({3, 96, 11, 8, 32})
    ->Args({192, 128, 5, 8, 32})
    ->Args({128, 256, 5, 16, 32})
    ->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Decompose)
    ->Args({3, 96, 11, 8})
    ->Args({48, 256, 5, 16})
    ->Args({256, 384, 3, 32})
    ->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
