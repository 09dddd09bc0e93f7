#include "lrf/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

namespace lrf {

namespace {

TimingStats stats_from(std::vector<double> samples) {
  TimingStats s;
  s.min_s = *std::min_element(samples.begin(), samples.end());
  s.mean_s = std::accumulate(samples.begin(), samples.end(), 0.0) /
             static_cast<double>(samples.size());
  std::vector<double> sorted = samples;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  s.median_s = n % 2 == 1 ? sorted[n / 2]
                          : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  s.samples_s = std::move(samples);
  return s;
}

template <typename F>
std::vector<double> time_runs(F&& run, int repeats) {
  using clock = std::chrono::steady_clock;
  double sink = 0.0;
  sink += run();  // warm-up, discarded
  std::vector<double> samples;
  samples.reserve(repeats);
  for (int i = 0; i < repeats; ++i) {
    const auto t0 = clock::now();
    sink += run();
    const auto t1 = clock::now();
    samples.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  // Keep the compiler from discarding the timed work.
  asm volatile("" : : "g"(&sink) : "memory");
  return samples;
}

}  // namespace

BenchReport benchmark(const LayerSpec& spec, int k, const BenchOptions& opts) {
  if (opts.repeats < 3) throw ArgumentError("benchmark: repeats must be >= 3");

  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  FeatureMap input(spec.c, opts.input_height, opts.input_width);
  for (double& x : input.data()) x = unit(rng);
  FactorPair f(k, spec.c, spec.n, spec.d);
  for (double& x : f.v_data()) x = unit(rng);
  for (double& x : f.h_data()) x = unit(rng);
  const KernelTensor w = reconstruct(f);

  const ConvConfig cfg{spec.stride, spec.padding, CorrelationMode::cross_correlation};

  // Equivalence gate: never time two kernels that compute different things.
  const FeatureMap ref = conv_direct(input, w, cfg);
  const FeatureMap sep = conv_separable(input, f, cfg);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < ref.data().size(); ++i) {
    const double diff = ref.data()[i] - sep.data()[i];
    num += diff * diff;
    den += ref.data()[i] * ref.data()[i];
  }
  const double rel = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
  if (!(rel <= 1e-10)) {
    throw NumericError("benchmark: direct and separable outputs disagree");
  }

  BenchReport report;
  report.max_rel_error = rel;
  report.cost = layer_cost(spec, k);
  report.direct = stats_from(time_runs(
      [&]() { return conv_direct(input, w, cfg).at(0, 0, 0); }, opts.repeats));
  report.separable = stats_from(time_runs(
      [&]() { return conv_separable(input, f, cfg).at(0, 0, 0); }, opts.repeats));
  report.measured_speedup = report.direct.median_s / report.separable.median_s;
  return report;
}

}  // namespace lrf
