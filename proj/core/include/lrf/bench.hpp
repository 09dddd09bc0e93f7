#pragma once

#include <cstdint>
#include <vector>

#include "lrf/conv.hpp"
#include "lrf/decompose.hpp"

namespace lrf {

struct TimingStats {
  double min_s = 0.0;
  double median_s = 0.0;
  double mean_s = 0.0;
  std::vector<double> samples_s;  // timed samples only, warm-up excluded
};

struct BenchReport {
  TimingStats direct;
  TimingStats separable;
  double measured_speedup = 0.0;  // direct median / separable median
  CostReport cost;                // carries the theoretical speedup
  double max_rel_error = 0.0;     // equivalence check before timing
};

struct BenchOptions {
  int input_height = 32;
  int input_width = 32;
  int repeats = 5;
  std::uint64_t seed = 0;
};

/// Times direct vs separable convolution on identical seeded random data.
/// Verifies output equivalence first and refuses to time non-equivalent
/// kernels. One warm-up run per variant is discarded. Single-threaded.
BenchReport benchmark(const LayerSpec& spec, int k, const BenchOptions& opts);

}  // namespace lrf
