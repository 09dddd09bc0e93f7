#pragma once

#include <random>

#include "lrf/decompose.hpp"
#include "lrf/tensor.hpp"

namespace lrf::testing {

inline KernelTensor random_kernel(int c, int d, int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  KernelTensor w(c, d, d, n);
  for (double& x : w.data()) x = dist(rng);
  return w;
}

inline DenseMatrix random_matrix(int rows, int cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  DenseMatrix m(rows, cols);
  for (double& x : m.data()) x = dist(rng);
  return m;
}

inline FeatureMap random_feature_map(int c, int y, int x, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  FeatureMap z(c, y, x);
  for (double& v : z.data()) v = dist(rng);
  return z;
}

inline FactorPair random_factors(int k, int c, int n, int d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  FactorPair f(k, c, n, d);
  for (double& x : f.v_data()) x = dist(rng);
  for (double& x : f.h_data()) x = dist(rng);
  return f;
}

inline double rel_frobenius_diff(const std::vector<double>& a,
                                 const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    num += diff * diff;
    den += a[i] * a[i];
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

}  // namespace lrf::testing
