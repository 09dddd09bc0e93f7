#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "lrf/error.hpp"

namespace lrf::detail {

// In-place Cholesky solve of M x = b for small symmetric positive definite
// systems (row-major M, n x n). The caller is responsible for any damping.
inline void spd_solve_inplace(std::vector<double>& m, std::vector<double>& b,
                              int n) {
  // Factor M = L L^T.
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double sum = m[static_cast<std::size_t>(i) * n + j];
      for (int k = 0; k < j; ++k)
        sum -= m[static_cast<std::size_t>(i) * n + k] *
               m[static_cast<std::size_t>(j) * n + k];
      if (i == j) {
        if (sum <= 0.0) throw NumericError("spd_solve: matrix not positive definite");
        m[static_cast<std::size_t>(i) * n + j] = std::sqrt(sum);
      } else {
        m[static_cast<std::size_t>(i) * n + j] =
            sum / m[static_cast<std::size_t>(j) * n + j];
      }
    }
  }
  // Forward then backward substitution.
  for (int i = 0; i < n; ++i) {
    double sum = b[i];
    for (int k = 0; k < i; ++k) sum -= m[static_cast<std::size_t>(i) * n + k] * b[k];
    b[i] = sum / m[static_cast<std::size_t>(i) * n + i];
  }
  for (int i = n - 1; i >= 0; --i) {
    double sum = b[i];
    for (int k = i + 1; k < n; ++k)
      sum -= m[static_cast<std::size_t>(k) * n + i] * b[k];
    b[i] = sum / m[static_cast<std::size_t>(i) * n + i];
  }
}

}  // namespace lrf::detail
