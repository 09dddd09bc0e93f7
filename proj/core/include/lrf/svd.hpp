#pragma once

#include <vector>

#include "lrf/tensor.hpp"

namespace lrf {

/// Thin SVD, W = U * diag(singular_values) * Q^T with r = min(rows, cols).
struct SvdResult {
  DenseMatrix u;                       // rows x r
  std::vector<double> singular_values; // length r, descending, >= 0
  DenseMatrix q;                       // cols x r
};

/// Deterministic thin SVD. Sign convention: in each left singular vector the
/// entry with the largest magnitude is positive, ties broken by lowest index.
/// Throws NumericError on non-finite input or convergence failure.
SvdResult svd(const DenseMatrix& m);

/// Leading-k partial SVD: only the top k singular triplets are computed,
/// which is much faster than svd() on large matrices when k is small.
/// Same sign convention and error behavior as svd().
SvdResult svd_truncated(const DenseMatrix& m, int k);

/// Best rank-k approximation U_k diag(s_k) Q_k^T from a precomputed SVD.
DenseMatrix truncated_reconstruction(const SvdResult& s, int k);

}  // namespace lrf
