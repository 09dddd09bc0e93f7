#pragma once

#include <cstdint>
#include <vector>

#include "lrf/tensor.hpp"

namespace lrf {

/// All valid stride-s d x d windows of a feature map, each flipped in both
/// spatial axes, enumerated in row-major position order.
class PatchSet {
 public:
  PatchSet(int channels, int d, int stride, int pos_y, int pos_x);

  int channels() const noexcept { return c_; }
  int patch_size() const noexcept { return d_; }
  int stride() const noexcept { return stride_; }
  int positions_y() const noexcept { return pos_y_; }
  int positions_x() const noexcept { return pos_x_; }
  int count() const noexcept { return pos_y_ * pos_x_; }

  double& at(int m, int c, int r, int j) {
    return data_[((static_cast<std::size_t>(m) * c_ + c) * d_ + r) * d_ + j];
  }
  double at(int m, int c, int r, int j) const {
    return data_[((static_cast<std::size_t>(m) * c_ + c) * d_ + r) * d_ + j];
  }

  /// Stacked per-channel block for position m: (C*d) x d, channel c occupying
  /// rows [c*d, (c+1)*d). Column replication across output channels is left
  /// to the caller.
  DenseMatrix stacked_block(int m) const;

 private:
  int c_, d_, stride_, pos_y_, pos_x_;
  std::vector<double> data_;
};

/// Non-negative weight matrix for the data-dependent criterion, stored as a
/// single (C*d) x d block. The full (C*d) x (d*N) matrix repeats the block N
/// times across column blocks; expand() materializes it.
class WeightMatrix {
 public:
  explicit WeightMatrix(DenseMatrix block) : block_(std::move(block)) {}

  const DenseMatrix& block() const noexcept { return block_; }
  DenseMatrix expand(int n_out) const;

 private:
  DenseMatrix block_;
};

PatchSet extract_patches(const FeatureMap& z, int d, int stride);

/// Accumulates sum of squared stacked patches over all samples and positions.
WeightMatrix build_weight_matrix(const std::vector<FeatureMap>& samples, int d,
                                 int stride);

/// sum_ij G_ij (W_ij - W~_ij)^2.
double weighted_objective(const DenseMatrix& w, const DenseMatrix& w_tilde,
                          const DenseMatrix& g);

struct WlraOptions {
  int max_iters = 200;
  double tol = 0.0;  // relative objective improvement; 0 disables early stop
  std::uint64_t seed = 0;
};

struct WlraResult {
  DenseMatrix approx;                   // rank <= K
  DenseMatrix left;                     // rows x K
  DenseMatrix right;                    // cols x K
  std::vector<double> objective_trace;  // after each iteration, non-increasing
};

/// Heuristic alternating solver for the Hadamard-weighted low-rank problem.
/// Each half-step solves an independent damped weighted least-squares system
/// per row (resp. column). Exact solving is NP-hard in general.
WlraResult weighted_als(const DenseMatrix& w, const DenseMatrix& g, int k,
                        const WlraOptions& opts);

}  // namespace lrf
