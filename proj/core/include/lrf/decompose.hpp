#pragma once

#include <cstdint>
#include <vector>

#include "lrf/svd.hpp"
#include "lrf/tensor.hpp"

namespace lrf {

/// Rank-K factorization of a square kernel into K vertical length-d filters
/// per input channel and K horizontal length-d filters per output channel.
/// Layouts: v(k, c, j) and h(n, k, j), row-major.
class FactorPair {
 public:
  FactorPair() = default;
  FactorPair(int k, int c, int n, int d);

  int rank() const noexcept { return k_; }
  int input_channels() const noexcept { return c_; }
  int output_channels() const noexcept { return n_; }
  int filter_length() const noexcept { return d_; }

  double& v(int k, int c, int j) {
    return v_[(static_cast<std::size_t>(k) * c_ + c) * d_ + j];
  }
  double v(int k, int c, int j) const {
    return v_[(static_cast<std::size_t>(k) * c_ + c) * d_ + j];
  }
  double& h(int n, int k, int j) {
    return h_[(static_cast<std::size_t>(n) * k_ + k) * d_ + j];
  }
  double h(int n, int k, int j) const {
    return h_[(static_cast<std::size_t>(n) * k_ + k) * d_ + j];
  }

  std::vector<double>& v_data() noexcept { return v_; }
  const std::vector<double>& v_data() const noexcept { return v_; }
  std::vector<double>& h_data() noexcept { return h_; }
  const std::vector<double>& h_data() const noexcept { return h_; }

 private:
  int k_ = 0, c_ = 0, n_ = 0, d_ = 0;
  std::vector<double> v_, h_;
};

struct LayerSpec {
  int n = 1;
  int c = 1;
  int d = 1;
  int stride = 1;
  int padding = 0;
  int k = 0;  // 0 means unset
};

struct CostReport {
  std::int64_t direct_flops_per_pixel = 0;     // d^2 * N * C
  std::int64_t separable_flops_per_pixel = 0;  // d * K * (N + C)
  double theoretical_speedup = 0.0;
  std::int64_t direct_params = 0;
  std::int64_t lowrank_params = 0;
  double weight_reduction = 0.0;
  std::int64_t break_even_rank = 0;  // floor(d*N*C / (N+C))
};

/// Globally optimal rank-K factorization via truncated SVD of the
/// matricized kernel; both factor sets carry sqrt(sigma_k).
FactorPair decompose_closed_form(const KernelTensor& w, int k);

/// kernel(c, y, x, n) = sum_k v(k,c,y) * h(n,k,x).
KernelTensor reconstruct(const FactorPair& f);
KernelTensor reconstruct(const FactorPair& f, const KernelDims& dims);

/// Sum of squared residual entries between w and the reconstruction of f.
double objective_e1(const KernelTensor& w, const FactorPair& f);

enum class EnergyMode {
  squared,  // sigma^2 (variance, PCA-style); default
  raw,      // plain sigma
};

/// Smallest K whose leading spectral energy reaches energy_fraction of the
/// total. Throws RankError for a zero kernel.
int select_rank(const KernelTensor& w, double energy_fraction,
                EnergyMode mode = EnergyMode::squared);

struct AlsOptions {
  int max_iters = 100;
  std::uint64_t seed = 0;
  double tol = 0.0;  // relative objective improvement; 0 disables early stop
};

struct AlsResult {
  FactorPair factors;
  std::vector<double> objective_trace;  // objective after each iteration
};

/// Alternating least squares baseline on the matricized problem.
AlsResult decompose_als(const KernelTensor& w, int k, const AlsOptions& opts);

/// FLOP and parameter arithmetic for one layer at rank K.
CostReport layer_cost(const LayerSpec& spec, int k, bool include_bias = true);

}  // namespace lrf
