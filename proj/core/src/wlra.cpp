#include "lrf/wlra.hpp"

#include <cmath>
#include <random>

#include "spd_solve.hpp"

namespace lrf {

PatchSet::PatchSet(int channels, int d, int stride, int pos_y, int pos_x)
    : c_(channels), d_(d), stride_(stride), pos_y_(pos_y), pos_x_(pos_x),
      data_(static_cast<std::size_t>(pos_y) * pos_x * channels * d * d, 0.0) {}

DenseMatrix PatchSet::stacked_block(int m) const {
  DenseMatrix block(c_ * d_, d_);
  for (int c = 0; c < c_; ++c)
    for (int r = 0; r < d_; ++r)
      for (int j = 0; j < d_; ++j) block.at(c * d_ + r, j) = at(m, c, r, j);
  return block;
}

DenseMatrix WeightMatrix::expand(int n_out) const {
  if (n_out < 1) throw ArgumentError("WeightMatrix::expand: N must be >= 1");
  const int rows = block_.rows(), d = block_.cols();
  DenseMatrix g(rows, d * n_out);
  for (int i = 0; i < rows; ++i)
    for (int n = 0; n < n_out; ++n)
      for (int j = 0; j < d; ++j) g.at(i, n * d + j) = block_.at(i, j);
  return g;
}

PatchSet extract_patches(const FeatureMap& z, int d, int stride) {
  if (d > z.height() || d > z.width()) {
    throw DimensionError("extract_patches: patch larger than feature map");
  }
  if (stride < 1) throw ArgumentError("extract_patches: stride must be >= 1");
  const int pos_y = (z.height() - d) / stride + 1;
  const int pos_x = (z.width() - d) / stride + 1;
  PatchSet patches(z.channels(), d, stride, pos_y, pos_x);
  for (int py = 0; py < pos_y; ++py)
    for (int px = 0; px < pos_x; ++px) {
      const int m = py * pos_x + px;
      for (int c = 0; c < z.channels(); ++c)
        for (int r = 0; r < d; ++r)
          for (int j = 0; j < d; ++j)
            patches.at(m, c, r, j) =
                z.at(c, py * stride + d - 1 - r, px * stride + d - 1 - j);
    }
  return patches;
}

WeightMatrix build_weight_matrix(const std::vector<FeatureMap>& samples, int d,
                                 int stride) {
  if (samples.empty()) {
    throw ArgumentError("build_weight_matrix: empty sample set");
  }
  const int channels = samples.front().channels();
  DenseMatrix block(channels * d, d);
  for (const FeatureMap& z : samples) {
    if (z.channels() != channels) {
      throw DimensionError("build_weight_matrix: samples have mixed channel counts");
    }
    const PatchSet patches = extract_patches(z, d, stride);
    for (int m = 0; m < patches.count(); ++m)
      for (int c = 0; c < channels; ++c)
        for (int r = 0; r < d; ++r)
          for (int j = 0; j < d; ++j) {
            const double v = patches.at(m, c, r, j);
            block.at(c * d + r, j) += v * v;
          }
  }
  return WeightMatrix(std::move(block));
}

double weighted_objective(const DenseMatrix& w, const DenseMatrix& w_tilde,
                          const DenseMatrix& g) {
  if (w.rows() != w_tilde.rows() || w.cols() != w_tilde.cols() ||
      w.rows() != g.rows() || w.cols() != g.cols()) {
    throw DimensionError("weighted_objective: shape mismatch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < w.data().size(); ++i) {
    const double diff = w.data()[i] - w_tilde.data()[i];
    acc += g.data()[i] * diff * diff;
  }
  return acc;
}

WlraResult weighted_als(const DenseMatrix& w, const DenseMatrix& g, int k,
                        const WlraOptions& opts) {
  if (w.rows() != g.rows() || w.cols() != g.cols()) {
    throw DimensionError("weighted_als: weight matrix shape mismatch");
  }
  if (k < 1 || k > std::min(w.rows(), w.cols())) {
    throw RankError("weighted_als: rank K out of range");
  }
  bool any_weight = false;
  for (double x : g.data()) {
    if (x < 0.0) throw ArgumentError("weighted_als: negative weight");
    if (x > 0.0) any_weight = true;
  }
  if (!any_weight) {
    throw ArgumentError("weighted_als: all-zero weight matrix is degenerate");
  }

  const int rows = w.rows(), cols = w.cols();
  const double damping = 1e-12;

  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  DenseMatrix a(rows, k), b(cols, k);
  for (double& x : b.data()) x = unit(rng);
  for (int kk = 0; kk < k; ++kk) {
    double norm = 0.0;
    for (int j = 0; j < cols; ++j) norm += b.at(j, kk) * b.at(j, kk);
    norm = std::sqrt(norm);
    if (norm > 0.0)
      for (int j = 0; j < cols; ++j) b.at(j, kk) /= norm;
  }

  auto product = [&]() {
    DenseMatrix p(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) {
        double acc = 0.0;
        for (int kk = 0; kk < k; ++kk) acc += a.at(i, kk) * b.at(j, kk);
        p.at(i, j) = acc;
      }
    return p;
  };

  // One damped weighted least-squares solve per row of `out`.
  auto half_step = [&](const DenseMatrix& fixed, DenseMatrix& out, bool rows_of_w) {
    const int nf = fixed.rows();
    std::vector<double> m(static_cast<std::size_t>(k) * k);
    std::vector<double> rhs(k);
    for (int i = 0; i < out.rows(); ++i) {
      std::fill(m.begin(), m.end(), 0.0);
      std::fill(rhs.begin(), rhs.end(), 0.0);
      for (int j = 0; j < nf; ++j) {
        const double gij = rows_of_w ? g.at(i, j) : g.at(j, i);
        if (gij == 0.0) continue;
        const double wij = rows_of_w ? w.at(i, j) : w.at(j, i);
        for (int p = 0; p < k; ++p) {
          const double fp = fixed.at(j, p);
          rhs[p] += gij * wij * fp;
          for (int q = 0; q <= p; ++q)
            m[static_cast<std::size_t>(p) * k + q] += gij * fp * fixed.at(j, q);
        }
      }
      for (int p = 0; p < k; ++p) {
        for (int q = p + 1; q < k; ++q)
          m[static_cast<std::size_t>(p) * k + q] = m[static_cast<std::size_t>(q) * k + p];
        m[static_cast<std::size_t>(p) * k + p] += damping;
      }
      detail::spd_solve_inplace(m, rhs, k);
      for (int p = 0; p < k; ++p) out.at(i, p) = rhs[p];
    }
  };

  WlraResult result;
  double prev = weighted_objective(w, product(), g);
  for (int it = 0; it < opts.max_iters; ++it) {
    half_step(b, a, /*rows_of_w=*/true);
    half_step(a, b, /*rows_of_w=*/false);
    const double obj = weighted_objective(w, product(), g);
    result.objective_trace.push_back(obj);
    if (opts.tol > 0.0 && prev > 0.0 && (prev - obj) / prev < opts.tol) {
      prev = obj;
      break;
    }
    prev = obj;
  }
  result.approx = product();
  result.left = std::move(a);
  result.right = std::move(b);
  return result;
}

}  // namespace lrf
