#include "lrf/decompose.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "spd_solve.hpp"

namespace lrf {

namespace {

void check_square(const KernelTensor& w, const char* op) {
  if (!w.square()) {
    throw DimensionError(std::string(op) + ": kernel must be square (d_v == d_h)");
  }
}

int max_rank(const KernelTensor& w) {
  return std::min(w.input_channels() * w.kernel_height(),
                  w.output_channels() * w.kernel_width());
}

void check_rank(const KernelTensor& w, int k, const char* op) {
  if (k < 1 || k > max_rank(w)) {
    throw RankError(std::string(op) + ": rank K must be in [1, min(C*d, N*d)]");
  }
}

// Converts matricized factors A (Cd x K) and B (dN x K), W ~ A * B^T,
// into per-channel filter vectors.
FactorPair factors_from_matrices(const DenseMatrix& a, const DenseMatrix& b,
                                 int c, int d, int n, int k) {
  FactorPair f(k, c, n, d);
  for (int kk = 0; kk < k; ++kk) {
    for (int cc = 0; cc < c; ++cc)
      for (int j = 0; j < d; ++j) f.v(kk, cc, j) = a.at(cc * d + j, kk);
    for (int nn = 0; nn < n; ++nn)
      for (int j = 0; j < d; ++j) f.h(nn, kk, j) = b.at(nn * d + j, kk);
  }
  return f;
}

}  // namespace

FactorPair::FactorPair(int k, int c, int n, int d)
    : k_(k), c_(c), n_(n), d_(d),
      v_(static_cast<std::size_t>(k) * c * d, 0.0),
      h_(static_cast<std::size_t>(n) * k * d, 0.0) {
  if (k < 1 || c < 1 || n < 1 || d < 1) {
    throw DimensionError("FactorPair: dims must be >= 1");
  }
}

FactorPair decompose_closed_form(const KernelTensor& w, int k) {
  check_square(w, "decompose_closed_form");
  check_rank(w, k, "decompose_closed_form");
  const int c = w.input_channels(), d = w.kernel_height(), n = w.output_channels();

  SvdResult s = svd_truncated(matricize(w), k);
  FactorPair f(k, c, n, d);
  for (int kk = 0; kk < k; ++kk) {
    const double scale = std::sqrt(s.singular_values[kk]);
    for (int cc = 0; cc < c; ++cc)
      for (int j = 0; j < d; ++j) f.v(kk, cc, j) = s.u.at(cc * d + j, kk) * scale;
    for (int nn = 0; nn < n; ++nn)
      for (int j = 0; j < d; ++j) f.h(nn, kk, j) = s.q.at(nn * d + j, kk) * scale;
  }
  return f;
}

KernelTensor reconstruct(const FactorPair& f) {
  const int c = f.input_channels(), d = f.filter_length(), n = f.output_channels();
  KernelTensor w(c, d, d, n);
  for (int cc = 0; cc < c; ++cc)
    for (int y = 0; y < d; ++y)
      for (int x = 0; x < d; ++x)
        for (int nn = 0; nn < n; ++nn) {
          double acc = 0.0;
          for (int kk = 0; kk < f.rank(); ++kk)
            acc += f.v(kk, cc, y) * f.h(nn, kk, x);
          w.at(cc, y, x, nn) = acc;
        }
  return w;
}

KernelTensor reconstruct(const FactorPair& f, const KernelDims& dims) {
  if (dims.c != f.input_channels() || dims.d != f.filter_length() ||
      dims.n != f.output_channels()) {
    throw DimensionError("reconstruct: dims do not match factor pair");
  }
  return reconstruct(f);
}

double objective_e1(const KernelTensor& w, const FactorPair& f) {
  if (w.input_channels() != f.input_channels() ||
      w.output_channels() != f.output_channels() ||
      w.kernel_height() != f.filter_length() || !w.square()) {
    throw DimensionError("objective_e1: kernel and factors have mismatched shapes");
  }
  const KernelTensor r = reconstruct(f);
  double acc = 0.0;
  for (std::size_t i = 0; i < w.data().size(); ++i) {
    const double diff = w.data()[i] - r.data()[i];
    acc += diff * diff;
  }
  return acc;
}

int select_rank(const KernelTensor& w, double energy_fraction, EnergyMode mode) {
  check_square(w, "select_rank");
  if (!(energy_fraction > 0.0 && energy_fraction <= 1.0)) {
    throw ArgumentError("select_rank: energy_fraction must be in (0, 1]");
  }
  SvdResult s = svd(matricize(w));
  std::vector<double> energy(s.singular_values.size());
  double total = 0.0;
  for (std::size_t i = 0; i < energy.size(); ++i) {
    const double sv = s.singular_values[i];
    energy[i] = mode == EnergyMode::squared ? sv * sv : sv;
    total += energy[i];
  }
  if (total <= 0.0) throw RankError("select_rank: zero kernel has no spectrum");

  // Slight slack so fraction 1.0 lands on the numerical rank rather than
  // being dragged up by noise-level singular values.
  const double target = energy_fraction * total * (1.0 - 1e-12);
  double cum = 0.0;
  for (std::size_t i = 0; i < energy.size(); ++i) {
    cum += energy[i];
    if (cum >= target) return static_cast<int>(i) + 1;
  }
  return static_cast<int>(energy.size());
}

AlsResult decompose_als(const KernelTensor& w, int k, const AlsOptions& opts) {
  check_square(w, "decompose_als");
  check_rank(w, k, "decompose_als");
  const int c = w.input_channels(), d = w.kernel_height(), n = w.output_channels();
  const DenseMatrix wm = matricize(w);
  const int rows = wm.rows(), cols = wm.cols();
  const double damping = 1e-12;

  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  DenseMatrix a(rows, k), b(cols, k);
  for (double& x : b.data()) x = unit(rng);
  // Unit-norm columns for a scale-free start.
  for (int kk = 0; kk < k; ++kk) {
    double norm = 0.0;
    for (int j = 0; j < cols; ++j) norm += b.at(j, kk) * b.at(j, kk);
    norm = std::sqrt(norm);
    if (norm > 0.0)
      for (int j = 0; j < cols; ++j) b.at(j, kk) /= norm;
  }

  auto objective = [&]() {
    double acc = 0.0;
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) {
        double r = wm.at(i, j);
        for (int kk = 0; kk < k; ++kk) r -= a.at(i, kk) * b.at(j, kk);
        acc += r * r;
      }
    return acc;
  };

  // Solves X (G + damping I) = R row-wise, writing X into `out`.
  auto ls_half_step = [&](const DenseMatrix& fixed, DenseMatrix& out,
                          bool fixed_is_b) {
    const int nf = fixed.rows();
    std::vector<double> gram(static_cast<std::size_t>(k) * k, 0.0);
    for (int j = 0; j < nf; ++j)
      for (int p = 0; p < k; ++p)
        for (int q = 0; q < k; ++q)
          gram[static_cast<std::size_t>(p) * k + q] += fixed.at(j, p) * fixed.at(j, q);
    for (int p = 0; p < k; ++p) gram[static_cast<std::size_t>(p) * k + p] += damping;

    for (int i = 0; i < out.rows(); ++i) {
      std::vector<double> rhs(k, 0.0);
      for (int j = 0; j < nf; ++j) {
        const double wij = fixed_is_b ? wm.at(i, j) : wm.at(j, i);
        for (int p = 0; p < k; ++p) rhs[p] += wij * fixed.at(j, p);
      }
      std::vector<double> gram_copy = gram;
      detail::spd_solve_inplace(gram_copy, rhs, k);
      for (int p = 0; p < k; ++p) out.at(i, p) = rhs[p];
    }
  };

  AlsResult result;
  double prev = objective();
  for (int it = 0; it < opts.max_iters; ++it) {
    ls_half_step(b, a, /*fixed_is_b=*/true);
    ls_half_step(a, b, /*fixed_is_b=*/false);
    const double obj = objective();
    result.objective_trace.push_back(obj);
    if (opts.tol > 0.0 && prev > 0.0 && (prev - obj) / prev < opts.tol) {
      prev = obj;
      break;
    }
    prev = obj;
  }
  result.factors = factors_from_matrices(a, b, c, d, n, k);
  return result;
}

CostReport layer_cost(const LayerSpec& spec, int k, bool include_bias) {
  if (spec.n < 1 || spec.c < 1 || spec.d < 1 || k < 1) {
    throw ArgumentError("layer_cost: N, C, d, K must be >= 1");
  }
  const std::int64_t n = spec.n, c = spec.c, d = spec.d, kk = k;
  CostReport r;
  r.direct_flops_per_pixel = d * d * n * c;
  r.separable_flops_per_pixel = d * kk * (n + c);
  r.theoretical_speedup = static_cast<double>(r.direct_flops_per_pixel) /
                          static_cast<double>(r.separable_flops_per_pixel);
  r.direct_params = d * d * n * c + (include_bias ? n : 0);
  r.lowrank_params = d * kk * c + d * n * kk + (include_bias ? kk + n : 0);
  r.weight_reduction = static_cast<double>(r.direct_params) /
                       static_cast<double>(r.lowrank_params);
  r.break_even_rank = d * n * c / (n + c);
  return r;
}

}  // namespace lrf
