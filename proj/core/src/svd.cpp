#include "lrf/svd.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

#include <lapacke.h>

namespace lrf {

SvdResult svd(const DenseMatrix& m) {
  for (double x : m.data()) {
    if (!std::isfinite(x)) throw NumericError("svd: non-finite input entry");
  }

  const int rows = m.rows(), cols = m.cols();
  const int r = std::min(rows, cols);

  std::vector<double> a = m.data();  // dgesdd overwrites its input
  std::vector<double> s(r);
  std::vector<double> u(static_cast<std::size_t>(rows) * r);
  std::vector<double> vt(static_cast<std::size_t>(r) * cols);

  int info = LAPACKE_dgesdd(LAPACK_ROW_MAJOR, 'S', rows, cols, a.data(), cols,
                            s.data(), u.data(), r, vt.data(), cols);
  if (info != 0) throw NumericError("svd: dgesdd failed to converge");

  SvdResult out;
  out.u = DenseMatrix(rows, r);
  out.q = DenseMatrix(cols, r);
  out.singular_values = std::move(s);

  for (int k = 0; k < r; ++k) {
    // Largest-magnitude entry of the left singular vector must be positive.
    int arg = 0;
    double best = 0.0;
    for (int i = 0; i < rows; ++i) {
      double mag = std::fabs(u[static_cast<std::size_t>(i) * r + k]);
      if (mag > best) {
        best = mag;
        arg = i;
      }
    }
    double sign = u[static_cast<std::size_t>(arg) * r + k] < 0.0 ? -1.0 : 1.0;
    for (int i = 0; i < rows; ++i)
      out.u.at(i, k) = sign * u[static_cast<std::size_t>(i) * r + k];
    for (int j = 0; j < cols; ++j)
      out.q.at(j, k) = sign * vt[static_cast<std::size_t>(k) * cols + j];
  }
  return out;
}

SvdResult svd_truncated(const DenseMatrix& m, int k) {
  for (double x : m.data()) {
    if (!std::isfinite(x)) throw NumericError("svd_truncated: non-finite input entry");
  }
  const int rows = m.rows(), cols = m.cols();
  const int r = std::min(rows, cols);
  if (k < 1 || k > r) throw RankError("svd_truncated: k out of range");

  std::vector<double> a = m.data();  // dgesvdx overwrites its input
  std::vector<double> s(r);
  std::vector<double> u(static_cast<std::size_t>(rows) * k);
  std::vector<double> vt(static_cast<std::size_t>(k) * cols);
  std::vector<lapack_int> superb(static_cast<std::size_t>(12) * r);
  lapack_int found = 0;
  int info = LAPACKE_dgesvdx(LAPACK_ROW_MAJOR, 'V', 'V', 'I', rows, cols,
                             a.data(), cols, 0.0, 0.0, 1, k, &found, s.data(),
                             u.data(), k, vt.data(), cols, superb.data());
  if (info != 0 || found != k) {
    throw NumericError("svd_truncated: dgesvdx failed to converge");
  }

  SvdResult out;
  out.u = DenseMatrix(rows, k);
  out.q = DenseMatrix(cols, k);
  out.singular_values.assign(s.begin(), s.begin() + k);

  for (int kk = 0; kk < k; ++kk) {
    int arg = 0;
    double best = 0.0;
    for (int i = 0; i < rows; ++i) {
      double mag = std::fabs(u[static_cast<std::size_t>(i) * k + kk]);
      if (mag > best) {
        best = mag;
        arg = i;
      }
    }
    double sign = u[static_cast<std::size_t>(arg) * k + kk] < 0.0 ? -1.0 : 1.0;
    for (int i = 0; i < rows; ++i)
      out.u.at(i, kk) = sign * u[static_cast<std::size_t>(i) * k + kk];
    for (int j = 0; j < cols; ++j)
      out.q.at(j, kk) = sign * vt[static_cast<std::size_t>(kk) * cols + j];
  }
  return out;
}

DenseMatrix truncated_reconstruction(const SvdResult& s, int k) {
  const int rows = s.u.rows(), cols = s.q.rows();
  const int r = static_cast<int>(s.singular_values.size());
  if (k < 0 || k > r) throw RankError("truncated_reconstruction: k out of range");
  DenseMatrix out(rows, cols);
  for (int kk = 0; kk < k; ++kk) {
    const double sv = s.singular_values[kk];
    for (int i = 0; i < rows; ++i) {
      const double uik = s.u.at(i, kk) * sv;
      for (int j = 0; j < cols; ++j) out.at(i, j) += uik * s.q.at(j, kk);
    }
  }
  return out;
}

}  // namespace lrf
