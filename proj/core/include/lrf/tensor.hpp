#pragma once

#include <cstddef>
#include <vector>

#include "lrf/error.hpp"

namespace lrf {

/// Dense row-major matrix of doubles.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(int rows, int cols, double fill = 0.0);
  DenseMatrix(int rows, int cols, std::vector<double> data);

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }

  double& at(int i, int j) { return data_[static_cast<std::size_t>(i) * cols_ + j]; }
  double at(int i, int j) const { return data_[static_cast<std::size_t>(i) * cols_ + j]; }

  const std::vector<double>& data() const noexcept { return data_; }
  std::vector<double>& data() noexcept { return data_; }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

/// 4D convolution kernel with axis order (C, d_v, d_h, N), row-major.
/// Indices are 0-based; the matricization formulas below state the
/// corresponding 1-based convention where it matters.
class KernelTensor {
 public:
  KernelTensor() = default;
  KernelTensor(int c, int dv, int dh, int n, double fill = 0.0);
  KernelTensor(int c, int dv, int dh, int n, std::vector<double> data);

  int input_channels() const noexcept { return c_; }
  int kernel_height() const noexcept { return dv_; }
  int kernel_width() const noexcept { return dh_; }
  int output_channels() const noexcept { return n_; }
  bool square() const noexcept { return dv_ == dh_; }

  double& at(int c, int y, int x, int n) {
    return data_[((static_cast<std::size_t>(c) * dv_ + y) * dh_ + x) * n_ + n];
  }
  double at(int c, int y, int x, int n) const {
    return data_[((static_cast<std::size_t>(c) * dv_ + y) * dh_ + x) * n_ + n];
  }

  const std::vector<double>& data() const noexcept { return data_; }
  std::vector<double>& data() noexcept { return data_; }

 private:
  int c_ = 0, dv_ = 0, dh_ = 0, n_ = 0;
  std::vector<double> data_;
};

/// 3D activation tensor with axis order (channels, height, width), row-major.
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(int channels, int height, int width, double fill = 0.0);
  FeatureMap(int channels, int height, int width, std::vector<double> data);

  int channels() const noexcept { return c_; }
  int height() const noexcept { return y_; }
  int width() const noexcept { return x_; }

  double& at(int c, int y, int x) {
    return data_[(static_cast<std::size_t>(c) * y_ + y) * x_ + x];
  }
  double at(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * y_ + y) * x_ + x];
  }

  const std::vector<double>& data() const noexcept { return data_; }
  std::vector<double>& data() noexcept { return data_; }

 private:
  int c_ = 0, y_ = 0, x_ = 0;
  std::vector<double> data_;
};

struct KernelDims {
  int c = 0;
  int d = 0;
  int n = 0;
};

/// Maps a square (C, d, d, N) kernel to a (C*d) x (d*N) matrix.
/// In 1-based terms entry (i1,i2,i3,i4) lands at row (i1-1)d+i2,
/// column (i4-1)d+i3.
DenseMatrix matricize(const KernelTensor& w);

/// Inverse of matricize; m must be (C*d) x (d*N).
KernelTensor dematricize(const DenseMatrix& m, const KernelDims& dims);

double frobenius_norm_sq(const DenseMatrix& m);
double frobenius_norm_sq(const KernelTensor& w);
double frobenius_norm_sq(const FeatureMap& z);

}  // namespace lrf
