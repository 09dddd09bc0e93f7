#include "lrf/tensor.hpp"

#include <numeric>

namespace lrf {

namespace {

void check_dims_positive(int a, int b, int c, int d, const char* what) {
  if (a < 1 || b < 1 || c < 1 || d < 1) {
    throw DimensionError(std::string(what) + ": all dims must be >= 1");
  }
}

double sum_sq(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return acc;
}

}  // namespace

DenseMatrix::DenseMatrix(int rows, int cols, double fill)
    : rows_(rows), cols_(cols),
      data_(static_cast<std::size_t>(rows) * cols, fill) {
  if (rows < 1 || cols < 1) throw DimensionError("DenseMatrix: dims must be >= 1");
}

DenseMatrix::DenseMatrix(int rows, int cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (rows < 1 || cols < 1) throw DimensionError("DenseMatrix: dims must be >= 1");
  if (data_.size() != static_cast<std::size_t>(rows) * cols) {
    throw DimensionError("DenseMatrix: data length does not match rows*cols");
  }
}

KernelTensor::KernelTensor(int c, int dv, int dh, int n, double fill)
    : c_(c), dv_(dv), dh_(dh), n_(n),
      data_(static_cast<std::size_t>(c) * dv * dh * n, fill) {
  check_dims_positive(c, dv, dh, n, "KernelTensor");
}

KernelTensor::KernelTensor(int c, int dv, int dh, int n, std::vector<double> data)
    : c_(c), dv_(dv), dh_(dh), n_(n), data_(std::move(data)) {
  check_dims_positive(c, dv, dh, n, "KernelTensor");
  if (data_.size() != static_cast<std::size_t>(c) * dv * dh * n) {
    throw DimensionError("KernelTensor: data length does not match dims");
  }
}

FeatureMap::FeatureMap(int channels, int height, int width, double fill)
    : c_(channels), y_(height), x_(width),
      data_(static_cast<std::size_t>(channels) * height * width, fill) {
  if (channels < 1 || height < 1 || width < 1) {
    throw DimensionError("FeatureMap: dims must be >= 1");
  }
}

FeatureMap::FeatureMap(int channels, int height, int width, std::vector<double> data)
    : c_(channels), y_(height), x_(width), data_(std::move(data)) {
  if (channels < 1 || height < 1 || width < 1) {
    throw DimensionError("FeatureMap: dims must be >= 1");
  }
  if (data_.size() != static_cast<std::size_t>(channels) * height * width) {
    throw DimensionError("FeatureMap: data length does not match dims");
  }
}

DenseMatrix matricize(const KernelTensor& w) {
  if (!w.square()) {
    throw DimensionError("matricize: kernel must be square (d_v == d_h)");
  }
  const int c = w.input_channels(), d = w.kernel_height(), n = w.output_channels();
  DenseMatrix m(c * d, d * n);
  for (int i1 = 0; i1 < c; ++i1)
    for (int i2 = 0; i2 < d; ++i2)
      for (int i3 = 0; i3 < d; ++i3)
        for (int i4 = 0; i4 < n; ++i4)
          m.at(i1 * d + i2, i4 * d + i3) = w.at(i1, i2, i3, i4);
  return m;
}

KernelTensor dematricize(const DenseMatrix& m, const KernelDims& dims) {
  if (dims.c < 1 || dims.d < 1 || dims.n < 1) {
    throw DimensionError("dematricize: dims must be >= 1");
  }
  if (m.rows() != dims.c * dims.d || m.cols() != dims.d * dims.n) {
    throw DimensionError("dematricize: matrix shape does not match (C*d) x (d*N)");
  }
  KernelTensor w(dims.c, dims.d, dims.d, dims.n);
  for (int i1 = 0; i1 < dims.c; ++i1)
    for (int i2 = 0; i2 < dims.d; ++i2)
      for (int i3 = 0; i3 < dims.d; ++i3)
        for (int i4 = 0; i4 < dims.n; ++i4)
          w.at(i1, i2, i3, i4) = m.at(i1 * dims.d + i2, i4 * dims.d + i3);
  return w;
}

double frobenius_norm_sq(const DenseMatrix& m) { return sum_sq(m.data()); }
double frobenius_norm_sq(const KernelTensor& w) { return sum_sq(w.data()); }
double frobenius_norm_sq(const FeatureMap& z) { return sum_sq(z.data()); }

}  // namespace lrf
