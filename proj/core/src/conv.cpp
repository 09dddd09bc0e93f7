#include "lrf/conv.hpp"

#include <vector>

namespace lrf {

namespace {

// Zero-pads one channel of z into a (Y + 2*pad_y) x (X + 2*pad_x) buffer.
void pad_channel(const FeatureMap& z, int c, int pad_y, int pad_x,
                 std::vector<double>& out) {
  const int py = z.height() + 2 * pad_y;
  const int px = z.width() + 2 * pad_x;
  out.assign(static_cast<std::size_t>(py) * px, 0.0);
  for (int y = 0; y < z.height(); ++y)
    for (int x = 0; x < z.width(); ++x)
      out[static_cast<std::size_t>(y + pad_y) * px + (x + pad_x)] = z.at(c, y, x);
}

}  // namespace

int conv_output_dim(int in, int d, int stride, int padding) {
  const int out = (in + 2 * padding - d) / stride + 1;
  if (in + 2 * padding < d || out < 1) {
    throw DimensionError("conv: non-positive output dimension");
  }
  return out;
}

FeatureMap conv_direct(const FeatureMap& z, const KernelTensor& w,
                       const ConvConfig& cfg, MacCounter* counter) {
  if (z.channels() != w.input_channels()) {
    throw DimensionError("conv_direct: input channels do not match kernel");
  }
  const int c_in = w.input_channels(), n_out = w.output_channels();
  const int dv = w.kernel_height(), dh = w.kernel_width();
  const int s = cfg.stride, p = cfg.padding;
  const int oy = conv_output_dim(z.height(), dv, s, p);
  const int ox = conv_output_dim(z.width(), dh, s, p);
  const int px = z.width() + 2 * p;
  const bool flip = cfg.mode == CorrelationMode::true_convolution;

  FeatureMap out(n_out, oy, ox);
  std::vector<double> padded;
  std::vector<double> slice(static_cast<std::size_t>(dv) * dh);
  for (int c = 0; c < c_in; ++c) {
    pad_channel(z, c, p, p, padded);
    for (int n = 0; n < n_out; ++n) {
      for (int ky = 0; ky < dv; ++ky)
        for (int kx = 0; kx < dh; ++kx)
          slice[static_cast<std::size_t>(ky) * dh + kx] =
              flip ? w.at(c, dv - 1 - ky, dh - 1 - kx, n) : w.at(c, ky, kx, n);
      for (int y = 0; y < oy; ++y)
        for (int x = 0; x < ox; ++x) {
          double acc = 0.0;
          for (int ky = 0; ky < dv; ++ky) {
            const double* row = &padded[static_cast<std::size_t>(y * s + ky) * px + x * s];
            const double* krow = &slice[static_cast<std::size_t>(ky) * dh];
            for (int kx = 0; kx < dh; ++kx) acc += row[kx] * krow[kx];
          }
          out.at(n, y, x) += acc;
        }
    }
  }
  if (counter) {
    counter->macs += static_cast<std::int64_t>(dv) * dh * n_out * c_in * oy * ox;
  }
  return out;
}

FeatureMap conv_separable(const FeatureMap& z, const FactorPair& f,
                          const ConvConfig& cfg, MacCounter* counter) {
  if (z.channels() != f.input_channels()) {
    throw DimensionError("conv_separable: input channels do not match factors");
  }
  const int c_in = f.input_channels(), n_out = f.output_channels();
  const int k_rank = f.rank(), d = f.filter_length();
  const int s = cfg.stride, p = cfg.padding;
  const int oy = conv_output_dim(z.height(), d, s, p);
  const int ox = conv_output_dim(z.width(), d, s, p);
  const bool flip = cfg.mode == CorrelationMode::true_convolution;

  // Stage 1: vertical filters, vertical stride/padding. Width is untouched.
  const int x1 = z.width();
  std::vector<double> inter(static_cast<std::size_t>(k_rank) * oy * x1, 0.0);
  std::vector<double> padded;
  std::vector<double> filt(d);
  for (int c = 0; c < c_in; ++c) {
    pad_channel(z, c, p, 0, padded);
    for (int k = 0; k < k_rank; ++k) {
      for (int j = 0; j < d; ++j) filt[j] = flip ? f.v(k, c, d - 1 - j) : f.v(k, c, j);
      double* dst = &inter[static_cast<std::size_t>(k) * oy * x1];
      for (int y = 0; y < oy; ++y) {
        double* drow = &dst[static_cast<std::size_t>(y) * x1];
        for (int j = 0; j < d; ++j) {
          const double vj = filt[j];
          const double* srow = &padded[static_cast<std::size_t>(y * s + j) * x1];
          for (int x = 0; x < x1; ++x) drow[x] += vj * srow[x];
        }
      }
    }
  }

  // Stage 2: horizontal filters, horizontal stride/padding.
  const int px1 = x1 + 2 * p;
  FeatureMap out(n_out, oy, ox);
  std::vector<double> irow(px1);
  for (int k = 0; k < k_rank; ++k) {
    const double* src = &inter[static_cast<std::size_t>(k) * oy * x1];
    for (int y = 0; y < oy; ++y) {
      std::fill(irow.begin(), irow.end(), 0.0);
      for (int x = 0; x < x1; ++x) irow[x + p] = src[static_cast<std::size_t>(y) * x1 + x];
      for (int n = 0; n < n_out; ++n) {
        for (int j = 0; j < d; ++j) filt[j] = flip ? f.h(n, k, d - 1 - j) : f.h(n, k, j);
        for (int x = 0; x < ox; ++x) {
          double acc = 0.0;
          const double* seg = &irow[static_cast<std::size_t>(x) * s];
          for (int j = 0; j < d; ++j) acc += filt[j] * seg[j];
          out.at(n, y, x) += acc;
        }
      }
    }
  }

  if (counter) {
    counter->macs += static_cast<std::int64_t>(d) * k_rank * c_in * oy * x1;
    counter->macs += static_cast<std::int64_t>(d) * n_out * k_rank * oy * ox;
  }
  return out;
}

}  // namespace lrf
