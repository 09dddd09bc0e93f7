#include "lrf/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace lrf {

namespace {

constexpr double kPi = 3.14159265358979323846;

void require_cache(bool has_cache, const char* layer) {
  if (!has_cache) {
    throw TrainingError(std::string(layer) + ": backward without matching forward", -1);
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// VerticalConvLayer

VerticalConvLayer::VerticalConvLayer(int k, int c, int d, int stride, int padding)
    : weights(static_cast<std::size_t>(k) * c * d, 0.0), bias(k, 0.0),
      grad_weights(weights.size(), 0.0), grad_bias(k, 0.0),
      k(k), c(c), d(d), stride(stride), padding(padding) {}

Batch VerticalConvLayer::forward(const Batch& in, bool) {
  if (in.c != c) throw DimensionError("vconv: channel mismatch");
  const int oy = conv_output_dim(in.y, d, stride, padding);
  Batch out(in.b, k, oy, in.x);
  for (int b = 0; b < in.b; ++b)
    for (int kk = 0; kk < k; ++kk)
      for (int y = 0; y < oy; ++y)
        for (int x = 0; x < in.x; ++x) {
          double acc = bias[kk];
          for (int cc = 0; cc < c; ++cc)
            for (int j = 0; j < d; ++j) {
              const int yy = y * stride + j - padding;
              if (yy < 0 || yy >= in.y) continue;
              acc += weights[(static_cast<std::size_t>(kk) * c + cc) * d + j] *
                     in.at(b, cc, yy, x);
            }
          out.at(b, kk, y, x) = acc;
        }
  cached_in_ = in;
  has_cache_ = true;
  return out;
}

Batch VerticalConvLayer::backward(const Batch& go) {
  require_cache(has_cache_, "vconv");
  const Batch& in = cached_in_;
  Batch gin(in.b, in.c, in.y, in.x);
  for (int b = 0; b < go.b; ++b)
    for (int kk = 0; kk < k; ++kk)
      for (int y = 0; y < go.y; ++y)
        for (int x = 0; x < go.x; ++x) {
          const double g = go.at(b, kk, y, x);
          grad_bias[kk] += g;
          for (int cc = 0; cc < c; ++cc)
            for (int j = 0; j < d; ++j) {
              const int yy = y * stride + j - padding;
              if (yy < 0 || yy >= in.y) continue;
              grad_weights[(static_cast<std::size_t>(kk) * c + cc) * d + j] +=
                  g * in.at(b, cc, yy, x);
              gin.at(b, cc, yy, x) +=
                  g * weights[(static_cast<std::size_t>(kk) * c + cc) * d + j];
            }
        }
  has_cache_ = false;
  return gin;
}

std::vector<ParamRef> VerticalConvLayer::params() {
  return {{"v", &weights, &grad_weights}, {"v_bias", &bias, &grad_bias}};
}

// ---------------------------------------------------------------------------
// HorizontalConvLayer

HorizontalConvLayer::HorizontalConvLayer(int n, int k, int d, int stride, int padding)
    : weights(static_cast<std::size_t>(n) * k * d, 0.0), bias(n, 0.0),
      grad_weights(weights.size(), 0.0), grad_bias(n, 0.0),
      n(n), k(k), d(d), stride(stride), padding(padding) {}

Batch HorizontalConvLayer::forward(const Batch& in, bool) {
  if (in.c != k) throw DimensionError("hconv: channel mismatch");
  const int ox = conv_output_dim(in.x, d, stride, padding);
  Batch out(in.b, n, in.y, ox);
  for (int b = 0; b < in.b; ++b)
    for (int nn = 0; nn < n; ++nn)
      for (int y = 0; y < in.y; ++y)
        for (int x = 0; x < ox; ++x) {
          double acc = bias[nn];
          for (int kk = 0; kk < k; ++kk)
            for (int j = 0; j < d; ++j) {
              const int xx = x * stride + j - padding;
              if (xx < 0 || xx >= in.x) continue;
              acc += weights[(static_cast<std::size_t>(nn) * k + kk) * d + j] *
                     in.at(b, kk, y, xx);
            }
          out.at(b, nn, y, x) = acc;
        }
  cached_in_ = in;
  has_cache_ = true;
  return out;
}

Batch HorizontalConvLayer::backward(const Batch& go) {
  require_cache(has_cache_, "hconv");
  const Batch& in = cached_in_;
  Batch gin(in.b, in.c, in.y, in.x);
  for (int b = 0; b < go.b; ++b)
    for (int nn = 0; nn < n; ++nn)
      for (int y = 0; y < go.y; ++y)
        for (int x = 0; x < go.x; ++x) {
          const double g = go.at(b, nn, y, x);
          grad_bias[nn] += g;
          for (int kk = 0; kk < k; ++kk)
            for (int j = 0; j < d; ++j) {
              const int xx = x * stride + j - padding;
              if (xx < 0 || xx >= in.x) continue;
              grad_weights[(static_cast<std::size_t>(nn) * k + kk) * d + j] +=
                  g * in.at(b, kk, y, xx);
              gin.at(b, kk, y, xx) +=
                  g * weights[(static_cast<std::size_t>(nn) * k + kk) * d + j];
            }
        }
  has_cache_ = false;
  return gin;
}

std::vector<ParamRef> HorizontalConvLayer::params() {
  return {{"h", &weights, &grad_weights}, {"h_bias", &bias, &grad_bias}};
}

// ---------------------------------------------------------------------------
// DirectConvLayer

DirectConvLayer::DirectConvLayer(int n, int c, int d, int stride, int padding)
    : weights(static_cast<std::size_t>(c) * d * d * n, 0.0), bias(n, 0.0),
      grad_weights(weights.size(), 0.0), grad_bias(n, 0.0),
      n(n), c(c), d(d), stride(stride), padding(padding) {}

Batch DirectConvLayer::forward(const Batch& in, bool) {
  if (in.c != c) throw DimensionError("conv: channel mismatch");
  const int oy = conv_output_dim(in.y, d, stride, padding);
  const int ox = conv_output_dim(in.x, d, stride, padding);
  Batch out(in.b, n, oy, ox);
  auto wat = [&](int cc, int ky, int kx, int nn) -> double {
    return weights[((static_cast<std::size_t>(cc) * d + ky) * d + kx) * n + nn];
  };
  for (int b = 0; b < in.b; ++b)
    for (int nn = 0; nn < n; ++nn)
      for (int y = 0; y < oy; ++y)
        for (int x = 0; x < ox; ++x) {
          double acc = bias[nn];
          for (int cc = 0; cc < c; ++cc)
            for (int ky = 0; ky < d; ++ky) {
              const int yy = y * stride + ky - padding;
              if (yy < 0 || yy >= in.y) continue;
              for (int kx = 0; kx < d; ++kx) {
                const int xx = x * stride + kx - padding;
                if (xx < 0 || xx >= in.x) continue;
                acc += wat(cc, ky, kx, nn) * in.at(b, cc, yy, xx);
              }
            }
          out.at(b, nn, y, x) = acc;
        }
  cached_in_ = in;
  has_cache_ = true;
  return out;
}

Batch DirectConvLayer::backward(const Batch& go) {
  require_cache(has_cache_, "conv");
  const Batch& in = cached_in_;
  Batch gin(in.b, in.c, in.y, in.x);
  auto widx = [&](int cc, int ky, int kx, int nn) {
    return ((static_cast<std::size_t>(cc) * d + ky) * d + kx) * n + nn;
  };
  for (int b = 0; b < go.b; ++b)
    for (int nn = 0; nn < n; ++nn)
      for (int y = 0; y < go.y; ++y)
        for (int x = 0; x < go.x; ++x) {
          const double g = go.at(b, nn, y, x);
          grad_bias[nn] += g;
          for (int cc = 0; cc < c; ++cc)
            for (int ky = 0; ky < d; ++ky) {
              const int yy = y * stride + ky - padding;
              if (yy < 0 || yy >= in.y) continue;
              for (int kx = 0; kx < d; ++kx) {
                const int xx = x * stride + kx - padding;
                if (xx < 0 || xx >= in.x) continue;
                grad_weights[widx(cc, ky, kx, nn)] += g * in.at(b, cc, yy, xx);
                gin.at(b, cc, yy, xx) += g * weights[widx(cc, ky, kx, nn)];
              }
            }
        }
  has_cache_ = false;
  return gin;
}

std::vector<ParamRef> DirectConvLayer::params() {
  return {{"w", &weights, &grad_weights}, {"bias", &bias, &grad_bias}};
}

// ---------------------------------------------------------------------------
// BatchNormLayer

BatchNormLayer::BatchNormLayer(int channels, double eps, double momentum)
    : gamma(channels, 1.0), beta(channels, 0.0),
      grad_gamma(channels, 0.0), grad_beta(channels, 0.0),
      running_mean(channels, 0.0), running_var(channels, 1.0),
      channels(channels), eps(eps), momentum(momentum) {}

Batch BatchNormLayer::forward(const Batch& in, bool training) {
  if (in.c != channels) throw DimensionError("bn: channel mismatch");
  Batch out(in.b, in.c, in.y, in.x);
  if (!training) {
    // Pure affine map given frozen running statistics.
    for (int cc = 0; cc < channels; ++cc) {
      const double invstd = 1.0 / std::sqrt(running_var[cc] + eps);
      for (int b = 0; b < in.b; ++b)
        for (int y = 0; y < in.y; ++y)
          for (int x = 0; x < in.x; ++x)
            out.at(b, cc, y, x) =
                gamma[cc] * (in.at(b, cc, y, x) - running_mean[cc]) * invstd +
                beta[cc];
    }
    return out;
  }

  const double m = static_cast<double>(in.b) * in.y * in.x;
  cached_xhat_ = Batch(in.b, in.c, in.y, in.x);
  cached_invstd_.assign(channels, 0.0);
  for (int cc = 0; cc < channels; ++cc) {
    double mean = 0.0;
    for (int b = 0; b < in.b; ++b)
      for (int y = 0; y < in.y; ++y)
        for (int x = 0; x < in.x; ++x) mean += in.at(b, cc, y, x);
    mean /= m;
    double var = 0.0;
    for (int b = 0; b < in.b; ++b)
      for (int y = 0; y < in.y; ++y)
        for (int x = 0; x < in.x; ++x) {
          const double diff = in.at(b, cc, y, x) - mean;
          var += diff * diff;
        }
    var /= m;
    const double invstd = 1.0 / std::sqrt(var + eps);
    cached_invstd_[cc] = invstd;
    for (int b = 0; b < in.b; ++b)
      for (int y = 0; y < in.y; ++y)
        for (int x = 0; x < in.x; ++x) {
          const double xhat = (in.at(b, cc, y, x) - mean) * invstd;
          cached_xhat_.at(b, cc, y, x) = xhat;
          out.at(b, cc, y, x) = gamma[cc] * xhat + beta[cc];
        }
    running_mean[cc] = momentum * running_mean[cc] + (1.0 - momentum) * mean;
    running_var[cc] = momentum * running_var[cc] + (1.0 - momentum) * var;
  }
  has_cache_ = true;
  return out;
}

Batch BatchNormLayer::backward(const Batch& go) {
  require_cache(has_cache_, "bn");
  const Batch& xhat = cached_xhat_;
  const double m = static_cast<double>(go.b) * go.y * go.x;
  Batch gin(go.b, go.c, go.y, go.x);
  for (int cc = 0; cc < channels; ++cc) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (int b = 0; b < go.b; ++b)
      for (int y = 0; y < go.y; ++y)
        for (int x = 0; x < go.x; ++x) {
          sum_g += go.at(b, cc, y, x);
          sum_gx += go.at(b, cc, y, x) * xhat.at(b, cc, y, x);
        }
    grad_beta[cc] += sum_g;
    grad_gamma[cc] += sum_gx;
    const double scale = gamma[cc] * cached_invstd_[cc] / m;
    for (int b = 0; b < go.b; ++b)
      for (int y = 0; y < go.y; ++y)
        for (int x = 0; x < go.x; ++x)
          gin.at(b, cc, y, x) =
              scale * (m * go.at(b, cc, y, x) - sum_g -
                       xhat.at(b, cc, y, x) * sum_gx);
  }
  has_cache_ = false;
  return gin;
}

std::vector<ParamRef> BatchNormLayer::params() {
  return {{"gamma", &gamma, &grad_gamma}, {"beta", &beta, &grad_beta}};
}

// ---------------------------------------------------------------------------
// ReluLayer

Batch ReluLayer::forward(const Batch& in, bool) {
  Batch out = in;
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  cached_in_ = in;
  has_cache_ = true;
  return out;
}

Batch ReluLayer::backward(const Batch& go) {
  require_cache(has_cache_, "relu");
  Batch gin = go;
  for (std::size_t i = 0; i < gin.data.size(); ++i)
    if (cached_in_.data[i] <= 0.0) gin.data[i] = 0.0;
  has_cache_ = false;
  return gin;
}

// ---------------------------------------------------------------------------
// DenseLayer

DenseLayer::DenseLayer(int in_features, int out_features)
    : weights(static_cast<std::size_t>(out_features) * in_features, 0.0),
      bias(out_features, 0.0), grad_weights(weights.size(), 0.0),
      grad_bias(out_features, 0.0), in_features(in_features),
      out_features(out_features) {}

Batch DenseLayer::forward(const Batch& in, bool) {
  if (in.features() != in_features) throw DimensionError("dense: feature mismatch");
  Batch out(in.b, out_features, 1, 1);
  for (int b = 0; b < in.b; ++b) {
    const double* x = &in.data[static_cast<std::size_t>(b) * in_features];
    for (int o = 0; o < out_features; ++o) {
      const double* wrow = &weights[static_cast<std::size_t>(o) * in_features];
      double acc = bias[o];
      for (int f = 0; f < in_features; ++f) acc += wrow[f] * x[f];
      out.at(b, o, 0, 0) = acc;
    }
  }
  cached_in_ = in;
  has_cache_ = true;
  return out;
}

Batch DenseLayer::backward(const Batch& go) {
  require_cache(has_cache_, "dense");
  const Batch& in = cached_in_;
  Batch gin(in.b, in.c, in.y, in.x);
  for (int b = 0; b < go.b; ++b) {
    const double* x = &in.data[static_cast<std::size_t>(b) * in_features];
    double* gx = &gin.data[static_cast<std::size_t>(b) * in_features];
    for (int o = 0; o < out_features; ++o) {
      const double g = go.at(b, o, 0, 0);
      grad_bias[o] += g;
      double* gw = &grad_weights[static_cast<std::size_t>(o) * in_features];
      const double* wrow = &weights[static_cast<std::size_t>(o) * in_features];
      for (int f = 0; f < in_features; ++f) {
        gw[f] += g * x[f];
        gx[f] += g * wrow[f];
      }
    }
  }
  has_cache_ = false;
  return gin;
}

std::vector<ParamRef> DenseLayer::params() {
  return {{"w", &weights, &grad_weights}, {"bias", &bias, &grad_bias}};
}

// ---------------------------------------------------------------------------
// SoftmaxLayer

Batch SoftmaxLayer::forward(const Batch& in, bool) {
  Batch out = in;
  const int f = in.features();
  for (int b = 0; b < in.b; ++b) {
    double* row = &out.data[static_cast<std::size_t>(b) * f];
    const double mx = *std::max_element(row, row + f);
    double sum = 0.0;
    for (int i = 0; i < f; ++i) {
      row[i] = std::exp(row[i] - mx);
      sum += row[i];
    }
    for (int i = 0; i < f; ++i) row[i] /= sum;
  }
  return out;
}

Batch SoftmaxLayer::backward(const Batch&) {
  throw TrainingError("softmax: training path must use logits", -1);
}

// ---------------------------------------------------------------------------
// Model

Batch Model::logits(const Batch& in, bool training) {
  Batch cur = in;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (i + 1 == layers.size() && layers[i]->type() == "softmax") break;
    cur = layers[i]->forward(cur, training);
  }
  return cur;
}

Batch Model::predict(const Batch& in) {
  Batch cur = in;
  for (auto& layer : layers) cur = layer->forward(cur, false);
  return cur;
}

Batch Model::backward(const Batch& grad_logits) {
  Batch g = grad_logits;
  for (std::size_t i = layers.size(); i-- > 0;) {
    if (i + 1 == layers.size() && layers[i]->type() == "softmax") continue;
    g = layers[i]->backward(g);
  }
  return g;
}

std::vector<ParamRef> Model::params() {
  std::vector<ParamRef> out;
  for (auto& layer : layers)
    for (auto& p : layer->params()) out.push_back(p);
  return out;
}

void Model::zero_grads() {
  for (auto& p : params()) std::fill(p.grad->begin(), p.grad->end(), 0.0);
}

// ---------------------------------------------------------------------------
// Loss, optimizer, schedule

double softmax_cross_entropy(const Batch& logits, const std::vector<int>& labels,
                             Batch* grad_out) {
  const int f = logits.features();
  if (labels.size() != static_cast<std::size_t>(logits.b)) {
    throw DimensionError("softmax_cross_entropy: label count mismatch");
  }
  if (grad_out) *grad_out = Batch(logits.b, logits.c, logits.y, logits.x);
  double loss = 0.0;
  std::vector<double> p(f);
  for (int b = 0; b < logits.b; ++b) {
    const double* row = &logits.data[static_cast<std::size_t>(b) * f];
    const double mx = *std::max_element(row, row + f);
    double sum = 0.0;
    for (int i = 0; i < f; ++i) {
      p[i] = std::exp(row[i] - mx);
      sum += p[i];
    }
    for (int i = 0; i < f; ++i) p[i] /= sum;
    loss -= std::log(std::max(p[labels[b]], 1e-300));
    if (grad_out) {
      double* g = &grad_out->data[static_cast<std::size_t>(b) * f];
      for (int i = 0; i < f; ++i)
        g[i] = (p[i] - (i == labels[b] ? 1.0 : 0.0)) / logits.b;
    }
  }
  return loss / logits.b;
}

void sgd_step(Model& model, double lr) {
  if (!(lr >= 0.0)) throw ArgumentError("sgd_step: lr must be >= 0");
  for (auto& p : model.params())
    for (std::size_t i = 0; i < p.value->size(); ++i)
      (*p.value)[i] -= lr * (*p.grad)[i];
}

double lr_schedule_update(const std::vector<double>& val_errors,
                          const TrainConfig& config) {
  double lr = config.initial_lr;
  double best = std::numeric_limits<double>::infinity();
  int since_improve = 0;
  for (double err : val_errors) {
    if (err < best - 1e-12) {
      best = err;
      since_improve = 0;
    } else {
      ++since_improve;
    }
    if (since_improve >= config.patience) {
      lr /= config.lr_decay_factor;
      since_improve = 0;  // one decay per plateau window
    }
  }
  return lr;
}

// ---------------------------------------------------------------------------
// Synthetic dataset

namespace {

DatasetSplit make_split(int n_per_class, int classes, int height, int width,
                        std::mt19937_64& rng) {
  DatasetSplit split;
  split.channels = 1;
  split.height = height;
  split.width = width;
  std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
  std::uniform_real_distribution<double> jitter(-0.1, 0.1);
  std::normal_distribution<double> noise(0.0, 0.15);
  const double scale = static_cast<double>(std::max(height, width));
  for (int q = 0; q < classes; ++q) {
    const double theta = kPi * q / classes;
    const double cth = std::cos(theta), sth = std::sin(theta);
    for (int i = 0; i < n_per_class; ++i) {
      const double freq = 2.0 * (1.0 + jitter(rng));
      const double phi = phase(rng);
      std::vector<double> img(static_cast<std::size_t>(height) * width);
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
          const double t = (x * cth + y * sth) / scale;
          img[static_cast<std::size_t>(y) * width + x] =
              std::sin(2.0 * kPi * freq * t + phi) + noise(rng);
        }
      split.images.push_back(std::move(img));
      split.labels.push_back(q);
    }
  }
  return split;
}

}  // namespace

Dataset generate_synthetic_dataset(int n_train_per_class, int n_val_per_class,
                                   int n_test_per_class, int classes, int height,
                                   int width, std::uint64_t seed) {
  Dataset ds;
  ds.classes = classes;
  std::mt19937_64 rng_train(seed * 3 + 0);
  std::mt19937_64 rng_val(seed * 3 + 1);
  std::mt19937_64 rng_test(seed * 3 + 2);
  ds.train = make_split(n_train_per_class, classes, height, width, rng_train);
  ds.val = make_split(n_val_per_class, classes, height, width, rng_val);
  ds.test = make_split(n_test_per_class, classes, height, width, rng_test);
  return ds;
}

double oriented_filter_accuracy(const DatasetSplit& split, int classes) {
  const int h = split.height, w = split.width;
  const double scale = static_cast<double>(std::max(h, w));
  // Quadrature pair per class orientation at the nominal frequency.
  std::vector<std::vector<double>> fsin(classes), fcos(classes);
  for (int q = 0; q < classes; ++q) {
    const double theta = kPi * q / classes;
    const double cth = std::cos(theta), sth = std::sin(theta);
    fsin[q].resize(static_cast<std::size_t>(h) * w);
    fcos[q].resize(static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double arg = 2.0 * kPi * 2.0 * (x * cth + y * sth) / scale;
        fsin[q][static_cast<std::size_t>(y) * w + x] = std::sin(arg);
        fcos[q][static_cast<std::size_t>(y) * w + x] = std::cos(arg);
      }
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < split.size(); ++i) {
    int arg = 0;
    double best = -1.0;
    for (int q = 0; q < classes; ++q) {
      double s = 0.0, c = 0.0;
      for (std::size_t j = 0; j < split.images[i].size(); ++j) {
        s += split.images[i][j] * fsin[q][j];
        c += split.images[i][j] * fcos[q][j];
      }
      const double energy = s * s + c * c;
      if (energy > best) {
        best = energy;
        arg = q;
      }
    }
    if (arg == split.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(split.size());
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

Batch gather_batch(const DatasetSplit& split, const std::vector<std::size_t>& idx,
                   std::size_t begin, std::size_t end, std::vector<int>& labels) {
  const int bsize = static_cast<int>(end - begin);
  Batch batch(bsize, split.channels, split.height, split.width);
  labels.resize(bsize);
  const std::size_t f = split.images.front().size();
  for (std::size_t i = begin; i < end; ++i) {
    std::copy(split.images[idx[i]].begin(), split.images[idx[i]].end(),
              batch.data.begin() + (i - begin) * f);
    labels[i - begin] = split.labels[idx[i]];
  }
  return batch;
}

}  // namespace

double evaluate_error(Model& model, const DatasetSplit& split, int batch_size) {
  std::vector<std::size_t> idx(split.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::size_t wrong = 0;
  std::vector<int> labels;
  for (std::size_t begin = 0; begin < split.size(); begin += batch_size) {
    const std::size_t end = std::min(begin + batch_size, split.size());
    Batch batch = gather_batch(split, idx, begin, end, labels);
    const Batch out = model.logits(batch, false);
    const int f = out.features();
    for (int b = 0; b < out.b; ++b) {
      const double* row = &out.data[static_cast<std::size_t>(b) * f];
      const int pred =
          static_cast<int>(std::max_element(row, row + f) - row);
      if (pred != labels[b]) ++wrong;
    }
  }
  return static_cast<double>(wrong) / static_cast<double>(split.size());
}

TrainResult train(Model& model, const Dataset& dataset, const TrainConfig& config) {
  if (config.batch_size < 1 || config.max_epochs < 1 || config.patience < 1 ||
      !(config.initial_lr > 0.0) || !(config.lr_decay_factor > 1.0)) {
    throw ArgumentError("train: invalid config");
  }
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> idx(dataset.train.size());
  std::iota(idx.begin(), idx.end(), 0);

  TrainResult result;
  std::vector<double> val_errors;
  double lr = config.initial_lr;
  std::vector<int> labels;
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), rng);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t begin = 0; begin < idx.size(); begin += config.batch_size) {
      const std::size_t end = std::min(begin + config.batch_size, idx.size());
      Batch batch = gather_batch(dataset.train, idx, begin, end, labels);
      const Batch out = model.logits(batch, true);
      Batch grad;
      const double loss = softmax_cross_entropy(out, labels, &grad);
      if (!std::isfinite(loss)) {
        throw TrainingError("train: non-finite loss", epoch + 1);
      }
      model.zero_grads();
      model.backward(grad);
      sgd_step(model, lr);
      loss_sum += loss * static_cast<double>(end - begin);
      seen += end - begin;
    }
    const double val_error = evaluate_error(model, dataset.val, config.batch_size);
    if (!std::isfinite(val_error)) {
      throw TrainingError("train: non-finite validation error", epoch + 1);
    }
    result.history.push_back(
        {epoch + 1, loss_sum / static_cast<double>(seen), val_error, lr});
    val_errors.push_back(val_error);
    lr = lr_schedule_update(val_errors, config);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Model builder

Model build_model(int in_channels, int in_height, int in_width,
                  const std::vector<LayerDesc>& descs, std::uint64_t seed,
                  bool with_bn) {
  std::mt19937_64 rng(seed);
  auto init = [&](std::vector<double>& w, int fan_in, int fan_out) {
    const double lim = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-lim, lim);
    for (double& x : w) x = dist(rng);
  };

  Model model;
  int c = in_channels, y = in_height, x = in_width;
  for (const LayerDesc& desc : descs) {
    if (desc.kind == "lowrank-conv") {
      auto vconv = std::make_unique<VerticalConvLayer>(desc.k, c, desc.d,
                                                       desc.stride, desc.padding);
      init(vconv->weights, c * desc.d, desc.k * desc.d);
      y = conv_output_dim(y, desc.d, desc.stride, desc.padding);
      model.layers.push_back(std::move(vconv));
      if (with_bn) model.layers.push_back(std::make_unique<BatchNormLayer>(desc.k));
      auto hconv = std::make_unique<HorizontalConvLayer>(desc.n, desc.k, desc.d,
                                                         desc.stride, desc.padding);
      init(hconv->weights, desc.k * desc.d, desc.n * desc.d);
      x = conv_output_dim(x, desc.d, desc.stride, desc.padding);
      model.layers.push_back(std::move(hconv));
      if (with_bn) model.layers.push_back(std::make_unique<BatchNormLayer>(desc.n));
      c = desc.n;
    } else if (desc.kind == "direct-conv") {
      auto conv = std::make_unique<DirectConvLayer>(desc.n, c, desc.d, desc.stride,
                                                    desc.padding);
      init(conv->weights, c * desc.d * desc.d, desc.n * desc.d * desc.d);
      y = conv_output_dim(y, desc.d, desc.stride, desc.padding);
      x = conv_output_dim(x, desc.d, desc.stride, desc.padding);
      model.layers.push_back(std::move(conv));
      c = desc.n;
    } else if (desc.kind == "bn") {
      model.layers.push_back(std::make_unique<BatchNormLayer>(c));
    } else if (desc.kind == "relu") {
      model.layers.push_back(std::make_unique<ReluLayer>());
    } else if (desc.kind == "dense") {
      const int in_features = c * y * x;
      auto dense = std::make_unique<DenseLayer>(in_features, desc.out_features);
      init(dense->weights, in_features, desc.out_features);
      model.layers.push_back(std::move(dense));
      c = desc.out_features;
      y = x = 1;
    } else if (desc.kind == "softmax") {
      model.layers.push_back(std::make_unique<SoftmaxLayer>());
    } else {
      throw ArgumentError("build_model: unknown layer kind '" + desc.kind + "'");
    }
  }
  return model;
}

}  // namespace lrf
