#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "lrf/conv.hpp"
#include "lrf/decompose.hpp"
#include "lrf/tensor.hpp"

namespace lrf {

/// Mini-batch of feature maps, axis order (batch, channels, height, width).
struct Batch {
  int b = 0, c = 0, y = 0, x = 0;

  std::vector<double> data;

  Batch() = default;
  Batch(int b, int c, int y, int x)
      : b(b), c(c), y(y), x(x),
        data(static_cast<std::size_t>(b) * c * y * x, 0.0) {}

  double& at(int bi, int ci, int yi, int xi) {
    return data[((static_cast<std::size_t>(bi) * c + ci) * y + yi) * x + xi];
  }
  double at(int bi, int ci, int yi, int xi) const {
    return data[((static_cast<std::size_t>(bi) * c + ci) * y + yi) * x + xi];
  }
  int features() const noexcept { return c * y * x; }
};

/// View onto one trainable tensor and its gradient accumulator.
struct ParamRef {
  std::string name;
  std::vector<double>* value;
  std::vector<double>* grad;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Batch forward(const Batch& in, bool training) = 0;
  /// Consumes the cache left by the matching forward; throws StateError-like
  /// TrainingError when no cache is present.
  virtual Batch backward(const Batch& grad_out) = 0;
  virtual std::vector<ParamRef> params() { return {}; }
  virtual std::string type() const = 0;
};

/// d x 1 vertical filters mixing C input channels into K maps; vertical
/// stride/padding. First stage of the factorized pair.
class VerticalConvLayer : public Layer {
 public:
  VerticalConvLayer(int k, int c, int d, int stride, int padding);
  Batch forward(const Batch& in, bool training) override;
  Batch backward(const Batch& grad_out) override;
  std::vector<ParamRef> params() override;
  std::string type() const override { return "vconv"; }

  std::vector<double> weights;  // (k, c, j)
  std::vector<double> bias;     // (k)
  std::vector<double> grad_weights, grad_bias;
  int k, c, d, stride, padding;

 private:
  Batch cached_in_;
  bool has_cache_ = false;
};

/// 1 x d horizontal filters mixing K maps into N outputs; horizontal
/// stride/padding. Second stage of the factorized pair.
class HorizontalConvLayer : public Layer {
 public:
  HorizontalConvLayer(int n, int k, int d, int stride, int padding);
  Batch forward(const Batch& in, bool training) override;
  Batch backward(const Batch& grad_out) override;
  std::vector<ParamRef> params() override;
  std::string type() const override { return "hconv"; }

  std::vector<double> weights;  // (n, k, j)
  std::vector<double> bias;     // (n)
  std::vector<double> grad_weights, grad_bias;
  int n, k, d, stride, padding;

 private:
  Batch cached_in_;
  bool has_cache_ = false;
};

/// Dense d x d convolution, for unfactorized baseline layers.
class DirectConvLayer : public Layer {
 public:
  DirectConvLayer(int n, int c, int d, int stride, int padding);
  Batch forward(const Batch& in, bool training) override;
  Batch backward(const Batch& grad_out) override;
  std::vector<ParamRef> params() override;
  std::string type() const override { return "conv";
  }

  std::vector<double> weights;  // KernelTensor layout (c, ky, kx, n)
  std::vector<double> bias;     // (n)
  std::vector<double> grad_weights, grad_bias;
  int n, c, d, stride, padding;

 private:
  Batch cached_in_;
  bool has_cache_ = false;
};

class BatchNormLayer : public Layer {
 public:
  explicit BatchNormLayer(int channels, double eps = 1e-5, double momentum = 0.9);
  Batch forward(const Batch& in, bool training) override;
  Batch backward(const Batch& grad_out) override;
  std::vector<ParamRef> params() override;
  std::string type() const override { return "bn"; }

  std::vector<double> gamma, beta;
  std::vector<double> grad_gamma, grad_beta;
  std::vector<double> running_mean, running_var;  // inference state
  int channels;
  double eps, momentum;

 private:
  Batch cached_xhat_;
  std::vector<double> cached_invstd_;
  bool has_cache_ = false;
};

class ReluLayer : public Layer {
 public:
  Batch forward(const Batch& in, bool training) override;
  Batch backward(const Batch& grad_out) override;
  std::string type() const override { return "relu"; }

 private:
  Batch cached_in_;
  bool has_cache_ = false;
};

/// Fully connected layer over the flattened input; output is (b, out, 1, 1).
class DenseLayer : public Layer {
 public:
  DenseLayer(int in_features, int out_features);
  Batch forward(const Batch& in, bool training) override;
  Batch backward(const Batch& grad_out) override;
  std::vector<ParamRef> params() override;
  std::string type() const override { return "dense"; }

  std::vector<double> weights;  // (out, in)
  std::vector<double> bias;     // (out)
  std::vector<double> grad_weights, grad_bias;
  int in_features, out_features;

 private:
  Batch cached_in_;
  bool has_cache_ = false;
};

/// Channel-wise softmax; inference head only. Training works on the logits
/// through softmax_cross_entropy, so backward here is never invoked.
class SoftmaxLayer : public Layer {
 public:
  Batch forward(const Batch& in, bool training) override;
  Batch backward(const Batch& grad_out) override;
  std::string type() const override { return "softmax"; }
};

class Model {
 public:
  std::vector<std::unique_ptr<Layer>> layers;

  /// Runs all layers except a trailing softmax; the result are logits.
  Batch logits(const Batch& in, bool training);
  /// Runs every layer, softmax included.
  Batch predict(const Batch& in);
  Batch backward(const Batch& grad_logits);
  std::vector<ParamRef> params();
  void zero_grads();
};

/// Mean cross-entropy over the batch; writes dLoss/dlogits into grad_out
/// when non-null.
double softmax_cross_entropy(const Batch& logits, const std::vector<int>& labels,
                             Batch* grad_out);

/// theta <- theta - lr * grad for every trainable tensor.
void sgd_step(Model& model, double lr);

struct TrainConfig {
  int batch_size = 100;
  double initial_lr = 0.01;
  double lr_decay_factor = 10.0;
  int patience = 3;  // epochs of non-improving validation error before decay
  int max_epochs = 30;
  std::uint64_t seed = 0;
};

/// Replays the decay rule over the recorded validation errors: divide the
/// rate by the decay factor when the best error has not improved for
/// `patience` consecutive epochs; the counter resets after each decay so a
/// window never triggers twice.
double lr_schedule_update(const std::vector<double>& val_errors,
                          const TrainConfig& config);

struct DatasetSplit {
  int channels = 1, height = 0, width = 0;
  std::vector<std::vector<double>> images;
  std::vector<int> labels;
  std::size_t size() const { return images.size(); }
};

struct Dataset {
  int classes = 0;
  DatasetSplit train, val, test;
};

/// Oriented sinusoidal gratings, one orientation per class, with phase and
/// frequency jitter plus Gaussian pixel noise. Deterministic per seed;
/// the three splits are drawn from disjoint generator streams.
Dataset generate_synthetic_dataset(int n_train_per_class, int n_val_per_class,
                                   int n_test_per_class, int classes, int height,
                                   int width, std::uint64_t seed);

/// Fixed quadrature-pair matched filter classifier; establishes that the
/// synthetic task is solvable without learning.
double oriented_filter_accuracy(const DatasetSplit& split, int classes);

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_error = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
};

/// Classification error (fraction wrong) of the model on a split.
double evaluate_error(Model& model, const DatasetSplit& split, int batch_size);

/// SGD training loop with the validation-plateau decay schedule. Throws
/// TrainingError with the epoch index on NaN/Inf loss.
TrainResult train(Model& model, const Dataset& dataset, const TrainConfig& config);

/// Layer descriptors for assembling a model programmatically (the CLI builds
/// these from a JSON manifest).
struct LayerDesc {
  std::string kind;  // lowrank-conv | direct-conv | bn | relu | dense | softmax
  int n = 0, c = 0, d = 0, k = 0;
  int stride = 1, padding = 0;
  int out_features = 0;  // dense
};

/// Builds and initializes a model. Weights start uniform in
/// +-sqrt(6/(fan_in+fan_out)); lowrank-conv expands to the vertical and
/// horizontal stages with a BatchNorm after each stage when with_bn is set.
Model build_model(int in_channels, int in_height, int in_width,
                  const std::vector<LayerDesc>& descs, std::uint64_t seed,
                  bool with_bn = true);

}  // namespace lrf
