#pragma once

#include <cstdint>

#include "lrf/decompose.hpp"
#include "lrf/tensor.hpp"

namespace lrf {

enum class CorrelationMode {
  cross_correlation,  // standard CNN convention; default
  true_convolution,   // kernel flipped in both spatial axes
};

struct ConvConfig {
  int stride = 1;
  int padding = 0;
  CorrelationMode mode = CorrelationMode::cross_correlation;
};

/// Multiply-accumulate counter for the operation-count audit. Pass nullptr
/// to skip counting.
struct MacCounter {
  std::int64_t macs = 0;
};

/// Output spatial extent floor((in + 2p - d)/s) + 1; throws if < 1.
int conv_output_dim(int in, int d, int stride, int padding);

/// Direct 2D convolution: N outputs, each the sum over input channels of the
/// strided, zero-padded correlation (or flipped-kernel convolution) with the
/// corresponding kernel slice.
FeatureMap conv_direct(const FeatureMap& z, const KernelTensor& w,
                       const ConvConfig& cfg, MacCounter* counter = nullptr);

/// Two-stage separable convolution: K intermediate maps from the vertical
/// d x 1 filters (vertical stride/padding applied), then N outputs from the
/// horizontal 1 x d filters (horizontal stride/padding applied).
FeatureMap conv_separable(const FeatureMap& z, const FactorPair& f,
                          const ConvConfig& cfg, MacCounter* counter = nullptr);

}  // namespace lrf
