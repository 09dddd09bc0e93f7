#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lrf/decompose.hpp"
#include "lrf/tensor.hpp"

namespace lrf {

// Binary tensor container ("LRCT"): magic, u16 version, u8 scalar tag
// (0 = f32, 1 = f64), u8 rank, rank little-endian u32 dims, then raw
// little-endian scalars in row-major order. Kernels use axis order
// (C, d_v, d_h, N), feature maps (channels, Y, X).

enum class ScalarType : std::uint8_t { f32 = 0, f64 = 1 };

constexpr std::uint16_t kTensorFileVersion = 1;

struct TensorData {
  std::vector<std::uint32_t> dims;
  std::vector<double> values;  // promoted to f64 in memory
  ScalarType stored = ScalarType::f32;
};

void write_tensor_file(const std::string& path,
                       const std::vector<std::uint32_t>& dims,
                       const std::vector<double>& values,
                       ScalarType type = ScalarType::f32);

/// Throws FormatError on bad magic, unknown version/tag, or truncation.
TensorData read_tensor_file(const std::string& path);

void write_kernel(const std::string& path, const KernelTensor& w,
                  ScalarType type = ScalarType::f32);
KernelTensor read_kernel(const std::string& path);

void write_feature_map(const std::string& path, const FeatureMap& z,
                       ScalarType type = ScalarType::f32);
FeatureMap read_feature_map(const std::string& path);

/// V is stored with dims (K, d, 1, C), H with dims (N, 1, d, K).
void write_factor_pair(const std::string& v_path, const std::string& h_path,
                       const FactorPair& f, ScalarType type = ScalarType::f32);
FactorPair read_factor_pair(const std::string& v_path, const std::string& h_path);

}  // namespace lrf
