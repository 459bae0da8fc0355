#pragma once

// Frozen feature extractor loaded from an ONNX file.
//
// Graph contract: one input [N,3,224,224] taking 0..255 RGB-ordered planes
// (normalization inside the graph), and two outputs: final activations
// [N,1280,7,7] and their global average [N,1280]. Outputs named
// "feature_maps" / "pooled" are preferred; otherwise they are told apart by
// rank.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mcfuse/colorspace.hpp"
#include "mcfuse/simd/kernels.hpp"

namespace mcfuse {

inline constexpr int kFeatureDim = 1280;
inline constexpr int kMapSize = 7;

struct FeatureVector {
  std::uint64_t image_id = 0;
  ColorspaceId branch = ColorspaceId::RGB;
  std::vector<float> values;
};

/// Final activations, channel-major: data[k * height * width + y * width + x].
struct FeatureMapStack {
  ColorspaceId branch = ColorspaceId::RGB;
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  const float* map(int k) const { return data.data() + static_cast<std::size_t>(k) * height * width; }
  /// Mean of map k, accumulated in double.
  double spatial_mean(int k) const;
};

struct BackboneOutput {
  FeatureMapStack maps;
  FeatureVector pooled;
};

class Backbone {
 public:
  /// Throws LoadError naming the unmet part of the contract.
  static Backbone load(const std::filesystem::path& model_file);

  /// Pooled feature. `img` must be 224x224 with values in [0,255]
  /// (ContractError otherwise).
  FeatureVector extract(const ImageTensor& img) const;
  BackboneOutput extract_maps(const ImageTensor& img) const;
  /// One graph execution over a batch.
  std::vector<BackboneOutput> extract_batch(std::span<const ImageTensor> imgs) const;

  /// Same graph, different kernel table (for SIMD equivalence checks).
  Backbone with_kernels(const simd::Kernels& k) const;

  int feature_dim() const { return kFeatureDim; }
  std::int64_t opset() const;
  std::size_t node_count() const;
  /// FNV-1a digest of every weight tensor as currently held in memory.
  std::uint64_t weights_digest() const;

 private:
  struct Impl;
  std::shared_ptr<const Impl> impl_;
  const simd::Kernels* kernels_ = nullptr;
};

}  // namespace mcfuse
