#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/types.h>

#include "dshift/raster.hpp"

namespace dshift {

enum class WeightsSource { pretrained_classifier, fixed_seed_random };

/// Per-layer feature maps, each [C, H, W]. Layer k has cumulative stride 2^k.
struct FeaturePyramid {
  std::vector<int> layer_ids;
  std::vector<torch::Tensor> maps;
  int input_height = 0;
  int input_width = 0;

  const torch::Tensor& at(int layer_id) const;
  bool has(int layer_id) const;
};

struct BackboneConfig {
  /// Output channels per stage; stage k runs at 1 / 2^k of the input resolution.
  std::vector<int> stage_channels = {16, 24, 32, 48, 64};
  std::vector<int> layer_ids = {0, 1, 2, 3, 4};
  WeightsSource weights_source = WeightsSource::fixed_seed_random;
  std::uint64_t seed = 0;
  /// Required for pretrained_classifier; a checkpoint with algorithm "backbone".
  std::optional<std::filesystem::path> weights_path;
};

/// Plain convolutional pyramid (replicate-padded 3x3 conv + ReLU per stage, 2x2 average
/// pooling between stages). Random mode is bias-free and fully determined by the seed.
///
/// The extractor is immutable once built and can be shared between threads.
class FeatureExtractor {
 public:
  explicit FeatureExtractor(BackboneConfig config);
  ~FeatureExtractor();
  FeatureExtractor(FeatureExtractor&&) noexcept;
  FeatureExtractor& operator=(FeatureExtractor&&) noexcept;

  static FeatureExtractor random(std::uint64_t seed);

  FeaturePyramid extract(const ImageRaster& image) const;
  /// Differentiable path: `image` is [3, H, W] (or [1, 3, H, W]) in [0, 1].
  FeaturePyramid extract(const torch::Tensor& image) const;

  const BackboneConfig& config() const noexcept { return config_; }
  const std::vector<int>& layer_ids() const noexcept { return config_.layer_ids; }
  int stage_count() const noexcept { return static_cast<int>(config_.stage_channels.size()); }
  int channels_at(int layer_id) const;
  static int stride_at(int layer_id) { return 1 << layer_id; }

  /// Provenance record (architecture, weights source, seed).
  nlohmann::json describe() const;

  struct Impl;

 private:
  BackboneConfig config_;
  std::unique_ptr<Impl> impl_;
};

}  // namespace dshift
