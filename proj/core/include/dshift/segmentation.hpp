#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/nn.h>
#include <torch/types.h>

#include "dshift/manifest.hpp"
#include "dshift/raster.hpp"

namespace dshift {

/// A binary segmentation model seen through its predictions only.
class SegmentationModelAdapter {
 public:
  virtual ~SegmentationModelAdapter() = default;
  virtual std::string name() const = 0;
  /// Native input size (height, width).
  virtual std::pair<int, int> input_size() const = 0;
  /// Mask with the dimensions of `image`; deterministic for a loaded model.
  virtual SegmentationMask predict(const ImageRaster& image) const = 0;
};

SegmentationMask predict_mask(const SegmentationModelAdapter& adapter, const ImageRaster& image);

/// Adapter over an arbitrary prediction procedure (external models, fixtures).
class FunctionAdapter final : public SegmentationModelAdapter {
 public:
  using Predict = std::function<SegmentationMask(const ImageRaster&)>;
  FunctionAdapter(std::string name, std::pair<int, int> input_size, Predict predict);

  std::string name() const override { return name_; }
  std::pair<int, int> input_size() const override { return input_size_; }
  SegmentationMask predict(const ImageRaster& image) const override;

 private:
  std::string name_;
  std::pair<int, int> input_size_;
  Predict predict_;
};

struct ToyUNetConfig {
  int depth = 2;
  int base_channels = 8;
  int input_size = 64;
  /// Unset: chosen by an LR range test before training.
  std::optional<double> learning_rate;
  int max_epochs = 40;
  int patience = 6;
  int batch_size = 4;
  std::uint64_t seed = 0;
  double lr_min = 1e-5;
  double lr_max = 1.0;
  int lr_steps = 100;
};

void to_json(nlohmann::json& j, const ToyUNetConfig& c);
void from_json(const nlohmann::json& j, ToyUNetConfig& c);
/// Throws ArgumentError when depth < 1, patience < 1 or sizes are not positive.
void validate(const ToyUNetConfig& config);

/// Encoder/decoder with skip connections; logits of the foreground class.
class UNetImpl : public torch::nn::Module {
 public:
  UNetImpl(int depth, int base_channels);
  /// [B, 3, H, W] -> [B, 1, H, W]; other sizes are padded to a multiple of 2^depth, then cropped.
  torch::Tensor forward(const torch::Tensor& x);
  int depth() const noexcept { return depth_; }

 private:
  int depth_;
  std::vector<torch::nn::Sequential> down_;
  torch::nn::Sequential bottom_{nullptr};
  std::vector<torch::nn::ConvTranspose2d> up_;
  std::vector<torch::nn::Sequential> merge_;
  torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(UNet);

/// The built-in trainable model.
class ToyUNetAdapter final : public SegmentationModelAdapter {
 public:
  explicit ToyUNetAdapter(const ToyUNetConfig& config);

  std::string name() const override { return "toy-unet"; }
  std::pair<int, int> input_size() const override { return {config_.input_size, config_.input_size}; }
  SegmentationMask predict(const ImageRaster& image) const override;
  /// Foreground probability at the image's own size.
  std::vector<float> probability(const ImageRaster& image) const;

  const ToyUNetConfig& config() const noexcept { return config_; }
  UNet& net() noexcept { return net_; }
  const UNet& net() const noexcept { return net_; }

  void save(const std::filesystem::path& path) const;
  static std::shared_ptr<ToyUNetAdapter> load(const std::filesystem::path& path);

 private:
  ToyUNetConfig config_;
  UNet net_;
};

struct SegmentationSample {
  std::filesystem::path image_path;
  ImageRaster image;
  SegmentationMask mask;
};

/// Loads every image with its mask; ArgumentError when the manifest is invalid or a mask is missing.
std::vector<SegmentationSample> load_samples(const DatasetManifest& manifest);

struct SplitFractions {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;
};

struct SampleSplit {
  std::vector<SegmentationSample> train;
  std::vector<SegmentationSample> val;
  std::vector<SegmentationSample> test;
};

/// Seeded shuffle, then contiguous cuts; val and test get at least one sample when n >= 3.
SampleSplit split_samples(std::vector<SegmentationSample> samples, const SplitFractions& fractions,
                          std::uint64_t seed);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_iou = 0.0;
};

struct TrainState {
  int epoch = 0;
  double best_val_iou = -1.0;
  int best_epoch = 0;
  int epochs_since_best = 0;
  std::vector<EpochRecord> history;
};

/// Tracks the best validation score; `update` returns true once training should stop.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience);
  /// Records one epoch. Only a strictly higher score counts as an improvement.
  bool update(TrainState& state, const EpochRecord& record) const;

 private:
  int patience_;
};

struct LrRangeResult {
  double suggested = 0.0;
  std::vector<double> learning_rates;
  std::vector<double> losses;
  std::vector<double> smoothed;
};

/// Exponential LR sweep from lr_min to lr_max over `steps` calls of `step(lr) -> loss`.
/// Suggests the LR at the steepest descent of the bias-corrected exponentially smoothed loss.
/// Throws DivergenceError when the loss blows up within the first 10 steps.
LrRangeResult lr_range_test(const std::function<double(double)>& step, double lr_min, double lr_max, int steps,
                            double smoothing = 0.9);

/// Range test on a U-Net; the network's weights are restored afterwards.
LrRangeResult lr_range_test(UNet& net, const std::vector<SegmentationSample>& data, const ToyUNetConfig& config,
                            double lr_min, double lr_max, int steps);

/// Pixelwise binary cross-entropy plus soft-IoU loss, weighted 1:1.
torch::Tensor segmentation_loss(const torch::Tensor& logits, const torch::Tensor& target);

struct UNetTrainResult {
  std::shared_ptr<ToyUNetAdapter> model;
  TrainState state;
  double learning_rate = 0.0;
  std::optional<LrRangeResult> lr_search;
};

struct UNetTrainOptions {
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Trains with early stopping on validation IoU and returns the best-validation snapshot.
UNetTrainResult train_unet(const ToyUNetConfig& config, const std::vector<SegmentationSample>& train,
                           const std::vector<SegmentationSample>& val, const UNetTrainOptions& options = {});
UNetTrainResult train_unet(const ToyUNetConfig& config, const DatasetManifest& train, const DatasetManifest& val,
                           const UNetTrainOptions& options = {});

/// Builds adapters from JSON descriptions `{"type": ..., ...}`.
class AdapterRegistry {
 public:
  using Factory = std::function<std::shared_ptr<SegmentationModelAdapter>(const nlohmann::json&)>;

  void register_factory(const std::string& type, Factory factory);
  std::shared_ptr<SegmentationModelAdapter> create(const nlohmann::json& description) const;
  std::vector<std::string> types() const;

 private:
  std::map<std::string, Factory> factories_;
};

/// Registry with "toy-unet" (`{"type": "toy-unet", "checkpoint": path}`).
AdapterRegistry make_default_adapter_registry();

}  // namespace dshift
