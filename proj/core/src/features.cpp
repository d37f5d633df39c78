#include "dshift/features.hpp"

#include <ATen/CPUGeneratorImpl.h>
#include <torch/torch.h>

#include "dshift/checkpoint.hpp"
#include "dshift/errors.hpp"

namespace dshift {

namespace F = torch::nn::functional;

const torch::Tensor& FeaturePyramid::at(int layer_id) const {
  for (std::size_t i = 0; i < layer_ids.size(); ++i) {
    if (layer_ids[i] == layer_id) return maps[i];
  }
  throw ArgumentError("feature pyramid has no layer " + std::to_string(layer_id));
}

bool FeaturePyramid::has(int layer_id) const {
  return std::find(layer_ids.begin(), layer_ids.end(), layer_id) != layer_ids.end();
}

struct FeatureExtractor::Impl {
  std::vector<torch::Tensor> weights;
  std::vector<torch::Tensor> biases;  // undefined in bias-free mode
  std::optional<torch::Tensor> input_mean;
  std::optional<torch::Tensor> input_std;
};

namespace {

void check_layers(const BackboneConfig& config) {
  if (config.stage_channels.empty()) throw ArgumentError("backbone needs at least one stage");
  if (config.layer_ids.empty()) throw ArgumentError("feature extractor needs at least one layer");
  int previous = -1;
  for (int id : config.layer_ids) {
    if (id <= previous) throw ArgumentError("layer ids must be strictly increasing");
    if (id >= static_cast<int>(config.stage_channels.size()))
      throw ArgumentError("layer id " + std::to_string(id) + " exceeds the backbone depth");
    previous = id;
  }
}

void init_random(const BackboneConfig& config, FeatureExtractor::Impl& impl) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(config.seed);
  int in_channels = 3;
  for (int out_channels : config.stage_channels) {
    const double fan_in = static_cast<double>(in_channels) * 9.0;
    torch::Tensor w = at::normal(0.0, std::sqrt(2.0 / fan_in), {out_channels, in_channels, 3, 3}, gen);
    impl.weights.push_back(w.to(torch::kFloat32));
    impl.biases.emplace_back();
    in_channels = out_channels;
  }
}

void init_pretrained(BackboneConfig& config, FeatureExtractor::Impl& impl) {
  if (!config.weights_path)
    throw ArgumentError("pretrained backbone requires a weights file path");
  const Checkpoint ckpt = load_checkpoint_file(*config.weights_path);
  if (ckpt.algorithm != "backbone")
    throw CompatibilityError("weights file holds '" + ckpt.algorithm + "', expected 'backbone'");
  if (ckpt.config.contains("stage_channels"))
    config.stage_channels = ckpt.config.at("stage_channels").get<std::vector<int>>();
  if (ckpt.config.contains("input_mean"))
    impl.input_mean = torch::tensor(ckpt.config.at("input_mean").get<std::vector<float>>()).view({1, 3, 1, 1});
  if (ckpt.config.contains("input_std"))
    impl.input_std = torch::tensor(ckpt.config.at("input_std").get<std::vector<float>>()).view({1, 3, 1, 1});

  int in_channels = 3;
  for (std::size_t k = 0; k < config.stage_channels.size(); ++k) {
    const std::string base = "stage" + std::to_string(k);
    const torch::Tensor* w = ckpt.find(base + ".weight");
    if (w == nullptr) throw CompatibilityError("weights file lacks " + base + ".weight");
    const std::vector<int64_t> expected{config.stage_channels[k], in_channels, 3, 3};
    if (w->sizes() != torch::IntArrayRef(expected))
      throw CompatibilityError("unexpected shape for " + base + ".weight");
    impl.weights.push_back(w->to(torch::kFloat32));
    const torch::Tensor* b = ckpt.find(base + ".bias");
    impl.biases.push_back(b ? b->to(torch::kFloat32) : torch::Tensor());
    in_channels = config.stage_channels[k];
  }
}

}  // namespace

FeatureExtractor::FeatureExtractor(BackboneConfig config)
    : config_(std::move(config)), impl_(std::make_unique<Impl>()) {
  if (config_.weights_source == WeightsSource::pretrained_classifier) {
    init_pretrained(config_, *impl_);
  } else {
    init_random(config_, *impl_);
  }
  check_layers(config_);
}

FeatureExtractor::~FeatureExtractor() = default;
FeatureExtractor::FeatureExtractor(FeatureExtractor&&) noexcept = default;
FeatureExtractor& FeatureExtractor::operator=(FeatureExtractor&&) noexcept = default;

FeatureExtractor FeatureExtractor::random(std::uint64_t seed) {
  BackboneConfig config;
  config.seed = seed;
  return FeatureExtractor(std::move(config));
}

int FeatureExtractor::channels_at(int layer_id) const {
  if (layer_id < 0 || layer_id >= stage_count()) throw ArgumentError("layer id out of range");
  return config_.stage_channels[static_cast<std::size_t>(layer_id)];
}

FeaturePyramid FeatureExtractor::extract(const ImageRaster& image) const {
  if (image.channels() != 3)
    throw ContractError("feature extraction needs a 3-channel image; convert with to_three_channel first");
  torch::NoGradGuard no_grad;
  return extract(to_tensor(image));
}

FeaturePyramid FeatureExtractor::extract(const torch::Tensor& image) const {
  torch::Tensor x = image.dim() == 3 ? image.unsqueeze(0) : image;
  if (x.dim() != 4 || x.size(0) != 1 || x.size(1) != 3)
    throw ContractError("feature extraction needs a [3, H, W] image; convert with to_three_channel first");

  FeaturePyramid pyramid;
  pyramid.input_height = static_cast<int>(x.size(2));
  pyramid.input_width = static_cast<int>(x.size(3));

  const auto dtype = x.scalar_type();
  if (impl_->input_mean) x = (x - impl_->input_mean->to(dtype)) / impl_->input_std->to(dtype);

  const int last = config_.layer_ids.back();
  std::size_t next_tap = 0;
  for (int k = 0; k <= last; ++k) {
    if (k > 0) x = F::avg_pool2d(x, F::AvgPool2dFuncOptions(2).stride(2).ceil_mode(true));
    x = F::pad(x, F::PadFuncOptions({1, 1, 1, 1}).mode(torch::kReplicate));
    const auto& b = impl_->biases[static_cast<std::size_t>(k)];
    x = torch::conv2d(x, impl_->weights[static_cast<std::size_t>(k)].to(dtype),
                      b.defined() ? b.to(dtype) : torch::Tensor());
    x = torch::relu(x);
    if (config_.layer_ids[next_tap] == k) {
      pyramid.layer_ids.push_back(k);
      pyramid.maps.push_back(x.squeeze(0));
      ++next_tap;
    }
  }
  return pyramid;
}

nlohmann::json FeatureExtractor::describe() const {
  nlohmann::json j;
  j["architecture"] = "conv3x3-relu pyramid, 2x2 avg-pool between stages";
  j["stage_channels"] = config_.stage_channels;
  j["layer_ids"] = config_.layer_ids;
  if (config_.weights_source == WeightsSource::fixed_seed_random) {
    j["weights_source"] = "fixed-seed-random";
    j["seed"] = config_.seed;
  } else {
    j["weights_source"] = "pretrained-classifier";
    j["weights_path"] = config_.weights_path->string();
  }
  return j;
}

}  // namespace dshift
