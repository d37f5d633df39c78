#include <torch/torch.h>

#include "dshift/errors.hpp"
#include "dshift/translation.hpp"

namespace dshift {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

namespace {

class ResidualBlockImpl : public nn::Module {
 public:
  explicit ResidualBlockImpl(int channels) {
    body_ = register_module(
        "body", nn::Sequential(nn::ReflectionPad2d(1), nn::Conv2d(nn::Conv2dOptions(channels, channels, 3)),
                               nn::InstanceNorm2d(channels), nn::ReLU(), nn::ReflectionPad2d(1),
                               nn::Conv2d(nn::Conv2dOptions(channels, channels, 3)), nn::InstanceNorm2d(channels)));
  }
  torch::Tensor forward(const torch::Tensor& x) { return x + body_->forward(x); }

 private:
  nn::Sequential body_{nullptr};
};
TORCH_MODULE(ResidualBlock);

// Pads to a multiple of `multiple` with edge replication; returns the padding applied.
std::pair<torch::Tensor, std::array<int64_t, 2>> pad_to_multiple(const torch::Tensor& x, int64_t multiple) {
  const int64_t h = x.size(-2);
  const int64_t w = x.size(-1);
  const int64_t ph = (multiple - h % multiple) % multiple;
  const int64_t pw = (multiple - w % multiple) % multiple;
  if (ph == 0 && pw == 0) return {x, {0, 0}};
  return {F::pad(x, F::PadFuncOptions({0, pw, 0, ph}).mode(torch::kReplicate)), {ph, pw}};
}

}  // namespace

GeneratorImpl::GeneratorImpl(GeneratorSpec spec) : spec_(spec) {
  if (spec_.downsample_steps < 1) throw ArgumentError("generator needs at least one downsampling step");
  if (spec_.residual_blocks < 0) throw ArgumentError("residual block count must be >= 0");
  if (spec_.base_channels < 1) throw ArgumentError("base channel count must be positive");

  int c = spec_.base_channels;
  stem_ = register_module("stem", nn::Sequential(nn::ReflectionPad2d(3), nn::Conv2d(nn::Conv2dOptions(3, c, 7)),
                                                 nn::InstanceNorm2d(c), nn::ReLU()));
  for (int i = 0; i < spec_.downsample_steps; ++i) {
    down_.push_back(register_module(
        "down" + std::to_string(i),
        nn::Sequential(nn::Conv2d(nn::Conv2dOptions(c, 2 * c, 3).stride(2).padding(1)), nn::InstanceNorm2d(2 * c),
                       nn::ReLU())));
    c *= 2;
  }
  body_ = register_module("body", nn::Sequential());
  for (int i = 0; i < spec_.residual_blocks; ++i) body_->push_back(ResidualBlock(c));
  up_ = register_module("up", nn::Sequential());
  for (int i = 0; i < spec_.downsample_steps; ++i) {
    up_->push_back(nn::Upsample(nn::UpsampleOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest)));
    up_->push_back(nn::Conv2d(nn::Conv2dOptions(c, c / 2, 3).padding(1)));
    up_->push_back(nn::InstanceNorm2d(c / 2));
    up_->push_back(nn::ReLU());
    c /= 2;
  }
  head_ = register_module("head", nn::Conv2d(nn::Conv2dOptions(c, 3, 7).padding(3).padding_mode(torch::kReflect)));
  if (spec_.identity_init) zero_head();
}

void GeneratorImpl::zero_head() {
  torch::NoGradGuard no_grad;
  head_->weight.zero_();
  head_->bias.zero_();
}

std::vector<int> GeneratorImpl::encoder_channels() const {
  std::vector<int> out;
  int c = spec_.base_channels;
  out.push_back(c);
  for (int i = 0; i < spec_.downsample_steps; ++i) out.push_back(c *= 2);
  return out;
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& input) {
  const torch::Tensor x = input.dim() == 3 ? input.unsqueeze(0) : input;
  if (x.dim() != 4 || x.size(1) != 3) throw ContractError("generator expects [B, 3, H, W] input");
  auto [padded, pad] = pad_to_multiple(x, int64_t{1} << spec_.downsample_steps);
  torch::Tensor h = stem_->forward(padded);
  for (auto& d : down_) h = d->forward(h);
  h = up_->forward(body_->forward(h));
  torch::Tensor r = torch::tanh(head_->forward(h));
  if (pad[0] != 0 || pad[1] != 0) r = r.slice(2, 0, x.size(2)).slice(3, 0, x.size(3));
  // Bounded residual step toward 1 (r > 0) or toward 0 (r <= 0).
  const torch::Tensor room = torch::where(r > 0, 1.0 - x, x);
  torch::Tensor out = x + r * room;
  return input.dim() == 3 ? out.squeeze(0) : out;
}

std::vector<torch::Tensor> GeneratorImpl::encode_layers(const torch::Tensor& input) {
  const torch::Tensor x = input.dim() == 3 ? input.unsqueeze(0) : input;
  auto [padded, pad] = pad_to_multiple(x, int64_t{1} << spec_.downsample_steps);
  std::vector<torch::Tensor> layers;
  torch::Tensor h = stem_->forward(padded);
  layers.push_back(h);
  for (auto& d : down_) {
    h = d->forward(h);
    layers.push_back(h);
  }
  return layers;
}

DiscriminatorImpl::DiscriminatorImpl(DiscriminatorSpec spec) : spec_(spec) {
  if (spec_.layers < 1) throw ArgumentError("discriminator needs at least one layer");
  int c = spec_.base_channels;
  net_ = register_module("net", nn::Sequential());
  net_->push_back(nn::Conv2d(nn::Conv2dOptions(3, c, 4).stride(2).padding(1)));
  net_->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
  for (int i = 1; i < spec_.layers; ++i) {
    net_->push_back(nn::Conv2d(nn::Conv2dOptions(c, 2 * c, 4).stride(2).padding(1)));
    net_->push_back(nn::InstanceNorm2d(2 * c));
    net_->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
    c *= 2;
  }
  net_->push_back(nn::Conv2d(nn::Conv2dOptions(c, 1, 4).stride(1).padding(1)));
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& x) {
  torch::Tensor out = net_->forward(x.dim() == 3 ? x.unsqueeze(0) : x);
  if (!spec_.patch_output) out = out.mean({2, 3}, true);
  return out;
}

PatchProjectorImpl::PatchProjectorImpl(const std::vector<int>& in_channels, int out_dim) {
  for (std::size_t i = 0; i < in_channels.size(); ++i) {
    heads_.push_back(register_module(
        "head" + std::to_string(i),
        nn::Sequential(nn::Linear(in_channels[i], out_dim), nn::ReLU(), nn::Linear(out_dim, out_dim))));
  }
}

torch::Tensor PatchProjectorImpl::forward(std::size_t layer, const torch::Tensor& vectors) {
  return heads_.at(layer)->forward(vectors);
}

void to_json(nlohmann::json& j, const GeneratorSpec& s) {
  j = {{"base_channels", s.base_channels},
       {"residual_blocks", s.residual_blocks},
       {"downsample_steps", s.downsample_steps},
       {"normalization", "instance"},
       {"identity_init", s.identity_init}};
}

void from_json(const nlohmann::json& j, GeneratorSpec& s) {
  s.base_channels = j.value("base_channels", s.base_channels);
  s.residual_blocks = j.value("residual_blocks", s.residual_blocks);
  s.downsample_steps = j.value("downsample_steps", s.downsample_steps);
  s.identity_init = j.value("identity_init", s.identity_init);
}

void to_json(nlohmann::json& j, const DiscriminatorSpec& s) {
  j = {{"base_channels", s.base_channels}, {"layers", s.layers}, {"patch_output", s.patch_output}};
}

void from_json(const nlohmann::json& j, DiscriminatorSpec& s) {
  s.base_channels = j.value("base_channels", s.base_channels);
  s.layers = j.value("layers", s.layers);
  s.patch_output = j.value("patch_output", s.patch_output);
}

}  // namespace dshift
