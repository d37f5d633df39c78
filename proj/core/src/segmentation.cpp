#include "dshift/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <torch/torch.h>

#include "dshift/checkpoint.hpp"
#include "dshift/errors.hpp"
#include "dshift/evaluation.hpp"

namespace dshift {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

namespace {

nn::Sequential conv_block(int in, int out) {
  return nn::Sequential(nn::Conv2d(nn::Conv2dOptions(in, out, 3).padding(1)), nn::ReLU(),
                        nn::Conv2d(nn::Conv2dOptions(out, out, 3).padding(1)), nn::ReLU());
}

struct TensorBatch {
  torch::Tensor images;  // [N, 3, S, S]
  torch::Tensor masks;   // [N, 1, S, S]
};

TensorBatch to_training_tensors(const std::vector<SegmentationSample>& samples, int size) {
  std::vector<torch::Tensor> images;
  std::vector<torch::Tensor> masks;
  for (const auto& s : samples) {
    images.push_back(to_tensor(resize(to_three_channel(s.image), size, size)));
    masks.push_back(to_tensor(resize(s.mask, size, size)));
  }
  return {torch::stack(images, 0), torch::stack(masks, 0)};
}

using Snapshot = std::vector<torch::Tensor>;

Snapshot snapshot(nn::Module& module) {
  Snapshot out;
  for (const auto& p : module.parameters()) out.push_back(p.detach().clone());
  return out;
}

void restore(nn::Module& module, const Snapshot& saved) {
  torch::NoGradGuard no_grad;
  auto params = module.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i].copy_(saved[i]);
}

void set_learning_rate(torch::optim::Adam& optimizer, double lr) {
  for (auto& group : optimizer.param_groups())
    static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
}

double mean_val_iou(const ToyUNetAdapter& model, const std::vector<SegmentationSample>& val) {
  double total = 0.0;
  for (const auto& s : val) total += iou(model.predict(s.image), s.mask);
  return total / static_cast<double>(val.size());
}

}  // namespace

SegmentationMask predict_mask(const SegmentationModelAdapter& adapter, const ImageRaster& image) {
  SegmentationMask mask = adapter.predict(image);
  if (mask.height() != image.height() || mask.width() != image.width())
    throw ContractError("adapter '" + adapter.name() + "' returned a mask of the wrong size");
  return mask;
}

FunctionAdapter::FunctionAdapter(std::string name, std::pair<int, int> input_size, Predict predict)
    : name_(std::move(name)), input_size_(input_size), predict_(std::move(predict)) {
  if (!predict_) throw ArgumentError("FunctionAdapter needs a prediction procedure");
}

SegmentationMask FunctionAdapter::predict(const ImageRaster& image) const {
  SegmentationMask mask = predict_(image);
  if (mask.height() != image.height() || mask.width() != image.width()) mask = resize(mask, image.height(), image.width());
  return mask;
}

void to_json(nlohmann::json& j, const ToyUNetConfig& c) {
  j = {{"depth", c.depth},
       {"base_channels", c.base_channels},
       {"input_size", c.input_size},
       {"learning_rate", c.learning_rate ? nlohmann::json(*c.learning_rate) : nlohmann::json("auto")},
       {"max_epochs", c.max_epochs},
       {"patience", c.patience},
       {"batch_size", c.batch_size},
       {"seed", c.seed},
       {"lr_min", c.lr_min},
       {"lr_max", c.lr_max},
       {"lr_steps", c.lr_steps}};
}

void from_json(const nlohmann::json& j, ToyUNetConfig& c) {
  c.depth = j.value("depth", c.depth);
  c.base_channels = j.value("base_channels", c.base_channels);
  c.input_size = j.value("input_size", c.input_size);
  if (j.contains("learning_rate")) {
    const auto& lr = j.at("learning_rate");
    if (lr.is_number()) {
      c.learning_rate = lr.get<double>();
    } else if (lr.is_null() || (lr.is_string() && lr.get<std::string>() == "auto")) {
      c.learning_rate.reset();
    } else {
      throw ArgumentError("learning_rate must be a number or \"auto\"");
    }
  }
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.patience = j.value("patience", c.patience);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  c.lr_min = j.value("lr_min", c.lr_min);
  c.lr_max = j.value("lr_max", c.lr_max);
  c.lr_steps = j.value("lr_steps", c.lr_steps);
}

void validate(const ToyUNetConfig& c) {
  if (c.depth < 1) throw ArgumentError("U-Net depth must be >= 1");
  if (c.patience < 1) throw ArgumentError("patience must be >= 1");
  if (c.base_channels < 1 || c.input_size < 1 || c.batch_size < 1 || c.max_epochs < 1)
    throw ArgumentError("U-Net sizes, batch size and max_epochs must be positive");
  if (c.learning_rate && !(*c.learning_rate > 0.0)) throw ArgumentError("learning_rate must be > 0");
}

UNetImpl::UNetImpl(int depth, int base_channels) : depth_(depth) {
  if (depth < 1) throw ArgumentError("U-Net depth must be >= 1");
  int in = 3;
  int c = base_channels;
  for (int k = 0; k < depth; ++k) {
    down_.push_back(register_module("down" + std::to_string(k), conv_block(in, c)));
    in = c;
    c *= 2;
  }
  bottom_ = register_module("bottom", conv_block(in, c));
  for (int k = depth - 1; k >= 0; --k) {
    up_.push_back(register_module("up" + std::to_string(k),
                                  nn::ConvTranspose2d(nn::ConvTranspose2dOptions(c, c / 2, 2).stride(2))));
    merge_.push_back(register_module("merge" + std::to_string(k), conv_block(c, c / 2)));
    c /= 2;
  }
  head_ = register_module("head", nn::Conv2d(nn::Conv2dOptions(c, 1, 1)));
}

torch::Tensor UNetImpl::forward(const torch::Tensor& input) {
  if (input.dim() != 4 || input.size(1) != 3) throw ContractError("U-Net expects [B, 3, H, W] input");
  const std::int64_t multiple = std::int64_t{1} << depth_;
  const std::int64_t h = input.size(2);
  const std::int64_t w = input.size(3);
  const std::int64_t ph = (multiple - h % multiple) % multiple;
  const std::int64_t pw = (multiple - w % multiple) % multiple;
  torch::Tensor x = (ph || pw) ? F::pad(input, F::PadFuncOptions({0, pw, 0, ph}).mode(torch::kReplicate)) : input;

  std::vector<torch::Tensor> skips;
  for (auto& block : down_) {
    x = block->forward(x);
    skips.push_back(x);
    x = F::max_pool2d(x, F::MaxPool2dFuncOptions(2));
  }
  x = bottom_->forward(x);
  for (std::size_t i = 0; i < up_.size(); ++i) {
    x = up_[i]->forward(x);
    x = merge_[i]->forward(torch::cat({skips[skips.size() - 1 - i], x}, 1));
  }
  x = head_->forward(x);
  return (ph || pw) ? x.slice(2, 0, h).slice(3, 0, w) : x;
}

ToyUNetAdapter::ToyUNetAdapter(const ToyUNetConfig& config) : config_(config), net_(nullptr) {
  validate(config_);
  torch::manual_seed(config_.seed);
  net_ = UNet(config_.depth, config_.base_channels);
}

std::vector<float> ToyUNetAdapter::probability(const ImageRaster& image) const {
  torch::NoGradGuard no_grad;
  const int s = config_.input_size;
  const ImageRaster input = resize(to_three_channel(image), s, s);
  UNet net = net_;
  const torch::Tensor p = torch::sigmoid(net->forward(to_tensor(input).unsqueeze(0))).reshape({-1}).contiguous();
  std::vector<float> values(p.data_ptr<float>(), p.data_ptr<float>() + p.numel());
  if (image.height() == s && image.width() == s) return values;
  const ImageRaster prob(s, s, 1, std::move(values));
  const ImageRaster back = resize(prob, image.height(), image.width());
  return {back.values().begin(), back.values().end()};
}

SegmentationMask ToyUNetAdapter::predict(const ImageRaster& image) const {
  const std::vector<float> p = probability(image);
  return threshold_mask(image.height(), image.width(), p, 0.5f);
}

void ToyUNetAdapter::save(const std::filesystem::path& path) const {
  Checkpoint ckpt;
  ckpt.algorithm = "toy-unet";
  ckpt.config = config_;
  append_module_state(ckpt, *net_, "unet.");
  save_checkpoint_file(ckpt, path);
}

std::shared_ptr<ToyUNetAdapter> ToyUNetAdapter::load(const std::filesystem::path& path) {
  const Checkpoint ckpt = load_checkpoint_file(path);
  if (ckpt.algorithm != "toy-unet")
    throw CompatibilityError("checkpoint holds '" + ckpt.algorithm + "', expected a toy-unet model");
  auto model = std::make_shared<ToyUNetAdapter>(ckpt.config.get<ToyUNetConfig>());
  restore_module_state(ckpt, *model->net(), "unet.");
  return model;
}

std::vector<SegmentationSample> load_samples(const DatasetManifest& manifest) {
  if (!manifest.mask_dir) throw ArgumentError("manifest '" + manifest.name + "' has no mask directory");
  std::vector<SegmentationSample> out;
  for (const auto& path : require_valid(manifest)) {
    const auto mask_path = find_mask(manifest, path);
    if (!mask_path) throw ArgumentError("missing mask for image " + path.filename().string());
    out.push_back({path, load_image(path), load_mask(*mask_path)});
  }
  return out;
}

SampleSplit split_samples(std::vector<SegmentationSample> samples, const SplitFractions& f, std::uint64_t seed) {
  if (f.train < 0 || f.val < 0 || f.test < 0 || std::abs(f.train + f.val + f.test - 1.0) > 1e-9)
    throw ArgumentError("split fractions must be non-negative and sum to 1");
  std::mt19937_64 rng(seed);
  for (std::size_t i = samples.size(); i > 1; --i) std::swap(samples[i - 1], samples[rng() % i]);

  const std::size_t n = samples.size();
  auto count = [&](double fraction) {
    std::size_t k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    if (n >= 3 && fraction > 0.0) k = std::max<std::size_t>(k, 1);
    return k;
  };
  const std::size_t n_test = count(f.test);
  const std::size_t n_val = std::min(count(f.val), n - std::min(n, n_test));
  const std::size_t n_train = n - n_test - n_val;

  SampleSplit split;
  auto it = std::make_move_iterator(samples.begin());
  split.train.assign(it, it + static_cast<std::ptrdiff_t>(n_train));
  split.val.assign(it + static_cast<std::ptrdiff_t>(n_train), it + static_cast<std::ptrdiff_t>(n_train + n_val));
  split.test.assign(it + static_cast<std::ptrdiff_t>(n_train + n_val), std::make_move_iterator(samples.end()));
  return split;
}

EarlyStopping::EarlyStopping(int patience) : patience_(patience) {
  if (patience < 1) throw ArgumentError("patience must be >= 1");
}

bool EarlyStopping::update(TrainState& state, const EpochRecord& record) const {
  state.history.push_back(record);
  state.epoch = record.epoch;
  if (record.val_iou > state.best_val_iou) {
    state.best_val_iou = record.val_iou;
    state.best_epoch = record.epoch;
    state.epochs_since_best = 0;
  } else {
    ++state.epochs_since_best;
  }
  return state.epochs_since_best >= patience_;
}

torch::Tensor segmentation_loss(const torch::Tensor& logits, const torch::Tensor& target) {
  if (logits.sizes() != target.sizes()) throw ContractError("segmentation_loss: logits and target shapes differ");
  const torch::Tensor bce = F::binary_cross_entropy_with_logits(logits, target);
  const torch::Tensor p = torch::sigmoid(logits);
  const torch::Tensor inter = (p * target).sum({1, 2, 3});
  const torch::Tensor uni = (p + target - p * target).sum({1, 2, 3});
  const torch::Tensor soft_iou = ((inter + 1.0) / (uni + 1.0)).mean();
  return bce + (1.0 - soft_iou);
}

LrRangeResult lr_range_test(UNet& net, const std::vector<SegmentationSample>& data, const ToyUNetConfig& config,
                            double lr_min, double lr_max, int steps) {
  if (data.empty()) throw ArgumentError("LR range test needs training data");
  const TensorBatch all = to_training_tensors(data, config.input_size);
  const Snapshot saved = snapshot(*net);
  torch::optim::Adam optimizer(net->parameters(), torch::optim::AdamOptions(lr_min));
  const std::int64_t n = all.images.size(0);
  const std::int64_t b = std::min<std::int64_t>(config.batch_size, n);
  std::int64_t cursor = 0;

  auto step = [&](double lr) {
    set_learning_rate(optimizer, lr);
    std::vector<std::int64_t> idx;
    for (std::int64_t i = 0; i < b; ++i) idx.push_back((cursor + i) % n);
    cursor = (cursor + b) % n;
    const torch::Tensor sel = torch::tensor(idx, torch::kInt64);
    optimizer.zero_grad();
    const torch::Tensor loss = segmentation_loss(net->forward(all.images.index_select(0, sel)),
                                                 all.masks.index_select(0, sel));
    loss.backward();
    optimizer.step();
    return loss.item<double>();
  };

  try {
    LrRangeResult result = lr_range_test(step, lr_min, lr_max, steps);
    restore(*net, saved);
    return result;
  } catch (...) {
    restore(*net, saved);
    throw;
  }
}

UNetTrainResult train_unet(const ToyUNetConfig& config, const std::vector<SegmentationSample>& train,
                           const std::vector<SegmentationSample>& val, const UNetTrainOptions& options) {
  validate(config);
  if (train.empty()) throw ArgumentError("training set is empty");
  if (val.empty()) throw ArgumentError("validation set is empty");

  UNetTrainResult result;
  result.model = std::make_shared<ToyUNetAdapter>(config);
  UNet& net = result.model->net();

  if (config.learning_rate) {
    result.learning_rate = *config.learning_rate;
  } else {
    result.lr_search = lr_range_test(net, train, config, config.lr_min, config.lr_max, config.lr_steps);
    result.learning_rate = result.lr_search->suggested;
  }

  const TensorBatch data = to_training_tensors(train, config.input_size);
  const std::int64_t n = data.images.size(0);
  torch::optim::Adam optimizer(net->parameters(), torch::optim::AdamOptions(result.learning_rate));
  std::mt19937_64 rng(config.seed ^ 0x9E3779B97F4A7C15ULL);
  const EarlyStopping stopper(config.patience);
  Snapshot best;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), std::int64_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);

    double loss_sum = 0.0;
    for (std::int64_t start = 0; start < n; start += config.batch_size) {
      const std::int64_t end = std::min<std::int64_t>(start + config.batch_size, n);
      const torch::Tensor sel =
          torch::tensor(std::vector<std::int64_t>(order.begin() + start, order.begin() + end), torch::kInt64);
      optimizer.zero_grad();
      const torch::Tensor loss =
          segmentation_loss(net->forward(data.images.index_select(0, sel)), data.masks.index_select(0, sel));
      const double value = loss.item<double>();
      if (!std::isfinite(value))
        throw DivergenceError("U-Net training diverged at epoch " + std::to_string(epoch) +
                                  "; try a smaller learning rate",
                              epoch);
      loss.backward();
      optimizer.step();
      loss_sum += value * static_cast<double>(end - start);
    }

    const EpochRecord record{epoch, loss_sum / static_cast<double>(n), mean_val_iou(*result.model, val)};
    const bool improved = record.val_iou > result.state.best_val_iou;
    const bool stop = stopper.update(result.state, record);
    if (improved) best = snapshot(*net);
    if (options.on_epoch) options.on_epoch(record);
    if (stop) break;
  }
  restore(*net, best);
  return result;
}

UNetTrainResult train_unet(const ToyUNetConfig& config, const DatasetManifest& train, const DatasetManifest& val,
                           const UNetTrainOptions& options) {
  return train_unet(config, load_samples(train), load_samples(val), options);
}

void AdapterRegistry::register_factory(const std::string& type, Factory factory) {
  if (factories_.count(type) != 0) throw ConflictError("adapter type '" + type + "' is already registered");
  factories_.emplace(type, std::move(factory));
}

std::shared_ptr<SegmentationModelAdapter> AdapterRegistry::create(const nlohmann::json& description) const {
  if (!description.is_object() || !description.contains("type"))
    throw ArgumentError("adapter description needs a \"type\" field");
  const auto type = description.at("type").get<std::string>();
  const auto it = factories_.find(type);
  if (it == factories_.end()) {
    std::string known;
    for (const auto& t : types()) known += (known.empty() ? "" : ", ") + t;
    throw UnknownAlgorithmError("unknown segmentation adapter '" + type + "'; registered: " + known);
  }
  return it->second(description);
}

std::vector<std::string> AdapterRegistry::types() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : factories_) out.push_back(name);
  return out;
}

AdapterRegistry make_default_adapter_registry() {
  AdapterRegistry registry;
  registry.register_factory("toy-unet", [](const nlohmann::json& d) -> std::shared_ptr<SegmentationModelAdapter> {
    if (!d.contains("checkpoint")) throw ArgumentError("toy-unet adapter needs a \"checkpoint\" path");
    return ToyUNetAdapter::load(d.at("checkpoint").get<std::string>());
  });
  return registry;
}

}  // namespace dshift
