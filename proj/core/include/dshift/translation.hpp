#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/nn.h>
#include <torch/types.h>

#include "dshift/manifest.hpp"
#include "dshift/raster.hpp"

namespace dshift {

enum class TranslationAlgorithm { cyclegan, cut, fastcut };

std::string to_string(TranslationAlgorithm algorithm);
/// Throws ExtensionPointError for dualgan / forkgan / ganilla and UnknownAlgorithmError otherwise.
TranslationAlgorithm parse_translation_algorithm(const std::string& name);
std::vector<std::string> translation_algorithm_names();
std::vector<std::string> translation_extension_names();

enum class Direction { source_to_target, target_to_source };

std::string to_string(Direction direction);
Direction parse_direction(const std::string& text);

struct GeneratorSpec {
  int base_channels = 16;
  int residual_blocks = 2;
  int downsample_steps = 2;
  /// Zero the output head so the generator starts as the exact identity map.
  bool identity_init = true;
};

struct DiscriminatorSpec {
  int base_channels = 16;
  int layers = 3;
  bool patch_output = true;
};

void to_json(nlohmann::json& j, const GeneratorSpec& s);
void from_json(const nlohmann::json& j, GeneratorSpec& s);
void to_json(nlohmann::json& j, const DiscriminatorSpec& s);
void from_json(const nlohmann::json& j, DiscriminatorSpec& s);

/// ResNet-style encoder / residual / decoder generator with instance normalisation.
///
/// The head predicts a residual r in (-1, 1) and the output is x + r (1 - x) for r > 0 and
/// x (1 + r) otherwise: bounded in [0, 1] for inputs in [0, 1], and exactly x when r = 0.
class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(GeneratorSpec spec);

  torch::Tensor forward(const torch::Tensor& x);
  /// Activations after the stem and after each downsampling step (for PatchNCE).
  std::vector<torch::Tensor> encode_layers(const torch::Tensor& x);

  const GeneratorSpec& spec() const noexcept { return spec_; }
  std::vector<int> encoder_channels() const;
  /// Zeroes the output head, which makes the generator the identity map.
  void zero_head();

 private:
  GeneratorSpec spec_;
  torch::nn::Sequential stem_{nullptr};
  std::vector<torch::nn::Sequential> down_;
  torch::nn::Sequential body_{nullptr};
  torch::nn::Sequential up_{nullptr};
  torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(Generator);

/// PatchGAN critic producing a map of real/fake scores.
class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(DiscriminatorSpec spec);
  torch::Tensor forward(const torch::Tensor& x);
  const DiscriminatorSpec& spec() const noexcept { return spec_; }

 private:
  DiscriminatorSpec spec_;
  torch::nn::Sequential net_{nullptr};
};
TORCH_MODULE(Discriminator);

/// Two-layer MLP heads projecting sampled encoder features for PatchNCE, one per layer.
class PatchProjectorImpl : public torch::nn::Module {
 public:
  PatchProjectorImpl(const std::vector<int>& in_channels, int out_dim);
  torch::Tensor forward(std::size_t layer, const torch::Tensor& vectors);
  std::size_t layer_count() const noexcept { return heads_.size(); }

 private:
  std::vector<torch::nn::Sequential> heads_;
};
TORCH_MODULE(PatchProjector);

struct TrainConfig {
  TranslationAlgorithm algorithm = TranslationAlgorithm::cyclegan;
  int epochs = 30;
  int batch_size = 1;
  int image_size = 32;
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double cycle_weight = 10.0;
  double identity_weight = 5.0;
  double nce_weight = 1.0;
  double temperature = 0.07;
  int nce_patches = 64;
  int pool_size = 50;
  std::optional<std::uint64_t> seed;
  GeneratorSpec generator;
  DiscriminatorSpec discriminator;

  /// Preset defaults for the algorithm (nce_weight 10 and no identity NCE for fastcut).
  static TrainConfig preset(TranslationAlgorithm algorithm);
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
/// Throws ArgumentError for missing seed, negative weights or non-positive sizes.
void validate(const TrainConfig& config);

/// Per-epoch means of the training losses.
struct EpochLosses {
  int epoch = 0;
  double generator_total = 0.0;
  double adversarial = 0.0;
  double cycle = 0.0;
  double identity = 0.0;
  double nce = 0.0;
  double discriminator = 0.0;
};

struct StepLosses {
  std::int64_t step = 0;
  double generator_total = 0.0;
  double adversarial = 0.0;
  double cycle = 0.0;
  double identity = 0.0;
  double nce = 0.0;
  double discriminator = 0.0;
};

/// Trained translation networks. CycleGAN holds both directions; CUT and FastCUT hold the
/// target-to-source generator, the source critic and the projection heads.
struct TranslationModel {
  TranslationAlgorithm algorithm = TranslationAlgorithm::cyclegan;
  TrainConfig config;
  Generator g_source_to_target{nullptr};
  Generator g_target_to_source{nullptr};
  Discriminator d_source{nullptr};
  Discriminator d_target{nullptr};
  PatchProjector projector{nullptr};
  std::int64_t step = 0;
  std::vector<EpochLosses> epochs;
  std::vector<StepLosses> steps;

  bool supports(Direction direction) const;
  Generator generator_for(Direction direction) const;
};

/// Fresh, seeded networks for `config`.
TranslationModel make_translation_model(const TrainConfig& config);

struct TrainOptions {
  /// One checkpoint per epoch (epoch_0001.ckpt, ...) when set.
  std::optional<std::filesystem::path> checkpoint_dir;
  std::function<void(const EpochLosses&)> on_epoch;
};

TranslationModel train_translation(const DomainPair& pair, const TrainConfig& config,
                                   const TrainOptions& options = {});
/// In-memory variant: images are [3, S, S] tensors at the configured image size.
TranslationModel train_translation(const std::vector<torch::Tensor>& source,
                                   const std::vector<torch::Tensor>& target, const TrainConfig& config,
                                   const TrainOptions& options = {});

/// Applies one generator; resizes into the model's image size and back.
ImageRaster translate_image(const TranslationModel& model, const ImageRaster& image, Direction direction);

/// Translates every image in `input_dir` into `output_dir` under the same file names.
std::size_t translate_images(const TranslationModel& model, const std::filesystem::path& input_dir,
                             Direction direction, const std::filesystem::path& output_dir);

void save_translation_model(const TranslationModel& model, const std::filesystem::path& path);
/// CompatibilityError when the file's algorithm differs from `expected`.
TranslationModel load_translation_model(const std::filesystem::path& path,
                                        std::optional<TranslationAlgorithm> expected = std::nullopt);

// Loss terms.

using ImageMap = std::function<torch::Tensor(const torch::Tensor&)>;

/// mean |x - G_Y(G_X(x))|, plus mean |y - G_X(G_Y(y))| when `y` is defined.
torch::Tensor cycle_consistency_loss(const torch::Tensor& x, const ImageMap& g_x, const ImageMap& g_y,
                                     const torch::Tensor& y = {});

enum class RealFake { real, fake };
/// Least-squares GAN loss: mean (d - label)^2 with real = 1, fake = 0.
torch::Tensor adversarial_loss(const torch::Tensor& d_out, RealFake label);

/// Queries [P, D], positives [P, D], negatives [P, K, D]. Vectors are L2-normalised internally.
torch::Tensor patch_nce_loss(const torch::Tensor& query, const torch::Tensor& positive,
                             const torch::Tensor& negatives, double temperature);
/// PatchNCE with in-batch negatives: for query i every positive j != i is a negative.
torch::Tensor patch_nce_loss(const torch::Tensor& query, const torch::Tensor& positive, double temperature);

/// Fixed-capacity history of generated images for discriminator updates.
class ImagePool {
 public:
  ImagePool(int capacity, std::uint64_t seed);
  /// Returns a batch mixing new fakes with stored ones (each with probability 1/2 once full).
  torch::Tensor query(const torch::Tensor& images);

 private:
  int capacity_;
  std::uint64_t state_;
  std::vector<torch::Tensor> images_;
  double uniform();
};

}  // namespace dshift
