#include "dshift/style_transfer.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include <torch/torch.h>

#include "dshift/errors.hpp"
#include "dshift/feature_stats.hpp"

namespace dshift {

namespace {

constexpr int kNstIterations = 300;
constexpr double kNstContentWeight = 1.0;
constexpr double kNstStyleWeight = 1e3;
constexpr double kNstLearningRate = 0.02;
const std::vector<int> kNstContentLayers = {3};

template <typename T>
void put_optional(nlohmann::json& j, const char* key, const std::optional<T>& value) {
  if (value) j[key] = *value;
}

template <typename T>
void get_optional(const nlohmann::json& j, const char* key, std::optional<T>& value) {
  if (j.contains(key) && !j.at(key).is_null()) value = j.at(key).get<T>();
}

std::vector<int> resolve_layers(const std::optional<std::vector<int>>& requested, const std::vector<int>& fallback,
                                const FeatureExtractor& extractor) {
  std::vector<int> layers = requested.value_or(fallback);
  for (int l : layers) {
    const auto& available = extractor.layer_ids();
    if (std::find(available.begin(), available.end(), l) == available.end())
      throw ArgumentError("layer " + std::to_string(l) + " is not tapped by the feature extractor");
  }
  if (layers.empty()) throw ArgumentError("no layers selected");
  return layers;
}

}  // namespace

void to_json(nlohmann::json& j, const TransferParams& p) {
  j = nlohmann::json::object();
  put_optional(j, "iterations", p.iterations);
  put_optional(j, "content_weight", p.content_weight);
  put_optional(j, "style_weight", p.style_weight);
  put_optional(j, "learning_rate", p.learning_rate);
  put_optional(j, "scales", p.scales);
  put_optional(j, "samples", p.samples);
  put_optional(j, "content_layers", p.content_layers);
  put_optional(j, "style_layers", p.style_layers);
  j["seed"] = p.seed;
}

void from_json(const nlohmann::json& j, TransferParams& p) {
  get_optional(j, "iterations", p.iterations);
  get_optional(j, "content_weight", p.content_weight);
  get_optional(j, "style_weight", p.style_weight);
  get_optional(j, "learning_rate", p.learning_rate);
  get_optional(j, "scales", p.scales);
  get_optional(j, "samples", p.samples);
  get_optional(j, "content_layers", p.content_layers);
  get_optional(j, "style_layers", p.style_layers);
  p.seed = j.value("seed", std::uint64_t{0});
}

void validate_request(const StyleTransferRequest& request) {
  const auto& p = request.params;
  if (p.iterations && *p.iterations < 0) throw ArgumentError("iterations must be >= 0");
  if (p.content_weight && !(*p.content_weight >= 0.0)) throw ArgumentError("content_weight must be >= 0");
  if (p.style_weight && !(*p.style_weight >= 0.0)) throw ArgumentError("style_weight must be >= 0");
  if (p.learning_rate && !(*p.learning_rate > 0.0)) throw ArgumentError("learning_rate must be > 0");
  if (p.scales && *p.scales < 1) throw ArgumentError("scales must be >= 1");
  if (p.samples && *p.samples < 1) throw ArgumentError("samples must be >= 1");
}

std::string loss_trace_csv(std::span<const LossRecord> trace) {
  std::string out = "iteration,total,content,style\n";
  char line[160];
  int counter = 0;
  for (const auto& r : trace) {
    std::snprintf(line, sizeof line, "%d,%.9g,%.9g,%.9g\n", counter++, r.total, r.content, r.style);
    out += line;
  }
  return out;
}

void AlgorithmRegistry::register_algorithm(const std::string& name, TransferProcedure procedure) {
  if (frozen_) throw StateError("algorithm registry is frozen; cannot register '" + name + "'");
  if (name.empty()) throw ArgumentError("algorithm name must not be empty");
  if (entries_.count(name) != 0) throw ConflictError("algorithm '" + name + "' is already registered");
  entries_.emplace(name, std::move(procedure));
}

std::vector<std::string> AlgorithmRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

const TransferProcedure& AlgorithmRegistry::at(const std::string& name) const {
  const auto it = entries_.find(name);
  if (it == entries_.end()) {
    std::string message = "unknown algorithm '" + name + "'; available:";
    for (const auto& n : names()) message += " " + n;
    throw UnknownAlgorithmError(message);
  }
  return it->second;
}

AlgorithmRegistry make_default_registry(std::shared_ptr<const FeatureExtractor> extractor) {
  AlgorithmRegistry registry;
  registry.register_algorithm("nst", [extractor](const StyleTransferRequest& r) { return nst_transfer(r, *extractor); });
  registry.register_algorithm("strotss",
                              [extractor](const StyleTransferRequest& r) { return strotss_transfer(r, *extractor); });
  registry.register_algorithm("dia", [](const StyleTransferRequest&) -> TransferResult {
    throw ExtensionPointError("deep image analogy ('dia') is not implemented; extension point");
  });
  return registry;
}

TransferResult run_transfer(const AlgorithmRegistry& registry, const StyleTransferRequest& request) {
  const TransferProcedure& procedure = registry.at(request.algorithm);
  validate_request(request);
  TransferResult result = procedure(request);
  result.algorithm = request.algorithm;
  return result;
}

TransferResult nst_transfer(const StyleTransferRequest& request, const FeatureExtractor& extractor) {
  validate_request(request);
  const auto& p = request.params;
  const int iterations = p.iterations.value_or(kNstIterations);
  const double content_weight = p.content_weight.value_or(kNstContentWeight);
  const double style_weight = p.style_weight.value_or(kNstStyleWeight);
  const double learning_rate = p.learning_rate.value_or(kNstLearningRate);
  const std::vector<int> content_layers = resolve_layers(p.content_layers, kNstContentLayers, extractor);
  const std::vector<int> style_layers = resolve_layers(p.style_layers, extractor.layer_ids(), extractor);

  const ImageRaster content = to_three_channel(request.content_image);
  const ImageRaster style = to_three_channel(request.style_image);

  FeaturePyramid content_features;
  std::vector<torch::Tensor> style_grams;
  {
    torch::NoGradGuard no_grad;
    content_features = extractor.extract(to_tensor(content));
    const FeaturePyramid style_features = extractor.extract(to_tensor(style));
    for (int l : style_layers) style_grams.push_back(gram_matrix(style_features.at(l)));
  }

  torch::Tensor image = to_tensor(content).requires_grad_(true);
  torch::optim::Adam optimizer({image}, torch::optim::AdamOptions(learning_rate));

  TransferResult result{content, {}, {}, "nst", {}, {}};
  double best_total = std::numeric_limits<double>::infinity();
  torch::Tensor best = image.detach().clone();

  for (int it = 0; it <= iterations; ++it) {
    optimizer.zero_grad();
    const FeaturePyramid features = extractor.extract(image);
    const torch::Tensor c_loss = content_loss(features, content_features, content_layers);
    const torch::Tensor s_loss = style_loss_from_grams(features, style_grams, style_layers);
    const torch::Tensor total = content_weight * c_loss + style_weight * s_loss;

    const double total_value = total.item<double>();
    if (!std::isfinite(total_value))
      throw DivergenceError("nst: non-finite loss at iteration " + std::to_string(it), it);
    result.loss_trace.push_back({0, it, total_value, c_loss.item<double>(), s_loss.item<double>()});
    if (total_value < best_total) {
      best_total = total_value;
      best = image.detach().clone();
    }
    if (it == iterations) break;

    total.backward();
    optimizer.step();
    torch::NoGradGuard no_grad;
    image.clamp_(0.0, 1.0);
  }

  // The best iterate is returned, so the final objective never exceeds the initial one.
  result.output_image = raster_from_tensor(best, content.source_bit_depth(), content.source_format());
  result.scales.push_back({0, content.height(), content.width(), result.loss_trace.front().total, best_total});
  result.hyperparams = {{"iterations", iterations},
                        {"content_weight", content_weight},
                        {"style_weight", style_weight},
                        {"learning_rate", learning_rate},
                        {"content_layers", content_layers},
                        {"style_layers", style_layers},
                        {"optimizer", "adam"},
                        {"seed", p.seed}};
  result.provenance["backbone"] = extractor.describe();
  return result;
}

std::filesystem::path pick_style_image(const DatasetManifest& manifest, std::uint64_t seed) {
  const auto images = list_images(manifest.image_dir);
  if (images.empty()) throw ArgumentError("no images to pick a style from in " + manifest.image_dir.string());
  std::mt19937_64 rng(seed);
  return images[static_cast<std::size_t>(rng() % images.size())];
}

}  // namespace dshift
