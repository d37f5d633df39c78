#include <cmath>
#include <random>

#include <torch/torch.h>

#include "dshift/errors.hpp"
#include "dshift/feature_stats.hpp"
#include "dshift/style_transfer.hpp"

namespace dshift {

namespace {

constexpr int kScales = 3;
constexpr int kIterationsPerScale = 200;
constexpr double kContentWeight = 1.0;
constexpr double kLearningRate = 0.01;
constexpr int kSamples = 1024;

struct ScaleGeometry {
  int height;
  int width;
};

ScaleGeometry geometry_for(int height, int width, int scale, int scales) {
  const int factor = 1 << (scales - 1 - scale);
  return {std::max(1, static_cast<int>(std::lround(static_cast<double>(height) / factor))),
          std::max(1, static_cast<int>(std::lround(static_cast<double>(width) / factor)))};
}

// Style image rescaled so its long side matches the current output's long side.
ScaleGeometry style_geometry(const ImageRaster& style, const ScaleGeometry& out) {
  const double target_long = std::max(out.height, out.width);
  const double ratio = target_long / std::max(style.height(), style.width());
  return {std::max(1, static_cast<int>(std::lround(style.height() * ratio))),
          std::max(1, static_cast<int>(std::lround(style.width() * ratio)))};
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = seed ^ (a * 0x9E3779B97F4A7C15ULL) ^ (b * 0xC2B2AE3D27D4EB4FULL);
  x ^= x >> 31;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 29;
  return x;
}

struct Samples {
  std::vector<PixelPosition> output;
  std::vector<PixelPosition> style;
};

// Positions are drawn on the output grid and mapped to the style grid through normalised
// coordinates, so equal-sized images share identical sample points.
Samples draw_samples(const ScaleGeometry& out, const ScaleGeometry& sty, int count, std::uint64_t seed) {
  const std::int64_t n = static_cast<std::int64_t>(out.height) * out.width;
  const auto idx = sample_positions(n, std::min<std::int64_t>(count, n), seed);
  Samples s;
  s.output.reserve(idx.size());
  s.style.reserve(idx.size());
  for (auto i : idx) {
    const double r = static_cast<double>(i / out.width);
    const double c = static_cast<double>(i % out.width);
    s.output.push_back({r, c});
    const double sr = std::clamp((r + 0.5) * sty.height / out.height - 0.5, 0.0, sty.height - 1.0);
    const double sc = std::clamp((c + 0.5) * sty.width / out.width - 0.5, 0.0, sty.width - 1.0);
    s.style.push_back({sr, sc});
  }
  return s;
}

// Column-normalised cosine self-distance matrix.
torch::Tensor normalized_self_similarity(const torch::Tensor& vectors) {
  const torch::Tensor d = self_similarity(vectors);
  return d / d.sum(0, true).clamp_min(1e-12);
}

struct ObjectiveParts {
  torch::Tensor total;
  torch::Tensor content;
  torch::Tensor style;
};

struct ScaleTargets {
  FeaturePyramid content;
  FeaturePyramid style;
  torch::Tensor content_image;  // [3, h, w]
  torch::Tensor style_image;    // [3, hs, ws]
};

torch::Tensor color_samples(const torch::Tensor& image, const std::vector<PixelPosition>& positions) {
  FeaturePyramid as_pyramid;
  as_pyramid.layer_ids = {0};
  as_pyramid.maps = {image};
  as_pyramid.input_height = static_cast<int>(image.size(1));
  as_pyramid.input_width = static_cast<int>(image.size(2));
  const int layer = 0;
  return hypercolumn_sample(as_pyramid, positions, std::span<const int>(&layer, 1));
}

ObjectiveParts objective(const FeaturePyramid& out_features, const torch::Tensor& out_image,
                         const ScaleTargets& targets, const Samples& samples, std::span<const int> layers,
                         double content_weight) {
  const torch::Tensor out_h = hypercolumn_sample(out_features, samples.output, layers);
  const torch::Tensor content_h = hypercolumn_sample(targets.content, samples.output, layers);
  const torch::Tensor style_h = hypercolumn_sample(targets.style, samples.style, layers);

  const torch::Tensor palette = remd_loss(color_samples(out_image, samples.output),
                                          color_samples(targets.style_image, samples.style), GroundCost::euclidean);
  const torch::Tensor style = remd_loss(out_h, style_h) + moment_matching_loss(out_h, style_h) + palette;
  const torch::Tensor content =
      (normalized_self_similarity(out_h) - normalized_self_similarity(content_h)).abs().mean();
  return {style + content_weight * content, content, style};
}

}  // namespace

TransferResult strotss_transfer(const StyleTransferRequest& request, const FeatureExtractor& extractor) {
  validate_request(request);
  const auto& p = request.params;
  const int scales = p.scales.value_or(kScales);
  const int iterations = p.iterations.value_or(kIterationsPerScale);
  const double initial_content_weight = p.content_weight.value_or(kContentWeight);
  const double learning_rate = p.learning_rate.value_or(kLearningRate);
  const int sample_count = p.samples.value_or(kSamples);
  const std::vector<int> layers = p.style_layers.value_or(extractor.layer_ids());
  for (int l : layers) {
    const auto& available = extractor.layer_ids();
    if (std::find(available.begin(), available.end(), l) == available.end())
      throw ArgumentError("layer " + std::to_string(l) + " is not tapped by the feature extractor");
  }

  const ImageRaster content = to_three_channel(request.content_image);
  const ImageRaster style = to_three_channel(request.style_image);

  TransferResult result{content, {}, {}, "strotss", {}, {}};
  torch::Tensor image;  // carried from scale to scale

  for (int s = 0; s < scales; ++s) {
    const ScaleGeometry geo = geometry_for(content.height(), content.width(), s, scales);
    const ScaleGeometry sty_geo = style_geometry(style, geo);
    const double content_weight = initial_content_weight / std::pow(2.0, s);

    ScaleTargets targets;
    {
      torch::NoGradGuard no_grad;
      targets.content_image = to_tensor(resize(content, geo.height, geo.width));
      targets.style_image = to_tensor(resize(style, sty_geo.height, sty_geo.width));
      targets.content = extractor.extract(targets.content_image);
      targets.style = extractor.extract(targets.style_image);
    }

    if (!image.defined()) {
      image = targets.content_image.clone();
    } else {
      torch::NoGradGuard no_grad;
      image = to_tensor(resize(raster_from_tensor(image), geo.height, geo.width));
    }
    image.requires_grad_(true);
    torch::optim::Adam optimizer({image}, torch::optim::AdamOptions(learning_rate));

    // Fixed evaluation sample for the per-scale summary.
    const Samples eval_samples = draw_samples(geo, sty_geo, sample_count, mix_seed(p.seed, s, ~0ULL));
    auto evaluate = [&] {
      torch::NoGradGuard no_grad;
      const FeaturePyramid f = extractor.extract(image);
      return objective(f, image, targets, eval_samples, layers, content_weight).total.item<double>();
    };
    ScaleSummary summary{s, geo.height, geo.width, evaluate(), 0.0};

    for (int it = 0; it < iterations; ++it) {
      optimizer.zero_grad();
      const Samples samples = draw_samples(geo, sty_geo, sample_count, mix_seed(p.seed, s, it));
      const FeaturePyramid features = extractor.extract(image);
      const ObjectiveParts parts = objective(features, image, targets, samples, layers, content_weight);
      const double total = parts.total.item<double>();
      if (!std::isfinite(total))
        throw DivergenceError("strotss: non-finite objective at scale " + std::to_string(s) + ", iteration " +
                                  std::to_string(it),
                              it, s);
      result.loss_trace.push_back({s, it, total, parts.content.item<double>(), parts.style.item<double>()});
      parts.total.backward();
      optimizer.step();
      torch::NoGradGuard no_grad;
      image.clamp_(0.0, 1.0);
    }
    summary.final_objective = evaluate();
    if (!std::isfinite(summary.final_objective))
      throw DivergenceError("strotss: non-finite objective at the end of scale " + std::to_string(s), iterations, s);
    result.scales.push_back(summary);
    image = image.detach();
  }

  ImageRaster output = raster_from_tensor(image, content.source_bit_depth(), content.source_format());
  result.output_image = resize(output, content.height(), content.width());
  result.hyperparams = {{"scales", scales},
                        {"iterations", iterations},
                        {"content_weight", initial_content_weight},
                        {"content_weight_schedule", "halved per finer scale"},
                        {"learning_rate", learning_rate},
                        {"samples", sample_count},
                        {"layers", layers},
                        {"optimizer", "adam"},
                        {"seed", p.seed}};
  result.provenance["backbone"] = extractor.describe();
  return result;
}

}  // namespace dshift
