#include <torch/torch.h>

#include "dshift/errors.hpp"
#include "dshift/feature_stats.hpp"
#include "dshift/style_transfer.hpp"

namespace dshift {

namespace {

void require_layers(std::span<const int> layers, const char* what) {
  if (layers.empty()) throw ArgumentError(std::string(what) + ": no layers selected");
}

}  // namespace

torch::Tensor content_loss(const FeaturePyramid& output, const FeaturePyramid& content,
                           std::span<const int> layers) {
  require_layers(layers, "content_loss");
  torch::Tensor total;
  for (int layer : layers) {
    const torch::Tensor& a = output.at(layer);
    const torch::Tensor& b = content.at(layer);
    if (a.sizes() != b.sizes())
      throw ContractError("content_loss: feature shapes differ at layer " + std::to_string(layer));
    const torch::Tensor mse = (a - b).pow(2).mean();
    total = total.defined() ? total + mse : mse;
  }
  return total / static_cast<double>(layers.size());
}

torch::Tensor style_loss_from_grams(const FeaturePyramid& output, std::span<const torch::Tensor> style_grams,
                                    std::span<const int> layers) {
  require_layers(layers, "style_loss");
  if (style_grams.size() != layers.size()) throw ContractError("style_loss: one Gram matrix per layer required");
  torch::Tensor total;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const torch::Tensor& map = output.at(layers[i]);
    if (map.size(0) != style_grams[i].size(0))
      throw ContractError("style_loss: channel counts differ at layer " + std::to_string(layers[i]));
    const torch::Tensor mse = (gram_matrix(map) - style_grams[i]).pow(2).mean();
    total = total.defined() ? total + mse : mse;
  }
  return total / static_cast<double>(layers.size());
}

torch::Tensor style_loss(const FeaturePyramid& output, const FeaturePyramid& style,
                         std::span<const int> layers) {
  std::vector<torch::Tensor> grams;
  grams.reserve(layers.size());
  for (int layer : layers) grams.push_back(gram_matrix(style.at(layer)));
  return style_loss_from_grams(output, grams, layers);
}

torch::Tensor remd_loss(const torch::Tensor& a, const torch::Tensor& b, GroundCost cost) {
  if (a.dim() != 2 || b.dim() != 2) throw ContractError("remd_loss expects [n, D] sets");
  if (a.size(0) == 0 || b.size(0) == 0) throw ArgumentError("remd_loss: empty feature set");
  if (a.size(1) != b.size(1)) throw ContractError("remd_loss: vector dimensions differ");
  torch::Tensor c;
  if (cost == GroundCost::cosine) {
    c = cosine_distance_matrix(a, b);
  } else {
    // Direct differences (no matrix-product shortcut) keep identical rows at exactly zero.
    c = torch::cdist(a, b, 2.0, /*compute_mode=*/2);
  }
  const torch::Tensor forward = std::get<0>(c.min(1)).mean();
  const torch::Tensor backward = std::get<0>(c.min(0)).mean();
  return torch::max(forward, backward);
}

torch::Tensor moment_matching_loss(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.dim() != 2 || b.dim() != 2) throw ContractError("moment_matching_loss expects [n, D] sets");
  if (a.size(0) == 0 || b.size(0) == 0) throw ArgumentError("moment_matching_loss: empty feature set");
  if (a.size(1) != b.size(1)) throw ContractError("moment_matching_loss: vector dimensions differ");
  const torch::Tensor mean_a = a.mean(0, true);
  const torch::Tensor mean_b = b.mean(0, true);
  const torch::Tensor ca = a - mean_a;
  const torch::Tensor cb = b - mean_b;
  const torch::Tensor cov_a = ca.t().mm(ca) / static_cast<double>(a.size(0));
  const torch::Tensor cov_b = cb.t().mm(cb) / static_cast<double>(b.size(0));
  return (mean_a - mean_b).abs().mean() + (cov_a - cov_b).abs().mean();
}

}  // namespace dshift
