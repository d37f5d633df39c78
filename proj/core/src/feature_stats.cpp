#include "dshift/feature_stats.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include <torch/torch.h>

#include "dshift/errors.hpp"

namespace dshift {

namespace {

torch::Tensor channels_by_positions(const torch::Tensor& map) {
  if (map.dim() == 3) return map.reshape({map.size(0), map.size(1) * map.size(2)});
  if (map.dim() == 2) return map;
  throw ContractError("feature map must be [C, H, W] or [C, N]");
}

}  // namespace

torch::Tensor position_vectors(const torch::Tensor& map) { return channels_by_positions(map).t(); }

torch::Tensor gram_matrix(const torch::Tensor& map) {
  const torch::Tensor f = channels_by_positions(map);
  if (f.size(0) == 0 || f.size(1) == 0) throw ArgumentError("gram_matrix: empty feature map");
  return f.mm(f.t()) / static_cast<double>(f.size(1));
}

torch::Tensor cosine_distance_matrix(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.dim() != 2 || b.dim() != 2) throw ContractError("cosine distance expects [n, D] matrices");
  if (a.size(1) != b.size(1)) throw ContractError("cosine distance: vector dimensions differ");
  const torch::Tensor norm_a = a.norm(2, 1, true);
  const torch::Tensor norm_b = b.norm(2, 1, true);
  const torch::Tensor unit_a = a / norm_a.clamp_min(1e-12);
  const torch::Tensor unit_b = b / norm_b.clamp_min(1e-12);
  torch::Tensor dist = (1.0 - unit_a.mm(unit_b.t())).clamp(0.0, 2.0);
  const torch::Tensor both_zero = (norm_a == 0).logical_and((norm_b == 0).t());
  return dist.masked_fill(both_zero, 0.0);
}

std::vector<std::int64_t> sample_positions(std::int64_t n, std::int64_t count, std::uint64_t seed) {
  if (count < 1) throw ArgumentError("sample count must be positive");
  if (count > n) throw ArgumentError("sample count exceeds the number of positions");
  std::vector<std::int64_t> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), 0);
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates; std::shuffle's exact sequence is implementation-defined.
  for (std::int64_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::int64_t> pick(i, n - 1);
    std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(pick(rng))]);
  }
  all.resize(static_cast<std::size_t>(count));
  return all;
}

torch::Tensor self_similarity(const torch::Tensor& vectors) {
  if (vectors.dim() != 2 || vectors.size(0) == 0) throw ArgumentError("self_similarity: empty vector set");
  torch::Tensor d = cosine_distance_matrix(vectors, vectors);
  d = 0.5 * (d + d.t());
  const auto eye = torch::eye(d.size(0), d.options().dtype(torch::kBool));
  return d.masked_fill(eye, 0.0);
}

torch::Tensor self_similarity(const torch::Tensor& map, std::int64_t count, std::uint64_t seed) {
  const torch::Tensor vectors = position_vectors(map);
  const auto idx = sample_positions(vectors.size(0), count, seed);
  const torch::Tensor index = torch::tensor(idx, torch::kInt64);
  return self_similarity(vectors.index_select(0, index));
}

torch::Tensor hypercolumn_sample(const FeaturePyramid& pyramid, std::span<const PixelPosition> positions,
                                 std::span<const int> layers) {
  if (positions.empty()) throw ArgumentError("hypercolumn_sample: no positions");
  if (layers.empty()) throw ArgumentError("hypercolumn_sample: no layers");
  const double height = pyramid.input_height;
  const double width = pyramid.input_width;
  for (const auto& p : positions) {
    if (!(p.row >= 0.0 && p.row <= height - 1.0 && p.col >= 0.0 && p.col <= width - 1.0))
      throw ArgumentError("hypercolumn_sample: position (" + std::to_string(p.row) + ", " +
                          std::to_string(p.col) + ") outside the image");
  }

  const auto count = static_cast<std::int64_t>(positions.size());
  std::vector<torch::Tensor> columns;
  for (int layer : layers) {
    if (!pyramid.has(layer)) throw ArgumentError("hypercolumn_sample: layer not in pyramid");
    const torch::Tensor& map = pyramid.at(layer);
    const std::int64_t lh = map.size(1);
    const std::int64_t lw = map.size(2);
    std::vector<std::int64_t> i00(count), i01(count), i10(count), i11(count);
    std::vector<double> wy(count), wx(count);
    for (std::int64_t i = 0; i < count; ++i) {
      const auto& p = positions[static_cast<std::size_t>(i)];
      const double y = std::clamp((p.row + 0.5) * (static_cast<double>(lh) / height) - 0.5, 0.0,
                                  static_cast<double>(lh - 1));
      const double x = std::clamp((p.col + 0.5) * (static_cast<double>(lw) / width) - 0.5, 0.0,
                                  static_cast<double>(lw - 1));
      const auto y0 = static_cast<std::int64_t>(std::floor(y));
      const auto x0 = static_cast<std::int64_t>(std::floor(x));
      const std::int64_t y1 = std::min(y0 + 1, lh - 1);
      const std::int64_t x1 = std::min(x0 + 1, lw - 1);
      wy[i] = y - static_cast<double>(y0);
      wx[i] = x - static_cast<double>(x0);
      i00[i] = y0 * lw + x0;
      i01[i] = y0 * lw + x1;
      i10[i] = y1 * lw + x0;
      i11[i] = y1 * lw + x1;
    }
    const torch::Tensor flat = map.reshape({map.size(0), lh * lw});
    auto gather = [&](const std::vector<std::int64_t>& idx) {
      return flat.index_select(1, torch::tensor(idx, torch::kInt64));
    };
    const auto opts = map.options().requires_grad(false);
    const torch::Tensor ty = torch::tensor(wy, torch::kFloat64).to(opts.dtype()).unsqueeze(0);
    const torch::Tensor tx = torch::tensor(wx, torch::kFloat64).to(opts.dtype()).unsqueeze(0);
    const torch::Tensor top = gather(i00) * (1.0 - tx) + gather(i01) * tx;
    const torch::Tensor bottom = gather(i10) * (1.0 - tx) + gather(i11) * tx;
    columns.push_back((top * (1.0 - ty) + bottom * ty).t());
  }
  return torch::cat(columns, 1);
}

}  // namespace dshift
