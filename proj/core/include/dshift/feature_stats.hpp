#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <torch/types.h>

#include "dshift/features.hpp"

namespace dshift {

/// [C, H, W] (or [C, N]) -> [N, C] matrix of per-position feature vectors.
torch::Tensor position_vectors(const torch::Tensor& map);

/// G = F F^T / N for a map flattened to [C, N].
torch::Tensor gram_matrix(const torch::Tensor& map);

/// Pairwise 1 - cos(a_i, b_j) for rows of A [n, D] and B [m, D]. A zero row is at
/// distance 1 from non-zero rows and 0 from other zero rows.
torch::Tensor cosine_distance_matrix(const torch::Tensor& a, const torch::Tensor& b);

/// `count` distinct indices in [0, n), drawn from a fixed seed.
std::vector<std::int64_t> sample_positions(std::int64_t n, std::int64_t count, std::uint64_t seed);

/// Cosine self-distance matrix of `count` positions of `map` sampled with `seed`.
torch::Tensor self_similarity(const torch::Tensor& map, std::int64_t count, std::uint64_t seed);
/// Same matrix for an explicit [D, C] set of vectors.
torch::Tensor self_similarity(const torch::Tensor& vectors);

struct PixelPosition {
  double row;
  double col;
};

/// Rows are concatenated per-layer features bilinearly sampled at image-space positions.
/// Differentiable with respect to the pyramid maps.
torch::Tensor hypercolumn_sample(const FeaturePyramid& pyramid, std::span<const PixelPosition> positions,
                                 std::span<const int> layers);

}  // namespace dshift
