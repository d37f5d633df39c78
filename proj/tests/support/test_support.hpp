#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "dshift/raster.hpp"
#include "oracles.hpp"

namespace dshift::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Uniform [lo, hi) float64 tensor drawn from `rng` (independent of torch's generator).
torch::Tensor random_tensor(std::mt19937_64& rng, std::vector<std::int64_t> shape, double lo = -1.0, double hi = 1.0);

/// Row-major copy of any tensor as doubles.
std::vector<double> values_of(const torch::Tensor& t);

double scalar_of(const torch::Tensor& t);

/// [R, K] tensor as R rows.
oracle::Matrix matrix_of(const torch::Tensor& t);
/// [C, H, W] map as C rows of H*W positions.
oracle::Matrix channels_of(const torch::Tensor& map);

/// Random raster with values in [0, 1].
ImageRaster random_raster(std::mt19937_64& rng, int height, int width, int channels = 3);

/// Smooth synthetic image: sum of low-frequency sinusoids, in [0, 1].
ImageRaster smooth_raster(int height, int width, int channels, double phase);

/// Writes a small image/mask dataset (dark disc on light background) and returns its root.
/// Layout: root/images/*.png, root/masks/*.png.
std::filesystem::path write_disc_dataset(const std::filesystem::path& root, int count, int size,
                                         std::uint64_t seed, bool with_masks = true);

}  // namespace dshift::testing
