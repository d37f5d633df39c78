#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <torch/types.h>

namespace dshift {

enum class ImageFormat { png, tiff, jpg };

std::string_view to_string(ImageFormat format);
/// Guesses the format from a file extension; throws FormatError for anything else.
ImageFormat format_from_path(const std::filesystem::path& path);
bool is_supported_image_path(const std::filesystem::path& path);

/// Normalised floating-point image, channel-major (C x H x W), values in [0, 1].
///
/// Rasters are immutable once constructed; every transform returns a new one.
class ImageRaster {
 public:
  ImageRaster(int height, int width, int channels, std::vector<float> values,
              int source_bit_depth = 8, ImageFormat source_format = ImageFormat::png);

  /// Constant-valued raster.
  static ImageRaster filled(int height, int width, int channels, float value);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }
  int source_bit_depth() const noexcept { return bit_depth_; }
  ImageFormat source_format() const noexcept { return format_; }

  std::span<const float> values() const noexcept { return values_; }
  std::span<const float> channel(int c) const;
  float at(int c, int y, int x) const { return values_[index(c, y, x)]; }

  double mean() const;

  friend bool operator==(const ImageRaster&, const ImageRaster&) = default;

 private:
  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }

  int height_;
  int width_;
  int channels_;
  int bit_depth_;
  ImageFormat format_;
  std::vector<float> values_;
};

/// Binary mask; 1 = foreground.
class SegmentationMask {
 public:
  SegmentationMask(int height, int width, std::vector<std::uint8_t> values);
  static SegmentationMask empty(int height, int width);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::span<const std::uint8_t> values() const noexcept { return values_; }
  std::uint8_t at(int y, int x) const { return values_[static_cast<std::size_t>(y) * width_ + x]; }
  std::size_t foreground_count() const;
  double foreground_fraction() const;

  friend bool operator==(const SegmentationMask&, const SegmentationMask&) = default;

 private:
  int height_;
  int width_;
  std::vector<std::uint8_t> values_;
};

struct LoadOptions {
  /// Stretch the 1st..99th percentile to [0, 1] instead of dividing by the full range.
  bool percentile_stretch = false;
};

ImageRaster load_image(const std::filesystem::path& path, const LoadOptions& options = {});

/// Writes with the given bit depth (8 or 16); JPG only supports 8.
void save_image(const ImageRaster& image, const std::filesystem::path& path, int bit_depth = 8);

/// Loads a single-channel mask and binarises at 0.5 of the full range.
SegmentationMask load_mask(const std::filesystem::path& path);
/// Writes 0 / 255 single-channel PNG.
void save_mask(const SegmentationMask& mask, const std::filesystem::path& path);

ImageRaster to_three_channel(const ImageRaster& image);

enum class ResizeMode { bilinear, nearest };

ImageRaster resize(const ImageRaster& image, int height, int width,
                   ResizeMode mode = ResizeMode::bilinear);
/// Masks always use nearest-neighbour sampling so they stay binary.
SegmentationMask resize(const SegmentationMask& mask, int height, int width);

/// Mask from a probability/intensity grid: value >= threshold -> 1.
SegmentationMask threshold_mask(int height, int width, std::span<const float> values,
                                float threshold = 0.5f);

/// [C, H, W] float32 tensor view of the raster (copied).
torch::Tensor to_tensor(const ImageRaster& image);
/// Accepts [C, H, W] or [1, C, H, W]; values are clamped into [0, 1].
ImageRaster raster_from_tensor(const torch::Tensor& tensor, int source_bit_depth = 8,
                               ImageFormat source_format = ImageFormat::png);
/// [1, H, W] float32 tensor with 0 / 1 entries.
torch::Tensor to_tensor(const SegmentationMask& mask);

}  // namespace dshift
