#include "dshift/raster.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <torch/torch.h>

#include "dshift/errors.hpp"

namespace dshift {

namespace {

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

// Channel-major float buffer from an interleaved 8/16-bit matrix.
std::vector<float> planar_from_mat(const cv::Mat& mat, double scale) {
  const int channels = mat.channels();
  std::vector<float> out(static_cast<std::size_t>(channels) * mat.rows * mat.cols);
  const std::size_t plane = static_cast<std::size_t>(mat.rows) * mat.cols;
  for (int y = 0; y < mat.rows; ++y) {
    for (int x = 0; x < mat.cols; ++x) {
      for (int c = 0; c < channels; ++c) {
        double raw = mat.depth() == CV_8U ? mat.ptr<std::uint8_t>(y)[x * channels + c]
                                          : mat.ptr<std::uint16_t>(y)[x * channels + c];
        out[c * plane + static_cast<std::size_t>(y) * mat.cols + x] =
            static_cast<float>(raw / scale);
      }
    }
  }
  return out;
}

cv::Mat interleaved_float(const ImageRaster& image) {
  cv::Mat mat(image.height(), image.width(), CV_32FC(image.channels()));
  for (int y = 0; y < image.height(); ++y) {
    auto* row = mat.ptr<float>(y);
    for (int x = 0; x < image.width(); ++x) {
      for (int c = 0; c < image.channels(); ++c) row[x * image.channels() + c] = image.at(c, y, x);
    }
  }
  return mat;
}

void stretch_percentiles(std::vector<float>& values) {
  std::vector<float> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  auto pick = [&](double q) {
    const auto idx = static_cast<std::size_t>(std::round(q * static_cast<double>(sorted.size() - 1)));
    return sorted[idx];
  };
  const float lo = pick(0.01);
  const float hi = pick(0.99);
  if (!(hi > lo)) return;
  for (auto& v : values) v = std::clamp((v - lo) / (hi - lo), 0.0f, 1.0f);
}

}  // namespace

std::string_view to_string(ImageFormat format) {
  switch (format) {
    case ImageFormat::png:
      return "PNG";
    case ImageFormat::tiff:
      return "TIFF";
    case ImageFormat::jpg:
      return "JPG";
  }
  return "?";
}

ImageFormat format_from_path(const std::filesystem::path& path) {
  const std::string ext = lower_extension(path);
  if (ext == ".png") return ImageFormat::png;
  if (ext == ".tif" || ext == ".tiff") return ImageFormat::tiff;
  if (ext == ".jpg" || ext == ".jpeg") return ImageFormat::jpg;
  throw FormatError("unsupported image format '" + ext + "' for " + path.string() +
                    "; supported formats: PNG, TIFF, JPG");
}

bool is_supported_image_path(const std::filesystem::path& path) {
  const std::string ext = lower_extension(path);
  return ext == ".png" || ext == ".tif" || ext == ".tiff" || ext == ".jpg" || ext == ".jpeg";
}

ImageRaster::ImageRaster(int height, int width, int channels, std::vector<float> values,
                         int source_bit_depth, ImageFormat source_format)
    : height_(height),
      width_(width),
      channels_(channels),
      bit_depth_(source_bit_depth),
      format_(source_format),
      values_(std::move(values)) {
  if (height < 1 || width < 1) throw ArgumentError("raster dimensions must be positive");
  if (channels != 1 && channels != 3) throw ArgumentError("raster must have 1 or 3 channels");
  if (source_bit_depth != 8 && source_bit_depth != 16)
    throw ArgumentError("source bit depth must be 8 or 16");
  if (values_.size() != static_cast<std::size_t>(height) * width * channels)
    throw ContractError("raster value count does not match its dimensions");
  for (float v : values_) {
    if (!(v >= 0.0f && v <= 1.0f)) throw ContractError("raster values must lie in [0, 1]");
  }
}

ImageRaster ImageRaster::filled(int height, int width, int channels, float value) {
  return ImageRaster(height, width, channels,
                     std::vector<float>(static_cast<std::size_t>(height) * width * channels, value));
}

std::span<const float> ImageRaster::channel(int c) const {
  if (c < 0 || c >= channels_) throw ArgumentError("channel index out of range");
  const std::size_t plane = static_cast<std::size_t>(height_) * width_;
  return std::span<const float>(values_).subspan(c * plane, plane);
}

double ImageRaster::mean() const {
  return std::accumulate(values_.begin(), values_.end(), 0.0) / static_cast<double>(values_.size());
}

SegmentationMask::SegmentationMask(int height, int width, std::vector<std::uint8_t> values)
    : height_(height), width_(width), values_(std::move(values)) {
  if (height < 1 || width < 1) throw ArgumentError("mask dimensions must be positive");
  if (values_.size() != static_cast<std::size_t>(height) * width)
    throw ContractError("mask value count does not match its dimensions");
  for (auto v : values_) {
    if (v > 1) throw ContractError("mask values must be 0 or 1");
  }
}

SegmentationMask SegmentationMask::empty(int height, int width) {
  return SegmentationMask(height, width, std::vector<std::uint8_t>(static_cast<std::size_t>(height) * width, 0));
}

std::size_t SegmentationMask::foreground_count() const {
  return static_cast<std::size_t>(std::count(values_.begin(), values_.end(), std::uint8_t{1}));
}

double SegmentationMask::foreground_fraction() const {
  return static_cast<double>(foreground_count()) / static_cast<double>(values_.size());
}

ImageRaster load_image(const std::filesystem::path& path, const LoadOptions& options) {
  if (!std::filesystem::exists(path)) throw NotFoundError("image not found: " + path.string());
  const ImageFormat format = format_from_path(path);

  cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (mat.empty()) throw FormatError("cannot decode image " + path.string());

  int bit_depth = 0;
  if (mat.depth() == CV_8U) {
    bit_depth = 8;
  } else if (mat.depth() == CV_16U) {
    bit_depth = 16;
  } else {
    throw FormatError("unsupported sample type in " + path.string() + "; expected 8 or 16 bit");
  }

  switch (mat.channels()) {
    case 1:
      break;
    case 3:
      cv::cvtColor(mat, mat, cv::COLOR_BGR2RGB);
      break;
    case 4:
      cv::cvtColor(mat, mat, cv::COLOR_BGRA2RGB);
      break;
    default:
      throw FormatError("unsupported channel count in " + path.string());
  }

  const double scale = bit_depth == 8 ? 255.0 : 65535.0;
  std::vector<float> values = planar_from_mat(mat, scale);
  if (options.percentile_stretch) stretch_percentiles(values);
  return ImageRaster(mat.rows, mat.cols, mat.channels(), std::move(values), bit_depth, format);
}

void save_image(const ImageRaster& image, const std::filesystem::path& path, int bit_depth) {
  const ImageFormat format = format_from_path(path);
  if (bit_depth != 8 && bit_depth != 16) throw ArgumentError("bit depth must be 8 or 16");
  if (format == ImageFormat::jpg && bit_depth != 8)
    throw ArgumentError("JPG output only supports 8-bit samples");

  const double scale = bit_depth == 8 ? 255.0 : 65535.0;
  cv::Mat mat(image.height(), image.width(),
              CV_MAKETYPE(bit_depth == 8 ? CV_8U : CV_16U, image.channels()));
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      for (int c = 0; c < image.channels(); ++c) {
        const double q = std::round(static_cast<double>(image.at(c, y, x)) * scale);
        if (bit_depth == 8) {
          mat.ptr<std::uint8_t>(y)[x * image.channels() + c] = static_cast<std::uint8_t>(q);
        } else {
          mat.ptr<std::uint16_t>(y)[x * image.channels() + c] = static_cast<std::uint16_t>(q);
        }
      }
    }
  }
  if (image.channels() == 3) cv::cvtColor(mat, mat, cv::COLOR_RGB2BGR);

  std::vector<int> params;
  if (format == ImageFormat::jpg) params = {cv::IMWRITE_JPEG_QUALITY, 95};
  if (!cv::imwrite(path.string(), mat, params))
    throw Error("failed to write image " + path.string());
}

SegmentationMask load_mask(const std::filesystem::path& path) {
  const ImageRaster raster = load_image(path);
  const std::size_t plane = static_cast<std::size_t>(raster.height()) * raster.width();
  std::vector<std::uint8_t> bits(plane);
  for (std::size_t i = 0; i < plane; ++i) {
    float v = 0.0f;
    for (int c = 0; c < raster.channels(); ++c) v += raster.channel(c)[i];
    bits[i] = v / static_cast<float>(raster.channels()) >= 0.5f ? 1 : 0;
  }
  return SegmentationMask(raster.height(), raster.width(), std::move(bits));
}

void save_mask(const SegmentationMask& mask, const std::filesystem::path& path) {
  cv::Mat mat(mask.height(), mask.width(), CV_8UC1);
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) mat.at<std::uint8_t>(y, x) = mask.at(y, x) ? 255 : 0;
  }
  if (!cv::imwrite(path.string(), mat)) throw Error("failed to write mask " + path.string());
}

ImageRaster to_three_channel(const ImageRaster& image) {
  if (image.channels() == 3) return image;
  const auto plane = image.channel(0);
  std::vector<float> values;
  values.reserve(plane.size() * 3);
  for (int c = 0; c < 3; ++c) values.insert(values.end(), plane.begin(), plane.end());
  return ImageRaster(image.height(), image.width(), 3, std::move(values), image.source_bit_depth(),
                     image.source_format());
}

ImageRaster resize(const ImageRaster& image, int height, int width, ResizeMode mode) {
  if (height < 1 || width < 1) throw ArgumentError("resize target dimensions must be positive");
  if (height == image.height() && width == image.width()) return image;

  const cv::Mat src = interleaved_float(image);
  cv::Mat dst;
  cv::resize(src, dst, cv::Size(width, height), 0, 0,
             mode == ResizeMode::bilinear ? cv::INTER_LINEAR : cv::INTER_NEAREST);

  const int channels = image.channels();
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  std::vector<float> values(plane * channels);
  for (int y = 0; y < height; ++y) {
    const auto* row = dst.ptr<float>(y);
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) {
        values[c * plane + static_cast<std::size_t>(y) * width + x] =
            std::clamp(row[x * channels + c], 0.0f, 1.0f);
      }
    }
  }
  return ImageRaster(height, width, channels, std::move(values), image.source_bit_depth(),
                     image.source_format());
}

SegmentationMask resize(const SegmentationMask& mask, int height, int width) {
  if (height < 1 || width < 1) throw ArgumentError("resize target dimensions must be positive");
  if (height == mask.height() && width == mask.width()) return mask;
  cv::Mat src(mask.height(), mask.width(), CV_8UC1,
              const_cast<std::uint8_t*>(mask.values().data()));
  cv::Mat dst;
  cv::resize(src, dst, cv::Size(width, height), 0, 0, cv::INTER_NEAREST);
  std::vector<std::uint8_t> bits(dst.data, dst.data + static_cast<std::size_t>(height) * width);
  return SegmentationMask(height, width, std::move(bits));
}

SegmentationMask threshold_mask(int height, int width, std::span<const float> values,
                                float threshold) {
  if (values.size() != static_cast<std::size_t>(height) * width)
    throw ContractError("threshold_mask: value count does not match dimensions");
  std::vector<std::uint8_t> bits(values.size());
  std::transform(values.begin(), values.end(), bits.begin(),
                 [threshold](float v) { return static_cast<std::uint8_t>(v >= threshold ? 1 : 0); });
  return SegmentationMask(height, width, std::move(bits));
}

torch::Tensor to_tensor(const ImageRaster& image) {
  auto values = image.values();
  return torch::from_blob(const_cast<float*>(values.data()),
                          {image.channels(), image.height(), image.width()}, torch::kFloat32)
      .clone();
}

ImageRaster raster_from_tensor(const torch::Tensor& tensor, int source_bit_depth,
                               ImageFormat source_format) {
  torch::Tensor t = tensor.detach();
  if (t.dim() == 4) {
    if (t.size(0) != 1) throw ContractError("raster_from_tensor expects a single image");
    t = t.squeeze(0);
  }
  if (t.dim() != 3) throw ContractError("raster_from_tensor expects a [C, H, W] tensor");
  if (!torch::isfinite(t).all().item<bool>())
    throw ContractError("raster_from_tensor: tensor has non-finite values");
  t = t.to(torch::kFloat32).clamp(0.0, 1.0).contiguous();
  const auto* data = t.data_ptr<float>();
  std::vector<float> values(data, data + t.numel());
  return ImageRaster(static_cast<int>(t.size(1)), static_cast<int>(t.size(2)),
                     static_cast<int>(t.size(0)), std::move(values), source_bit_depth,
                     source_format);
}

torch::Tensor to_tensor(const SegmentationMask& mask) {
  std::vector<float> values(mask.values().begin(), mask.values().end());
  return torch::tensor(values, torch::kFloat32).reshape({1, mask.height(), mask.width()});
}

}  // namespace dshift
