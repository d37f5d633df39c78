#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include <opencv2/imgproc.hpp>

#include "dshift/errors.hpp"
#include "dshift/evaluation.hpp"
#include "dshift/fs_util.hpp"

namespace dshift {

namespace fs = std::filesystem;

namespace {

std::uint64_t mix(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double mean_tint(const SyntheticBenchmarkSpec& s) {
  double t = 0.0;
  for (double v : s.b_tint) t += v;
  return t / static_cast<double>(s.b_tint.size());
}

SyntheticSample render_a(const SyntheticBenchmarkSpec& spec, std::mt19937_64& rng) {
  const int n = spec.image_size;
  std::uniform_int_distribution<int> count_dist(spec.blob_count_range.first, spec.blob_count_range.second);
  std::uniform_real_distribution<double> radius_dist(spec.blob_radius_range.first, spec.blob_radius_range.second);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, spec.noise_sigma);

  struct Blob {
    double cx, cy, r;
  };
  std::vector<Blob> blobs;
  const int count = count_dist(rng);
  for (int i = 0; i < count; ++i) {
    const double r = radius_dist(rng) * n;
    const double cx = r + unit(rng) * (n - 2.0 * r);
    const double cy = r + unit(rng) * (n - 2.0 * r);
    blobs.push_back({cx, cy, r});
  }

  std::vector<std::uint8_t> mask(static_cast<std::size_t>(n) * n, 0);
  std::vector<float> gray(static_cast<std::size_t>(n) * n);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      bool inside = false;
      for (const auto& b : blobs) {
        const double dx = x + 0.5 - b.cx;
        const double dy = y + 0.5 - b.cy;
        inside = inside || dx * dx + dy * dy <= b.r * b.r;
      }
      const std::size_t i = static_cast<std::size_t>(y) * n + x;
      mask[i] = inside ? 1 : 0;
      const double v = (inside ? spec.a_foreground : spec.a_background) + noise(rng);
      gray[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  std::vector<float> rgb;
  rgb.reserve(gray.size() * 3);
  for (int c = 0; c < 3; ++c) rgb.insert(rgb.end(), gray.begin(), gray.end());
  return {ImageRaster(n, n, 3, std::move(rgb)), SegmentationMask(n, n, std::move(mask))};
}

}  // namespace

void to_json(nlohmann::json& j, const SyntheticBenchmarkSpec& s) {
  j = {{"images_per_domain", s.images_per_domain},
       {"image_size", s.image_size},
       {"blob_count_range", {s.blob_count_range.first, s.blob_count_range.second}},
       {"blob_radius_range", {s.blob_radius_range.first, s.blob_radius_range.second}},
       {"domain_a_style", {{"kind", "dark-blob-on-light"},
                           {"background", s.a_background},
                           {"foreground", s.a_foreground},
                           {"noise_sigma", s.noise_sigma}}},
       {"domain_b_style", {{"kind", "inverted-contrast"}, {"tint", s.b_tint}, {"blur_sigma", s.b_blur_sigma}}},
       {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, SyntheticBenchmarkSpec& s) {
  s.images_per_domain = j.value("images_per_domain", s.images_per_domain);
  s.image_size = j.value("image_size", s.image_size);
  if (j.contains("blob_count_range")) {
    const auto& r = j.at("blob_count_range");
    s.blob_count_range = {r.at(0).get<int>(), r.at(1).get<int>()};
  }
  if (j.contains("blob_radius_range")) {
    const auto& r = j.at("blob_radius_range");
    s.blob_radius_range = {r.at(0).get<double>(), r.at(1).get<double>()};
  }
  if (j.contains("domain_a_style")) {
    const auto& a = j.at("domain_a_style");
    s.a_background = a.value("background", s.a_background);
    s.a_foreground = a.value("foreground", s.a_foreground);
    s.noise_sigma = a.value("noise_sigma", s.noise_sigma);
  }
  if (j.contains("domain_b_style")) {
    const auto& b = j.at("domain_b_style");
    if (b.contains("tint")) s.b_tint = b.at("tint").get<std::vector<double>>();
    s.b_blur_sigma = b.value("blur_sigma", s.b_blur_sigma);
  }
  s.seed = j.value("seed", s.seed);
}

void validate(const SyntheticBenchmarkSpec& s) {
  if (s.images_per_domain < 1) throw ArgumentError("images_per_domain must be >= 1");
  if (s.image_size < 8) throw ArgumentError("image_size must be >= 8");
  if (s.blob_count_range.first < 1 || s.blob_count_range.first > s.blob_count_range.second)
    throw ArgumentError("blob_count_range must be a non-empty range of positive counts");
  const auto [rmin, rmax] = s.blob_radius_range;
  if (!(rmin > 0.0) || rmin > rmax || rmax >= 0.5)
    throw ArgumentError("blob_radius_range must satisfy 0 < min <= max < 0.5");
  if (s.b_tint.size() != 3) throw ArgumentError("domain B tint needs three channel factors");
  for (double t : s.b_tint)
    if (t < 0.0 || t > 1.0) throw ArgumentError("tint factors must lie in [0, 1]");
  if (s.noise_sigma < 0.0 || s.b_blur_sigma < 0.0) throw ArgumentError("noise and blur sigmas must be >= 0");
  if (s.a_background < 0.0 || s.a_background > 1.0 || s.a_foreground < 0.0 || s.a_foreground > 1.0)
    throw ArgumentError("domain A intensities must lie in [0, 1]");

  // Mean of A spans [bg - f_max (bg - fg), bg]; mean of B is t (1 - mean A).
  const double f_max = std::min(1.0, s.blob_count_range.second * std::numbers::pi * rmax * rmax);
  const double t = mean_tint(s);
  const double lo = s.a_background - f_max * (s.a_background - s.a_foreground);
  const double hi = s.a_background;
  const double d_lo = lo * (1.0 + t) - t;
  const double d_hi = hi * (1.0 + t) - t;
  if ((d_lo > 0.0) != (d_hi > 0.0) || std::min(std::abs(d_lo), std::abs(d_hi)) < 0.3)
    throw ArgumentError("domain styles must differ in mean intensity by at least 0.3 for every layout");
}

ImageRaster apply_domain_b_style(const ImageRaster& a_image, const SyntheticBenchmarkSpec& spec) {
  const ImageRaster rgb = to_three_channel(a_image);
  const int h = rgb.height();
  const int w = rgb.width();
  std::vector<float> out(rgb.values().size());
  for (int c = 0; c < 3; ++c) {
    cv::Mat plane(h, w, CV_32F);
    const auto src = rgb.channel(c);
    for (int i = 0; i < h * w; ++i) plane.at<float>(i / w, i % w) = static_cast<float>((1.0 - src[i]) * spec.b_tint[c]);
    if (spec.b_blur_sigma > 0.0) cv::GaussianBlur(plane, plane, cv::Size(0, 0), spec.b_blur_sigma, spec.b_blur_sigma,
                                                 cv::BORDER_REFLECT);
    for (int i = 0; i < h * w; ++i)
      out[static_cast<std::size_t>(c) * h * w + i] = std::clamp(plane.at<float>(i / w, i % w), 0.0f, 1.0f);
  }
  return ImageRaster(h, w, 3, std::move(out), a_image.source_bit_depth(), a_image.source_format());
}

std::vector<SyntheticSample> synthesize_domain(const SyntheticBenchmarkSpec& spec, char domain) {
  validate(spec);
  if (domain != 'A' && domain != 'B') throw ArgumentError("domain must be 'A' or 'B'");
  std::vector<SyntheticSample> out;
  for (int i = 0; i < spec.images_per_domain; ++i) {
    std::mt19937_64 rng(mix(spec.seed * 1000003ULL + static_cast<std::uint64_t>(domain) * 7919ULL +
                            static_cast<std::uint64_t>(i)));
    SyntheticSample s = render_a(spec, rng);
    if (domain == 'B') s.image = apply_domain_b_style(s.image, spec);
    out.push_back(std::move(s));
  }
  return out;
}

SyntheticDomains generate_synthetic_domains(const SyntheticBenchmarkSpec& spec, const fs::path& out_dir) {
  validate(spec);
  SyntheticDomains result;
  for (char domain : {'A', 'B'}) {
    const std::string tag(1, domain);
    const fs::path root = out_dir / tag;
    fs::create_directories(root / "images");
    fs::create_directories(root / "masks");
    const auto samples = synthesize_domain(spec, domain);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "%c_%04zu.png", domain == 'A' ? 'a' : 'b', i);
      commit_atomic(root / "images" / name, [&](const fs::path& p) { save_image(samples[i].image, p, 8); });
      commit_atomic(root / "masks" / name, [&](const fs::path& p) { save_mask(samples[i].mask, p); });
    }
    DatasetManifest m;
    m.name = "synthetic-" + tag;
    m.image_dir = root / "images";
    m.mask_dir = root / "masks";
    m.role = domain == 'A' ? DomainRole::source : DomainRole::target;
    m.notes = domain == 'A' ? "dark blobs on a light background" : "inverted contrast, tinted and blurred";
    DatasetManifest stored = m;
    stored.image_dir = fs::path(tag) / "images";
    stored.mask_dir = fs::path(tag) / "masks";
    save_manifest(stored, out_dir / (tag + ".json"));
    (domain == 'A' ? result.a : result.b) = m;
  }
  return result;
}

}  // namespace dshift
