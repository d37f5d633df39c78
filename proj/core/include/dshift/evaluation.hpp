#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dshift/features.hpp"
#include "dshift/manifest.hpp"
#include "dshift/raster.hpp"
#include "dshift/segmentation.hpp"
#include "dshift/style_transfer.hpp"
#include "dshift/translation.hpp"

namespace dshift {

/// |pred ∩ gt| / |pred ∪ gt|, 1.0 when both masks are empty. ContractError on size mismatch.
double iou(const SegmentationMask& pred, const SegmentationMask& gt);

struct ImageScore {
  std::string image;
  /// Unset when the ground-truth mask is missing.
  std::optional<double> iou;
  bool both_empty = false;
};

struct DatasetEvaluation {
  /// Mean IoU over scored images, in percent.
  double mean_iou_percent = 0.0;
  std::vector<ImageScore> per_image;
  std::size_t scored = 0;
  std::vector<std::string> missing_masks;
  std::vector<std::string> empty_agreements;
};

DatasetEvaluation evaluate_dataset(const SegmentationModelAdapter& adapter, const DatasetManifest& data);
DatasetEvaluation evaluate_samples(const SegmentationModelAdapter& adapter,
                                   const std::vector<SegmentationSample>& samples);

enum class DeltaDirection { up, down, tie };

std::string to_string(DeltaDirection direction);
/// "↑", "↓" or "=".
std::string marker(DeltaDirection direction);

struct MethodDelta {
  std::string method;
  std::string model;
  double base = 0.0;
  double value = 0.0;
  double delta = 0.0;
  DeltaDirection direction = DeltaDirection::tie;
};

/// delta = value - base; ArgumentError when either value lies outside [0, 100].
MethodDelta compute_delta(double base, double value, std::string method = {}, std::string model = {});

struct ReportRow {
  std::string method;
  std::vector<double> values;
};

/// IoU percentages per (method, model); deltas are taken against the baseline row.
struct EvaluationReport {
  std::vector<std::string> models;
  ReportRow baseline{"base", {}};
  std::vector<ReportRow> rows;
  nlohmann::ordered_json metadata = nlohmann::ordered_json::object();

  /// ArgumentError when a row's length differs from the model list or a value leaves [0, 100].
  void validate() const;
  std::vector<MethodDelta> deltas() const;
};

enum class ReportFormat { text_table, json, csv };

ReportFormat parse_report_format(const std::string& text);
std::string render_report(const EvaluationReport& report, ReportFormat format);
/// Inverse of the JSON rendering.
EvaluationReport parse_report_json(const std::string& text);
/// Format from the extension: .json, .csv, anything else is a text table.
ReportFormat report_format_for_path(const std::filesystem::path& path);

struct SyntheticBenchmarkSpec {
  int images_per_domain = 40;
  int image_size = 64;
  std::pair<int, int> blob_count_range{1, 3};
  /// Blob radius as a fraction of the image side.
  std::pair<double, double> blob_radius_range{0.08, 0.18};
  double a_background = 0.85;
  double a_foreground = 0.30;
  double noise_sigma = 0.03;
  /// Multiplicative RGB tint applied to the inverted image in domain B.
  std::vector<double> b_tint{0.80, 1.00, 0.70};
  double b_blur_sigma = 1.0;
  std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const SyntheticBenchmarkSpec& s);
void from_json(const nlohmann::json& j, SyntheticBenchmarkSpec& s);
/// ArgumentError for empty ranges, blobs that cannot fit, or a spec whose domains would not
/// differ in mean intensity by at least 0.3.
void validate(const SyntheticBenchmarkSpec& spec);

struct SyntheticSample {
  ImageRaster image;
  SegmentationMask mask;
};

/// One domain-A image with its exact mask, and its domain-B rendering.
struct SyntheticPair {
  SyntheticSample a;
  SyntheticSample b;
};

/// Deterministic in (spec, index); domains A and B use independent layouts.
std::vector<SyntheticSample> synthesize_domain(const SyntheticBenchmarkSpec& spec, char domain);
/// Renders a domain-A image into the domain-B style.
ImageRaster apply_domain_b_style(const ImageRaster& a_image, const SyntheticBenchmarkSpec& spec);

struct SyntheticDomains {
  DatasetManifest a;
  DatasetManifest b;
};

/// Writes <out>/A and <out>/B (images/ and masks/ as PNG) plus A.json and B.json manifests.
SyntheticDomains generate_synthetic_domains(const SyntheticBenchmarkSpec& spec, const std::filesystem::path& out_dir);

struct BenchmarkOptions {
  /// "identity", a style-transfer algorithm or a translation algorithm.
  std::string transform = "nst";
  ToyUNetConfig unet;
  SplitFractions split;
  TransferParams transfer;
  std::optional<TrainConfig> translation;
  std::shared_ptr<const FeatureExtractor> backbone;
  /// Where the generated domains live; a temporary directory is used when unset.
  std::optional<std::filesystem::path> work_dir;
  std::function<void(const std::string&)> progress;
};

struct BenchmarkResult {
  EvaluationReport report;
  /// Mean IoU fractions in [0, 1].
  double iou_a_test = 0.0;
  double iou_b_raw = 0.0;
  double iou_b_transformed = 0.0;
};

/// Trains the toy U-Net on domain A and scores A-test, raw B and transformed B.
/// Failures are rethrown as StageError labelled train, transform or evaluate.
BenchmarkResult run_benchmark(const SyntheticBenchmarkSpec& spec, const BenchmarkOptions& options);

/// Names accepted by BenchmarkOptions::transform.
std::vector<std::string> benchmark_transform_names();

}  // namespace dshift
