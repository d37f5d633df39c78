#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/types.h>

#include "dshift/features.hpp"
#include "dshift/manifest.hpp"
#include "dshift/raster.hpp"

namespace dshift {

/// Optional knobs; unset values fall back to the algorithm's defaults, and the resolved
/// values are echoed in TransferResult::hyperparams.
struct TransferParams {
  std::optional<int> iterations;
  std::optional<double> content_weight;
  std::optional<double> style_weight;
  std::optional<double> learning_rate;
  std::optional<int> scales;
  std::optional<int> samples;
  std::optional<std::vector<int>> content_layers;
  std::optional<std::vector<int>> style_layers;
  std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const TransferParams& p);
void from_json(const nlohmann::json& j, TransferParams& p);

struct StyleTransferRequest {
  ImageRaster style_image;
  ImageRaster content_image;
  std::string algorithm;
  TransferParams params;
};

/// Throws ArgumentError for negative iterations/weights or scales < 1.
void validate_request(const StyleTransferRequest& request);

struct LossRecord {
  int scale = 0;
  int iteration = 0;
  double total = 0.0;
  double content = 0.0;
  double style = 0.0;
};

/// Objective at the start and the end of one optimisation scale, measured on a fixed sample.
struct ScaleSummary {
  int scale = 0;
  int height = 0;
  int width = 0;
  double initial_objective = 0.0;
  double final_objective = 0.0;
};

struct TransferResult {
  ImageRaster output_image;
  std::vector<LossRecord> loss_trace;
  std::vector<ScaleSummary> scales;
  std::string algorithm;
  nlohmann::json hyperparams;
  nlohmann::json provenance = nlohmann::json::object();
};

/// CSV with header `iteration,total,content,style`; multi-scale traces number iterations
/// consecutively across scales.
std::string loss_trace_csv(std::span<const LossRecord> trace);

using TransferProcedure = std::function<TransferResult(const StyleTransferRequest&)>;

/// Name -> procedure map. Freeze before sharing it between threads.
class AlgorithmRegistry {
 public:
  void register_algorithm(const std::string& name, TransferProcedure procedure);
  void freeze() noexcept { frozen_ = true; }
  bool frozen() const noexcept { return frozen_; }
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  /// Sorted registered names.
  std::vector<std::string> names() const;

  const TransferProcedure& at(const std::string& name) const;

 private:
  std::map<std::string, TransferProcedure> entries_;
  bool frozen_ = false;
};

/// "nst", "strotss" and the "dia" extension stub, all sharing `extractor`.
AlgorithmRegistry make_default_registry(std::shared_ptr<const FeatureExtractor> extractor);

/// Validates the request and dispatches to the named procedure.
TransferResult run_transfer(const AlgorithmRegistry& registry, const StyleTransferRequest& request);

// Objectives. Layers are pyramid layer ids; each returns a differentiable scalar tensor.

torch::Tensor content_loss(const FeaturePyramid& output, const FeaturePyramid& content,
                           std::span<const int> layers);
torch::Tensor style_loss(const FeaturePyramid& output, const FeaturePyramid& style,
                         std::span<const int> layers);
/// Same as style_loss with the style Gram matrices precomputed (one per layer).
torch::Tensor style_loss_from_grams(const FeaturePyramid& output, std::span<const torch::Tensor> style_grams,
                                    std::span<const int> layers);

enum class GroundCost { cosine, euclidean };

/// Relaxed earth mover's distance between the rows of `a` and `b`.
torch::Tensor remd_loss(const torch::Tensor& a, const torch::Tensor& b,
                        GroundCost cost = GroundCost::cosine);
/// Mean |mean_a - mean_b| plus mean |cov_a - cov_b| (population covariance).
torch::Tensor moment_matching_loss(const torch::Tensor& a, const torch::Tensor& b);

/// Gram-statistics style transfer optimised over pixel values with Adam.
TransferResult nst_transfer(const StyleTransferRequest& request, const FeatureExtractor& extractor);

/// Coarse-to-fine transfer with relaxed-EMD, moment and palette style terms and a
/// self-similarity content term.
TransferResult strotss_transfer(const StyleTransferRequest& request, const FeatureExtractor& extractor);

/// Picks one image of the manifest with a seeded draw (files sorted by name).
std::filesystem::path pick_style_image(const DatasetManifest& manifest, std::uint64_t seed = 0);

}  // namespace dshift
