#include "dshift/evaluation.hpp"

#include "dshift/errors.hpp"

namespace dshift {

double iou(const SegmentationMask& pred, const SegmentationMask& gt) {
  if (pred.height() != gt.height() || pred.width() != gt.width())
    throw ContractError("iou: mask sizes differ (" + std::to_string(pred.height()) + "x" +
                        std::to_string(pred.width()) + " vs " + std::to_string(gt.height()) + "x" +
                        std::to_string(gt.width()) + ")");
  const auto p = pred.values();
  const auto g = gt.values();
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool a = p[i] != 0;
    const bool b = g[i] != 0;
    inter += static_cast<std::size_t>(a && b);
    uni += static_cast<std::size_t>(a || b);
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

void score_into(DatasetEvaluation& out, const std::string& name, const SegmentationMask& pred,
                const SegmentationMask& gt) {
  ImageScore score{name, iou(pred, gt), pred.foreground_count() == 0 && gt.foreground_count() == 0};
  if (score.both_empty) out.empty_agreements.push_back(name);
  out.per_image.push_back(score);
}

void finish(DatasetEvaluation& out) {
  double total = 0.0;
  for (const auto& s : out.per_image) {
    if (!s.iou) continue;
    total += *s.iou;
    ++out.scored;
  }
  if (out.scored == 0) throw ArgumentError("no image could be scored; every ground-truth mask is missing");
  out.mean_iou_percent = 100.0 * total / static_cast<double>(out.scored);
}

}  // namespace

DatasetEvaluation evaluate_dataset(const SegmentationModelAdapter& adapter, const DatasetManifest& data) {
  if (!data.mask_dir) throw ArgumentError("manifest '" + data.name + "' has no mask directory");
  DatasetEvaluation out;
  for (const auto& path : list_images(data.image_dir)) {
    const std::string name = path.filename().string();
    const auto mask_path = find_mask(data, path);
    if (!mask_path) {
      out.missing_masks.push_back(name);
      out.per_image.push_back({name, std::nullopt, false});
      continue;
    }
    score_into(out, name, predict_mask(adapter, load_image(path)), load_mask(*mask_path));
  }
  finish(out);
  return out;
}

DatasetEvaluation evaluate_samples(const SegmentationModelAdapter& adapter,
                                   const std::vector<SegmentationSample>& samples) {
  DatasetEvaluation out;
  for (const auto& s : samples) {
    score_into(out, s.image_path.filename().string(), predict_mask(adapter, s.image), s.mask);
  }
  finish(out);
  return out;
}

std::string to_string(DeltaDirection direction) {
  switch (direction) {
    case DeltaDirection::up:
      return "up";
    case DeltaDirection::down:
      return "down";
    case DeltaDirection::tie:
      return "tie";
  }
  return "tie";
}

std::string marker(DeltaDirection direction) {
  switch (direction) {
    case DeltaDirection::up:
      return "↑";
    case DeltaDirection::down:
      return "↓";
    case DeltaDirection::tie:
      return "=";
  }
  return "=";
}

MethodDelta compute_delta(double base, double value, std::string method, std::string model) {
  if (!(base >= 0.0 && base <= 100.0) || !(value >= 0.0 && value <= 100.0))
    throw ArgumentError("IoU percentages must lie in [0, 100]");
  MethodDelta d{std::move(method), std::move(model), base, value, value - base, DeltaDirection::tie};
  if (d.delta > 0.0) {
    d.direction = DeltaDirection::up;
  } else if (d.delta < 0.0) {
    d.direction = DeltaDirection::down;
  }
  return d;
}

void EvaluationReport::validate() const {
  if (models.empty()) throw ArgumentError("report has no models");
  auto check = [&](const ReportRow& row) {
    if (row.values.size() != models.size())
      throw ArgumentError("row '" + row.method + "' has " + std::to_string(row.values.size()) +
                          " values for " + std::to_string(models.size()) + " models");
    for (double v : row.values)
      if (!(v >= 0.0 && v <= 100.0)) throw ArgumentError("row '" + row.method + "' has a value outside [0, 100]");
  };
  check(baseline);
  for (const auto& row : rows) check(row);
}

std::vector<MethodDelta> EvaluationReport::deltas() const {
  validate();
  std::vector<MethodDelta> out;
  for (const auto& row : rows)
    for (std::size_t m = 0; m < models.size(); ++m)
      out.push_back(compute_delta(baseline.values[m], row.values[m], row.method, models[m]));
  return out;
}

}  // namespace dshift
