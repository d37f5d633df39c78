#include <algorithm>
#include <atomic>
#include <unistd.h>

#include "dshift/errors.hpp"
#include "dshift/evaluation.hpp"

namespace dshift {

namespace fs = std::filesystem;

namespace {

template <typename Fn>
auto in_stage(const std::string& stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

class ScratchDir {
 public:
  ScratchDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("dshift-bench-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

bool is_style_transfer(const std::string& name) { return name == "nst" || name == "strotss" || name == "dia"; }

bool is_translation(const std::string& name) {
  const auto names = translation_algorithm_names();
  const auto ext = translation_extension_names();
  return std::find(names.begin(), names.end(), name) != names.end() ||
         std::find(ext.begin(), ext.end(), name) != ext.end();
}

}  // namespace

std::vector<std::string> benchmark_transform_names() {
  std::vector<std::string> out{"identity", "nst", "strotss", "dia"};
  for (const auto& n : translation_algorithm_names()) out.push_back(n);
  return out;
}

BenchmarkResult run_benchmark(const SyntheticBenchmarkSpec& spec, const BenchmarkOptions& options) {
  validate(spec);
  const std::string& method = options.transform;
  if (method != "identity" && !is_style_transfer(method) && !is_translation(method)) {
    std::string known;
    for (const auto& n : benchmark_transform_names()) known += (known.empty() ? "" : ", ") + n;
    throw UnknownAlgorithmError("unknown transform '" + method + "'; registered: " + known);
  }
  if (is_translation(method)) parse_translation_algorithm(method);
  auto progress = [&](const std::string& msg) {
    if (options.progress) options.progress(msg);
  };

  std::optional<ScratchDir> scratch;
  if (!options.work_dir) scratch.emplace();
  const fs::path root = options.work_dir ? *options.work_dir : scratch->path();

  progress("generating synthetic domains");
  const SyntheticDomains domains = in_stage("generate", [&] { return generate_synthetic_domains(spec, root); });
  const auto a_samples = in_stage("generate", [&] { return load_samples(domains.a); });
  const auto b_samples = in_stage("generate", [&] { return load_samples(domains.b); });
  const SampleSplit split = in_stage("train", [&] { return split_samples(a_samples, options.split, spec.seed); });

  progress("training toy U-Net on domain A (" + std::to_string(split.train.size()) + " train, " +
           std::to_string(split.val.size()) + " val)");
  ToyUNetConfig unet_config = options.unet;
  const UNetTrainResult trained = in_stage("train", [&] {
    UNetTrainOptions opts;
    opts.on_epoch = [&](const EpochRecord& r) {
      char line[128];
      std::snprintf(line, sizeof line, "epoch %d: loss %.4f, val IoU %.4f", r.epoch, r.train_loss, r.val_iou);
      progress(line);
    };
    return train_unet(unet_config, split.train, split.val, opts);
  });
  const ToyUNetAdapter& model = *trained.model;

  progress("transforming domain B with " + method);
  std::vector<SegmentationSample> transformed = in_stage("transform", [&] {
    std::vector<SegmentationSample> out = b_samples;
    if (method == "identity") return out;
    if (is_style_transfer(method)) {
      auto backbone = options.backbone ? options.backbone
                                       : std::make_shared<const FeatureExtractor>(FeatureExtractor::random(spec.seed));
      const AlgorithmRegistry registry = make_default_registry(backbone);
      const ImageRaster style = load_image(pick_style_image(domains.a, spec.seed));
      for (std::size_t i = 0; i < out.size(); ++i) {
        StyleTransferRequest request{style, out[i].image, method, options.transfer};
        out[i].image = run_transfer(registry, request).output_image;
        progress("  transferred " + std::to_string(i + 1) + "/" + std::to_string(out.size()));
      }
      return out;
    }
    TrainConfig tc = options.translation ? *options.translation
                                         : TrainConfig::preset(parse_translation_algorithm(method));
    tc.algorithm = parse_translation_algorithm(method);
    if (!tc.seed) tc.seed = spec.seed;
    std::vector<torch::Tensor> source;
    std::vector<torch::Tensor> target;
    for (const auto& s : split.train) source.push_back(to_tensor(resize(s.image, tc.image_size, tc.image_size)));
    for (const auto& s : b_samples) target.push_back(to_tensor(resize(s.image, tc.image_size, tc.image_size)));
    TrainOptions topts;
    topts.on_epoch = [&](const EpochLosses& e) {
      char line[128];
      std::snprintf(line, sizeof line, "translation epoch %d: generator %.4f, discriminator %.4f", e.epoch,
                    e.generator_total, e.discriminator);
      progress(line);
    };
    const TranslationModel translator = train_translation(source, target, tc, topts);
    for (auto& s : out) s.image = translate_image(translator, s.image, Direction::target_to_source);
    return out;
  });

  progress("evaluating");
  const DatasetEvaluation a_test = in_stage("evaluate", [&] { return evaluate_samples(model, split.test); });
  const DatasetEvaluation b_raw = in_stage("evaluate", [&] { return evaluate_samples(model, b_samples); });
  const DatasetEvaluation b_trans = in_stage("evaluate", [&] { return evaluate_samples(model, transformed); });

  BenchmarkResult result;
  result.iou_a_test = a_test.mean_iou_percent / 100.0;
  result.iou_b_raw = b_raw.mean_iou_percent / 100.0;
  result.iou_b_transformed = b_trans.mean_iou_percent / 100.0;

  EvaluationReport& report = result.report;
  report.models = {model.name()};
  report.baseline = {"B-raw", {b_raw.mean_iou_percent}};
  report.rows = {{"A-test", {a_test.mean_iou_percent}}, {"B-" + method, {b_trans.mean_iou_percent}}};
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();
  meta["benchmark"] = "synthetic-domain-shift";
  meta["transform"] = method;
  meta["seed"] = spec.seed;
  meta["datasets"] = {{"source", domains.a.name}, {"target", domains.b.name}};
  meta["split"] = {{"train", split.train.size()}, {"val", split.val.size()}, {"test", split.test.size()}};
  meta["synthetic_spec"] = nlohmann::json(spec);
  meta["unet"] = nlohmann::json(unet_config);
  meta["unet_learning_rate"] = trained.learning_rate;
  meta["unet_best_epoch"] = trained.state.best_epoch;
  meta["unet_best_val_iou"] = trained.state.best_val_iou;
  if (is_style_transfer(method)) meta["transfer_params"] = nlohmann::json(options.transfer);
  meta["empty_agreements"] = b_trans.empty_agreements.size() + b_raw.empty_agreements.size() +
                             a_test.empty_agreements.size();
  report.metadata = meta;
  report.validate();
  return result;
}

}  // namespace dshift
