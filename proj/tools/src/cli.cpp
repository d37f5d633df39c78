#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "CLI11.hpp"
#include "dshift/errors.hpp"
#include "dshift/evaluation.hpp"
#include "dshift/features.hpp"
#include "dshift/fs_util.hpp"
#include "dshift/manifest.hpp"
#include "dshift/segmentation.hpp"
#include "dshift/style_transfer.hpp"
#include "dshift/translation.hpp"

namespace dshift::cli {

namespace fs = std::filesystem;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string join(const std::vector<std::string>& items, const std::string& sep = ", ") {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : sep) + s;
  return out;
}

bool output_exists(const fs::path& p) {
  if (fs::is_directory(p)) return !fs::is_empty(p);
  return fs::exists(p);
}

void guard_outputs(const std::vector<fs::path>& outputs, bool overwrite) {
  if (overwrite) return;
  for (const auto& p : outputs)
    if (output_exists(p)) throw UsageError("output already exists: " + p.string() + " (pass --overwrite to replace it)");
}

template <typename Fn>
auto stage(const std::string& name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const UsageError&) {
    throw;
  } catch (const UnknownAlgorithmError&) {
    throw;
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

DatasetManifest manifest_from(const fs::path& path, DomainRole role) {
  if (path.extension() == ".json") return load_manifest(path);
  if (!fs::is_directory(path)) throw NotFoundError("dataset not found: " + path.string());
  DatasetManifest m;
  m.name = path.filename().string();
  m.role = role;
  if (fs::is_directory(path / "images")) {
    m.image_dir = path / "images";
    if (fs::is_directory(path / "masks")) m.mask_dir = path / "masks";
  } else {
    m.image_dir = path;
  }
  return m;
}

std::shared_ptr<const FeatureExtractor> make_backbone(const std::string& weights, std::uint64_t seed,
                                                      std::ostream& err) {
  if (weights.empty()) {
    err << "note: no --backbone-weights given; using the fixed-seed random backbone (seed " << seed << ")\n";
    return std::make_shared<const FeatureExtractor>(FeatureExtractor::random(seed));
  }
  BackboneConfig config;
  config.weights_source = WeightsSource::pretrained_classifier;
  config.weights_path = weights;
  config.seed = seed;
  return std::make_shared<const FeatureExtractor>(FeatureExtractor(config));
}

std::string version_text() {
  AlgorithmRegistry registry = make_default_registry(nullptr);
  std::vector<std::string> transfer;
  for (const auto& n : registry.names()) transfer.push_back(n == "dia" ? n + " (extension stub)" : n);
  std::vector<std::string> translation = translation_algorithm_names();
  for (const auto& n : translation_extension_names()) translation.push_back(n + " (extension stub)");
  std::ostringstream os;
  os << "dshift " << DSHIFT_VERSION << "\n"
     << "style transfer: " << join(transfer) << "\n"
     << "translation: " << join(translation) << "\n"
     << "segmentation adapters: " << join(make_default_adapter_registry().types()) << "\n";
  return os.str();
}

// Command namespace for config lookup: "transfer", "translate-train", ...
std::string command_key(const std::vector<std::string>& args) {
  std::vector<std::string> words;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      ++i;
      continue;
    }
    if (!args[i].empty() && args[i][0] == '-') continue;
    words.push_back(args[i]);
    if (words.size() == 2) break;
  }
  if (words.empty()) return {};
  if (words[0] == "translate" && words.size() > 1) return "translate-" + words[1];
  return words[0];
}

bool has_flag(const std::vector<std::string>& args, const std::string& flag) {
  return std::any_of(args.begin(), args.end(),
                     [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
}

std::string scalar_text(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return v.dump();
  if (v.is_number()) return number(v.get<double>());
  throw UsageError("config values must be strings, numbers, booleans or lists of those");
}

struct Transfer {
  std::string algorithm, style, content, out, trace, provenance, backbone;
  int iterations = 0, scales = 0, samples = 0;
  double content_weight = 0, style_weight = 0, learning_rate = 0;
  std::vector<int> content_layers, style_layers;
  std::uint64_t seed = 0;
  bool overwrite = false;
  CLI::Option *o_iter{}, *o_cw{}, *o_sw{}, *o_lr{}, *o_scales{}, *o_samples{}, *o_cl{}, *o_sl{};
};

struct TranslateTrain {
  std::string algorithm, source, target, out;
  int epochs = 0, batch_size = 0, image_size = 0;
  double learning_rate = 0, cycle_weight = 0, identity_weight = 0, nce_weight = 0;
  std::uint64_t seed = 0;
  bool overwrite = false;
  CLI::Option *o_epochs{}, *o_batch{}, *o_size{}, *o_lr{}, *o_cyc{}, *o_idt{}, *o_nce{};
};

struct TranslateApply {
  std::string model, direction = "target-to-source", in, out, algorithm;
  bool overwrite = false;
};

struct SegmentTrain {
  std::string train, val, out, history, learning_rate = "auto";
  int depth = 0, base_channels = 0, input_size = 0, max_epochs = 0, patience = 0, batch_size = 0;
  std::vector<double> split;
  std::uint64_t seed = 0;
  bool overwrite = false;
  CLI::Option *o_depth{}, *o_base{}, *o_size{}, *o_epochs{}, *o_patience{}, *o_batch{};
};

struct Evaluate {
  std::vector<std::string> models, adapters, methods;
  std::string baseline, out, format, per_image;
  bool overwrite = false;
};

struct Benchmark {
  std::string transform = "nst", out, format, work_dir, backbone, unet_lr;
  std::uint64_t seed = 0;
  int images = 0, image_size = 0, iterations = 0, max_epochs = 0, patience = 0, translation_epochs = 0;
  double content_weight = 0, style_weight = 0;
  bool overwrite = false;
  CLI::Option *o_images{}, *o_size{}, *o_iter{}, *o_cw{}, *o_sw{}, *o_epochs{}, *o_patience{}, *o_tepochs{};
};

struct Report {
  std::string in, out, format;
  bool overwrite = false;
};

ReportFormat resolve_format(const std::string& flag, const fs::path& out) {
  if (!flag.empty()) return parse_report_format(flag);
  return report_format_for_path(out);
}

void write_output(const std::string& path, const std::string& text, std::ostream& out) {
  if (path == "-") {
    out << text;
    return;
  }
  write_text_atomic(path, text);
}

// ---------------------------------------------------------------------------------------

int do_transfer(Transfer& t, std::ostream& err) {
  std::vector<fs::path> outputs{t.out};
  if (!t.trace.empty()) outputs.push_back(t.trace);
  if (!t.provenance.empty()) outputs.push_back(t.provenance);
  guard_outputs(outputs, t.overwrite);

  TransferParams params;
  params.seed = t.seed;
  if (t.o_iter->count()) params.iterations = t.iterations;
  if (t.o_cw->count()) params.content_weight = t.content_weight;
  if (t.o_sw->count()) params.style_weight = t.style_weight;
  if (t.o_lr->count()) params.learning_rate = t.learning_rate;
  if (t.o_scales->count()) params.scales = t.scales;
  if (t.o_samples->count()) params.samples = t.samples;
  if (t.o_cl->count()) params.content_layers = t.content_layers;
  if (t.o_sl->count()) params.style_layers = t.style_layers;

  // Unknown names are rejected before any image is read.
  const AlgorithmRegistry names_only = make_default_registry(nullptr);
  if (!names_only.contains(t.algorithm))
    throw UnknownAlgorithmError("unknown algorithm '" + t.algorithm + "'; registered: " + join(names_only.names()));

  StyleTransferRequest request = stage("load", [&] {
    return StyleTransferRequest{to_three_channel(load_image(t.style)), load_image(t.content), t.algorithm, params};
  });
  AlgorithmRegistry registry = stage("backbone", [&] {
    AlgorithmRegistry r = make_default_registry(make_backbone(t.backbone, t.seed, err));
    r.freeze();
    return r;
  });
  const int bit_depth = request.content_image.source_bit_depth();
  err << "running " << t.algorithm << " on " << t.content << "\n";
  const TransferResult result = stage("transfer", [&] { return run_transfer(registry, request); });
  stage("write", [&] {
    const int depth = format_from_path(t.out) == ImageFormat::jpg ? 8 : bit_depth;
    commit_atomic(t.out, [&](const fs::path& p) { save_image(result.output_image, p, depth); });
    if (!t.trace.empty()) write_text_atomic(t.trace, loss_trace_csv(result.loss_trace));
    if (!t.provenance.empty()) {
      nlohmann::json doc = {{"algorithm", result.algorithm},
                            {"hyperparams", result.hyperparams},
                            {"provenance", result.provenance},
                            {"style", t.style},
                            {"content", t.content}};
      write_text_atomic(t.provenance, doc.dump(2) + "\n");
    }
    return 0;
  });
  err << "wrote " << t.out << "\n";
  return kExitOk;
}

int do_translate_train(TranslateTrain& t, std::ostream& err) {
  guard_outputs({t.out}, t.overwrite);
  const TranslationAlgorithm algorithm = parse_translation_algorithm(t.algorithm);
  TrainConfig config = TrainConfig::preset(algorithm);
  config.seed = t.seed;
  if (t.o_epochs->count()) config.epochs = t.epochs;
  if (t.o_batch->count()) config.batch_size = t.batch_size;
  if (t.o_size->count()) config.image_size = t.image_size;
  if (t.o_lr->count()) config.learning_rate = t.learning_rate;
  if (t.o_cyc->count()) config.cycle_weight = t.cycle_weight;
  if (t.o_idt->count()) config.identity_weight = t.identity_weight;
  if (t.o_nce->count()) config.nce_weight = t.nce_weight;
  stage("config", [&] {
    validate(config);
    return 0;
  });

  const DomainPair pair = stage("load", [&] {
    return make_domain_pair(manifest_from(t.source, DomainRole::source), manifest_from(t.target, DomainRole::target));
  });
  const fs::path out = t.out;
  if (t.overwrite && fs::exists(out)) fs::remove_all(out);
  fs::create_directories(out);
  TrainOptions options;
  options.checkpoint_dir = out;
  options.on_epoch = [&](const EpochLosses& e) {
    err << "epoch " << e.epoch << "/" << config.epochs << ": generator " << number(e.generator_total)
        << ", discriminator " << number(e.discriminator) << "\n";
  };
  const TranslationModel model = stage("train", [&] { return train_translation(pair, config, options); });
  stage("write", [&] {
    save_translation_model(model, out / "model.ckpt");
    std::string csv = "epoch,generator_total,adversarial,cycle,identity,nce,discriminator\n";
    for (const auto& e : model.epochs)
      csv += std::to_string(e.epoch) + "," + number(e.generator_total) + "," + number(e.adversarial) + "," +
             number(e.cycle) + "," + number(e.identity) + "," + number(e.nce) + "," + number(e.discriminator) + "\n";
    write_text_atomic(out / "losses.csv", csv);
    return 0;
  });
  err << "wrote " << (out / "model.ckpt").string() << "\n";
  return kExitOk;
}

int do_translate_apply(TranslateApply& t, std::ostream& err) {
  guard_outputs({t.out}, t.overwrite);
  const Direction direction = stage("config", [&] { return parse_direction(t.direction); });
  std::optional<TranslationAlgorithm> expected;
  if (!t.algorithm.empty()) expected = parse_translation_algorithm(t.algorithm);
  const TranslationModel model = stage("load", [&] { return load_translation_model(t.model, expected); });
  stage("load", [&] {
    model.generator_for(direction);
    return 0;
  });
  const std::size_t n = stage("translate", [&] { return translate_images(model, t.in, direction, t.out); });
  err << "translated " << n << " images into " << t.out << "\n";
  return kExitOk;
}

int do_segment_train(SegmentTrain& s, std::ostream& err) {
  std::vector<fs::path> outputs{s.out};
  if (!s.history.empty()) outputs.push_back(s.history);
  guard_outputs(outputs, s.overwrite);

  ToyUNetConfig config;
  config.seed = s.seed;
  if (s.o_depth->count()) config.depth = s.depth;
  if (s.o_base->count()) config.base_channels = s.base_channels;
  if (s.o_size->count()) config.input_size = s.input_size;
  if (s.o_epochs->count()) config.max_epochs = s.max_epochs;
  if (s.o_patience->count()) config.patience = s.patience;
  if (s.o_batch->count()) config.batch_size = s.batch_size;
  stage("config", [&] {
    if (s.learning_rate != "auto") config.learning_rate = std::stod(s.learning_rate);
    validate(config);
    return 0;
  });
  SplitFractions fractions;
  if (!s.split.empty()) {
    if (s.split.size() != 3) throw UsageError("--split takes three fractions: train val test");
    fractions = {s.split[0], s.split[1], s.split[2]};
  }

  auto [train, val] = stage("load", [&] {
    std::vector<SegmentationSample> all = load_samples(manifest_from(s.train, DomainRole::source));
    if (!s.val.empty()) return std::pair{all, load_samples(manifest_from(s.val, DomainRole::source))};
    SampleSplit split = split_samples(std::move(all), fractions, s.seed);
    err << "split: " << split.train.size() << " train, " << split.val.size() << " val, " << split.test.size()
        << " held out\n";
    return std::pair{std::move(split.train), std::move(split.val)};
  });
  UNetTrainOptions options;
  options.on_epoch = [&](const EpochRecord& r) {
    err << "epoch " << r.epoch << ": loss " << number(r.train_loss) << ", val IoU " << number(r.val_iou) << "\n";
  };
  const UNetTrainResult result = stage("train", [&] { return train_unet(config, train, val, options); });
  stage("write", [&] {
    result.model->save(s.out);
    if (!s.history.empty()) {
      std::string csv = "epoch,train_loss,val_iou\n";
      for (const auto& r : result.state.history)
        csv += std::to_string(r.epoch) + "," + number(r.train_loss) + "," + number(r.val_iou) + "\n";
      write_text_atomic(s.history, csv);
    }
    return 0;
  });
  err << "best val IoU " << number(result.state.best_val_iou) << " at epoch " << result.state.best_epoch
      << " (learning rate " << number(result.learning_rate) << "); wrote " << s.out << "\n";
  return kExitOk;
}

int do_evaluate(Evaluate& e, std::ostream& out, std::ostream& err) {
  std::vector<fs::path> outputs;
  if (e.out != "-") outputs.push_back(e.out);
  if (!e.per_image.empty()) outputs.push_back(e.per_image);
  guard_outputs(outputs, e.overwrite);
  const ReportFormat format = resolve_format(e.format, e.out);
  if (e.models.empty() && e.adapters.empty()) throw UsageError("give at least one --model or --adapter");

  std::vector<std::pair<std::string, DatasetManifest>> datasets;
  for (const auto& spec : e.methods) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--method expects NAME=DATASET, got '" + spec + "'");
    datasets.emplace_back(spec.substr(0, eq), DatasetManifest{});
  }

  std::vector<std::shared_ptr<SegmentationModelAdapter>> adapters = stage("load", [&] {
    const AdapterRegistry registry = make_default_adapter_registry();
    std::vector<std::shared_ptr<SegmentationModelAdapter>> list;
    for (const auto& m : e.models) {
      const auto eq = m.find('=');
      const std::string path = eq == std::string::npos ? m : m.substr(eq + 1);
      list.push_back(registry.create({{"type", "toy-unet"}, {"checkpoint", path}}));
    }
    for (const auto& a : e.adapters) {
      const nlohmann::json doc = nlohmann::json::parse(read_text(a));
      if (doc.is_array()) {
        for (const auto& d : doc) list.push_back(registry.create(d));
      } else {
        list.push_back(registry.create(doc));
      }
    }
    return list;
  });
  std::vector<std::string> model_names;
  for (std::size_t i = 0; i < adapters.size(); ++i) {
    const auto eq = i < e.models.size() ? e.models[i].find('=') : std::string::npos;
    model_names.push_back(eq == std::string::npos ? adapters[i]->name() + (adapters.size() > 1 ? "-" + std::to_string(i + 1) : "")
                                                  : e.models[i].substr(0, eq));
  }

  const DatasetManifest base = stage("load", [&] { return manifest_from(e.baseline, DomainRole::target); });
  for (std::size_t i = 0; i < e.methods.size(); ++i) {
    const auto& spec = e.methods[i];
    datasets[i].second = stage("load", [&] { return manifest_from(spec.substr(spec.find('=') + 1), DomainRole::target); });
  }

  EvaluationReport report;
  report.models = model_names;
  report.baseline.method = "base";
  std::string per_image = "model,dataset,image,iou,note\n";
  nlohmann::ordered_json flags = nlohmann::ordered_json::object();
  auto score = [&](const std::string& label, const DatasetManifest& data) {
    std::vector<double> values;
    for (std::size_t m = 0; m < adapters.size(); ++m) {
      err << "evaluating " << report.models[m] << " on " << label << "\n";
      const DatasetEvaluation ev = stage("evaluate", [&] { return evaluate_dataset(*adapters[m], data); });
      values.push_back(ev.mean_iou_percent);
      for (const auto& s : ev.per_image) {
        const std::string note = !s.iou ? "missing-mask" : (s.both_empty ? "both-empty" : "");
        per_image += report.models[m] + "," + label + "," + s.image + "," + (s.iou ? number(*s.iou) : "") + "," + note + "\n";
      }
      if (!ev.missing_masks.empty() || !ev.empty_agreements.empty())
        flags[report.models[m] + "/" + label] = {{"missing_masks", ev.missing_masks},
                                                 {"both_empty", ev.empty_agreements}};
    }
    return values;
  };
  report.baseline.values = score("base", base);
  for (const auto& [name, data] : datasets) report.rows.push_back({name, score(name, data)});
  report.metadata["datasets"] = nlohmann::ordered_json::object();
  report.metadata["datasets"]["base"] = base.name;
  for (const auto& [name, data] : datasets) report.metadata["datasets"][name] = data.name;
  report.metadata["flags"] = flags;

  stage("write", [&] {
    write_output(e.out, render_report(report, format), out);
    if (!e.per_image.empty()) write_text_atomic(e.per_image, per_image);
    return 0;
  });
  return kExitOk;
}

int do_benchmark(Benchmark& b, std::ostream& out, std::ostream& err) {
  std::vector<fs::path> outputs;
  if (b.out != "-") outputs.push_back(b.out);
  guard_outputs(outputs, b.overwrite);
  const ReportFormat format = resolve_format(b.format, b.out);

  SyntheticBenchmarkSpec spec;
  spec.seed = b.seed;
  if (b.o_images->count()) spec.images_per_domain = b.images;
  if (b.o_size->count()) spec.image_size = b.image_size;

  BenchmarkOptions options;
  options.transform = b.transform;
  options.unet.seed = b.seed;
  options.unet.input_size = spec.image_size;
  if (b.o_epochs->count()) options.unet.max_epochs = b.max_epochs;
  if (b.o_patience->count()) options.unet.patience = b.patience;
  if (!b.unet_lr.empty() && b.unet_lr != "auto") options.unet.learning_rate = std::stod(b.unet_lr);
  options.transfer.seed = b.seed;
  if (b.o_iter->count()) options.transfer.iterations = b.iterations;
  if (b.o_cw->count()) options.transfer.content_weight = b.content_weight;
  if (b.o_sw->count()) options.transfer.style_weight = b.style_weight;
  if (b.o_tepochs->count()) {
    const std::vector<std::string> names = translation_algorithm_names();
    if (std::find(names.begin(), names.end(), b.transform) == names.end())
      throw UsageError("--translation-epochs only applies to translation transforms");
    TrainConfig tc = TrainConfig::preset(parse_translation_algorithm(b.transform));
    tc.epochs = b.translation_epochs;
    tc.seed = b.seed;
    options.translation = tc;
  }
  const std::vector<std::string> known = benchmark_transform_names();
  if (std::find(known.begin(), known.end(), b.transform) == known.end())
    throw UnknownAlgorithmError("unknown transform '" + b.transform + "'; registered: " + join(known));
  if (b.transform == "nst" || b.transform == "strotss")
    options.backbone = stage("backbone", [&] { return make_backbone(b.backbone, b.seed, err); });
  if (!b.work_dir.empty()) options.work_dir = fs::path(b.work_dir);
  options.progress = [&](const std::string& msg) { err << msg << "\n"; };

  const BenchmarkResult result = stage("benchmark", [&] { return run_benchmark(spec, options); });
  stage("write", [&] {
    write_output(b.out, render_report(result.report, format), out);
    return 0;
  });
  err << "IoU A-test " << number(result.iou_a_test) << ", B-raw " << number(result.iou_b_raw) << ", B-"
      << b.transform << " " << number(result.iou_b_transformed) << "\n";
  return kExitOk;
}

int do_report(Report& r, std::ostream& out) {
  if (r.out != "-") guard_outputs({r.out}, r.overwrite);
  const EvaluationReport report = stage("load", [&] { return parse_report_json(read_text(r.in)); });
  const ReportFormat format = r.format.empty() ? (r.out == "-" ? ReportFormat::text_table : report_format_for_path(r.out))
                                               : parse_report_format(r.format);
  stage("write", [&] {
    write_output(r.out, render_report(report, format), out);
    return 0;
  });
  return kExitOk;
}

}  // namespace

std::vector<std::string> apply_config(const std::vector<std::string>& args) {
  std::vector<std::string> rest;
  std::optional<std::string> config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw UsageError("--config needs a file path");
      config_path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (!config_path) return rest;

  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_text(*config_path));
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("config file " + *config_path + " is not valid JSON: " + e.what());
  } catch (const Error& e) {
    throw UsageError(std::string("cannot read config file: ") + e.what());
  }
  if (!doc.is_object()) throw UsageError("config file must hold a JSON object of \"command.flag\" keys");

  const std::string command = command_key(rest);
  const std::string prefix = command + ".";
  for (const auto& [key, value] : doc.items()) {
    if (key.find('.') == std::string::npos)
      throw UsageError("config key '" + key + "' is not namespaced (expected command.flag)");
    if (command.empty() || key.rfind(prefix, 0) != 0) continue;
    const std::string flag = "--" + key.substr(prefix.size());
    if (has_flag(rest, flag)) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) rest.push_back(flag);
    } else if (value.is_array()) {
      rest.push_back(flag);
      for (const auto& v : value) rest.push_back(scalar_text(v));
    } else {
      rest.push_back(flag);
      rest.push_back(scalar_text(value));
    }
  }
  return rest;
}

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Domain-shift mitigation toolkit: style transfer, unpaired translation, segmentation and "
               "evaluation.\nEvery command also accepts --config FILE (JSON with \"command.flag\" keys; "
               "explicit flags win).",
               "dshift"};
  bool show_version = false;
  app.add_flag("--version", show_version, "Print the version and registered algorithms");
  app.require_subcommand(0, 1);

  Transfer t;
  auto* transfer = app.add_subcommand("transfer", "Style-transfer one content image");
  transfer->add_option("--algorithm", t.algorithm, "Registered algorithm (nst, strotss, ...)")->required();
  transfer->add_option("--style", t.style, "Style image")->required();
  transfer->add_option("--content", t.content, "Content image")->required();
  transfer->add_option("--out", t.out, "Output image")->required();
  t.o_iter = transfer->add_option("--iterations", t.iterations, "Iterations (per scale for strotss)");
  t.o_cw = transfer->add_option("--content-weight", t.content_weight);
  t.o_sw = transfer->add_option("--style-weight", t.style_weight);
  t.o_lr = transfer->add_option("--learning-rate", t.learning_rate);
  t.o_scales = transfer->add_option("--scales", t.scales, "Scales (strotss)");
  t.o_samples = transfer->add_option("--samples", t.samples, "Hypercolumn samples (strotss)");
  t.o_cl = transfer->add_option("--content-layers", t.content_layers);
  t.o_sl = transfer->add_option("--style-layers", t.style_layers);
  transfer->add_option("--seed", t.seed, "Seed for every stochastic step")->default_val(0);
  transfer->add_option("--trace", t.trace, "Write the loss trace as CSV");
  transfer->add_option("--provenance", t.provenance, "Write hyperparameters and provenance as JSON");
  transfer->add_option("--backbone-weights", t.backbone, "Pretrained backbone checkpoint");
  transfer->add_flag("--overwrite", t.overwrite, "Replace existing outputs");

  auto* translate = app.add_subcommand("translate", "Unpaired image-to-image translation");
  translate->require_subcommand(1);
  TranslateTrain tt;
  auto* ttrain = translate->add_subcommand("train", "Train a translation model");
  ttrain->add_option("--algorithm", tt.algorithm, "cyclegan, cut or fastcut")->required();
  ttrain->add_option("--source", tt.source, "Source domain (directory or manifest JSON)")->required();
  ttrain->add_option("--target", tt.target, "Target domain (directory or manifest JSON)")->required();
  ttrain->add_option("--out", tt.out, "Checkpoint directory")->required();
  tt.o_epochs = ttrain->add_option("--epochs", tt.epochs);
  tt.o_batch = ttrain->add_option("--batch-size", tt.batch_size);
  tt.o_size = ttrain->add_option("--image-size", tt.image_size);
  tt.o_lr = ttrain->add_option("--learning-rate", tt.learning_rate);
  tt.o_cyc = ttrain->add_option("--cycle-weight", tt.cycle_weight);
  tt.o_idt = ttrain->add_option("--identity-weight", tt.identity_weight);
  tt.o_nce = ttrain->add_option("--nce-weight", tt.nce_weight);
  ttrain->add_option("--seed", tt.seed)->default_val(0);
  ttrain->add_flag("--overwrite", tt.overwrite);

  TranslateApply ta;
  auto* tapply = translate->add_subcommand("apply", "Translate a directory of images");
  tapply->add_option("--model", ta.model, "Model checkpoint")->required();
  tapply->add_option("--direction", ta.direction, "source-to-target or target-to-source")
      ->default_val("target-to-source");
  tapply->add_option("--in", ta.in, "Input directory")->required();
  tapply->add_option("--out", ta.out, "Output directory")->required();
  tapply->add_option("--algorithm", ta.algorithm, "Expected algorithm of the checkpoint");
  tapply->add_flag("--overwrite", ta.overwrite);

  SegmentTrain st;
  auto* segment = app.add_subcommand("segment-train", "Train the toy U-Net");
  segment->add_option("--train", st.train, "Training manifest (or directory with images/ and masks/)")->required();
  segment->add_option("--val", st.val, "Validation manifest; split from --train when omitted");
  segment->add_option("--out", st.out, "Model checkpoint")->required();
  st.o_depth = segment->add_option("--depth", st.depth);
  st.o_base = segment->add_option("--base-channels", st.base_channels);
  st.o_size = segment->add_option("--input-size", st.input_size);
  segment->add_option("--learning-rate", st.learning_rate, "Number or auto (LR range test)")->default_val("auto");
  st.o_epochs = segment->add_option("--max-epochs", st.max_epochs);
  st.o_patience = segment->add_option("--patience", st.patience);
  st.o_batch = segment->add_option("--batch-size", st.batch_size);
  segment->add_option("--split", st.split, "Train/val/test fractions when --val is omitted")->expected(3);
  segment->add_option("--history", st.history, "Write per-epoch history as CSV");
  segment->add_option("--seed", st.seed)->default_val(0);
  segment->add_flag("--overwrite", st.overwrite);

  Evaluate ev;
  auto* evaluate = app.add_subcommand("evaluate", "Score models on datasets and write a report");
  evaluate->add_option("--model", ev.models, "toy-unet checkpoint, optionally NAME=PATH (repeatable)");
  evaluate->add_option("--adapter", ev.adapters, "Adapter description JSON (repeatable)");
  evaluate->add_option("--baseline", ev.baseline, "Untransformed dataset")->required();
  evaluate->add_option("--method", ev.methods, "NAME=DATASET of transformed images (repeatable)");
  evaluate->add_option("--out", ev.out, "Report path (- for stdout)")->required();
  evaluate->add_option("--format", ev.format, "text-table, json or csv (default: from extension)");
  evaluate->add_option("--per-image", ev.per_image, "Write per-image IoU as CSV");
  evaluate->add_flag("--overwrite", ev.overwrite);

  Benchmark bm;
  auto* bench = app.add_subcommand("benchmark", "Run the synthetic domain-shift benchmark");
  bench->add_option("--seed", bm.seed)->default_val(0);
  bench->add_option("--transform", bm.transform, "identity, nst, strotss, cyclegan, cut or fastcut")->default_val("nst");
  bench->add_option("--out", bm.out, "Report path (- for stdout)")->required();
  bench->add_option("--format", bm.format);
  bm.o_images = bench->add_option("--images", bm.images, "Images per domain");
  bm.o_size = bench->add_option("--image-size", bm.image_size);
  bm.o_iter = bench->add_option("--iterations", bm.iterations, "Style-transfer iterations");
  bm.o_cw = bench->add_option("--content-weight", bm.content_weight);
  bm.o_sw = bench->add_option("--style-weight", bm.style_weight);
  bm.o_epochs = bench->add_option("--max-epochs", bm.max_epochs, "U-Net epochs");
  bm.o_patience = bench->add_option("--patience", bm.patience);
  bench->add_option("--unet-learning-rate", bm.unet_lr, "Number or auto");
  bm.o_tepochs = bench->add_option("--translation-epochs", bm.translation_epochs);
  bench->add_option("--work-dir", bm.work_dir, "Keep generated data here");
  bench->add_option("--backbone-weights", bm.backbone);
  bench->add_flag("--overwrite", bm.overwrite);

  Report rp;
  auto* report = app.add_subcommand("report", "Re-render a JSON report");
  report->add_option("--in", rp.in, "Report JSON")->required();
  report->add_option("--out", rp.out, "Output path (- for stdout)")->default_val("-");
  report->add_option("--format", rp.format, "text-table, json or csv");
  report->add_flag("--overwrite", rp.overwrite);

  try {
    std::vector<std::string> args = apply_config(raw_args);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "dshift: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "dshift: " << e.what() << "\n";
    return kExitUsage;
  }

  if (show_version) {
    out << version_text();
    return kExitOk;
  }

  try {
    if (transfer->parsed()) return do_transfer(t, err);
    if (ttrain->parsed()) return do_translate_train(tt, err);
    if (tapply->parsed()) return do_translate_apply(ta, err);
    if (segment->parsed()) return do_segment_train(st, err);
    if (evaluate->parsed()) return do_evaluate(ev, out, err);
    if (bench->parsed()) return do_benchmark(bm, out, err);
    if (report->parsed()) return do_report(rp, out);
    err << "dshift: no command given\n\n" << app.help();
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "dshift: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UnknownAlgorithmError& e) {
    err << "dshift: " << e.what() << "\n";
    return kExitUsage;
  } catch (const StageError& e) {
    err << "dshift: error in " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "dshift: error in stage 'run': " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace dshift::cli
