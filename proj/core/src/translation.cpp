#include "dshift/translation.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include <torch/torch.h>

#include "dshift/checkpoint.hpp"
#include "dshift/errors.hpp"
#include "dshift/fs_util.hpp"

namespace dshift {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kExtensionNames = {"dualgan", "forkgan", "ganilla"};

class SplitMix {
 public:
  explicit SplitMix(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
  std::uint64_t below(std::uint64_t n) { return next() % n; }

 private:
  std::uint64_t state_;
};

std::vector<std::size_t> permutation(std::size_t n, SplitMix& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

void init_weights(torch::nn::Module& module) {
  torch::NoGradGuard no_grad;
  for (auto& item : module.named_parameters(true)) {
    const std::string& name = item.key();
    if (name.size() >= 6 && name.compare(name.size() - 6, 6, "weight") == 0) {
      item.value().normal_(0.0, 0.02);
    } else if (name.size() >= 4 && name.compare(name.size() - 4, 4, "bias") == 0) {
      item.value().zero_();
    }
  }
}

Generator make_generator(const GeneratorSpec& spec) {
  Generator g(spec);
  init_weights(*g);
  if (spec.identity_init) g->zero_head();
  return g;
}

Discriminator make_discriminator(const DiscriminatorSpec& spec) {
  Discriminator d(spec);
  init_weights(*d);
  return d;
}

std::vector<torch::Tensor> load_domain(const DatasetManifest& manifest, int size) {
  std::vector<torch::Tensor> out;
  for (const auto& path : require_valid(manifest)) {
    out.push_back(to_tensor(resize(to_three_channel(load_image(path)), size, size)));
  }
  return out;
}

torch::Tensor gather_batch(const std::vector<torch::Tensor>& images, const std::vector<std::size_t>& order,
                           std::size_t start, int batch) {
  std::vector<torch::Tensor> picked;
  for (int b = 0; b < batch; ++b) picked.push_back(images[order[(start + b) % order.size()]]);
  return torch::stack(picked, 0);
}

double checked(const torch::Tensor& t, std::int64_t step, const char* what) {
  const double v = t.item<double>();
  if (!std::isfinite(v))
    throw DivergenceError(std::string("translation training: non-finite ") + what + " at step " +
                              std::to_string(step),
                          step);
  return v;
}

// PatchNCE between encoder features of `input` and of its translation, averaged over layers
// and images. Sample positions are shared between the two feature sets.
torch::Tensor nce_between(TranslationModel& model, Generator g, const torch::Tensor& input,
                          const torch::Tensor& output, SplitMix& rng) {
  const auto src_layers = g->encode_layers(input);
  const auto out_layers = g->encode_layers(output);
  const int patches = model.config.nce_patches;
  torch::Tensor total;
  int terms = 0;
  for (std::size_t l = 0; l < src_layers.size(); ++l) {
    const auto& src = src_layers[l];
    const auto& out = out_layers[l];
    const std::int64_t h = src.size(2);
    const std::int64_t w = src.size(3);
    const std::int64_t n = std::min<std::int64_t>(patches, h * w);
    if (n < 2) continue;
    for (std::int64_t b = 0; b < src.size(0); ++b) {
      std::vector<std::int64_t> all(static_cast<std::size_t>(h * w));
      std::iota(all.begin(), all.end(), std::int64_t{0});
      for (std::int64_t i = 0; i < n; ++i) {
        std::swap(all[static_cast<std::size_t>(i)],
                  all[static_cast<std::size_t>(i + static_cast<std::int64_t>(
                                                        rng.below(static_cast<std::uint64_t>(h * w - i))))]);
      }
      all.resize(static_cast<std::size_t>(n));
      const torch::Tensor idx = torch::tensor(all, torch::kInt64);
      const torch::Tensor keys = src[b].reshape({src.size(1), h * w}).index_select(1, idx).t();
      const torch::Tensor queries = out[b].reshape({out.size(1), h * w}).index_select(1, idx).t();
      const torch::Tensor loss = patch_nce_loss(model.projector->forward(l, queries),
                                                model.projector->forward(l, keys), model.config.temperature);
      total = total.defined() ? total + loss : loss;
      ++terms;
    }
  }
  if (!total.defined()) throw ArgumentError("PatchNCE: feature maps too small to sample patches");
  return total / static_cast<double>(terms);
}

std::vector<torch::Tensor> collect(std::initializer_list<torch::nn::Module*> modules) {
  std::vector<torch::Tensor> params;
  for (auto* m : modules) {
    if (m == nullptr) continue;
    for (auto& p : m->parameters()) params.push_back(p);
  }
  return params;
}

}  // namespace

std::string to_string(TranslationAlgorithm algorithm) {
  switch (algorithm) {
    case TranslationAlgorithm::cyclegan:
      return "cyclegan";
    case TranslationAlgorithm::cut:
      return "cut";
    case TranslationAlgorithm::fastcut:
      return "fastcut";
  }
  return "?";
}

std::vector<std::string> translation_algorithm_names() { return {"cut", "cyclegan", "fastcut"}; }
std::vector<std::string> translation_extension_names() { return kExtensionNames; }

TranslationAlgorithm parse_translation_algorithm(const std::string& name) {
  if (name == "cyclegan") return TranslationAlgorithm::cyclegan;
  if (name == "cut") return TranslationAlgorithm::cut;
  if (name == "fastcut") return TranslationAlgorithm::fastcut;
  if (std::find(kExtensionNames.begin(), kExtensionNames.end(), name) != kExtensionNames.end())
    throw ExtensionPointError("translation algorithm '" + name +
                              "' is a registered extension point without a built-in implementation; "
                              "built-ins: cyclegan, cut, fastcut");
  throw UnknownAlgorithmError("unknown translation algorithm '" + name +
                              "'; built-ins: cyclegan, cut, fastcut; extension points: dualgan, forkgan, ganilla");
}

std::string to_string(Direction direction) {
  return direction == Direction::source_to_target ? "source-to-target" : "target-to-source";
}

Direction parse_direction(const std::string& text) {
  if (text == "source-to-target") return Direction::source_to_target;
  if (text == "target-to-source") return Direction::target_to_source;
  throw ArgumentError("unknown direction '" + text + "' (expected source-to-target or target-to-source)");
}

TrainConfig TrainConfig::preset(TranslationAlgorithm algorithm) {
  TrainConfig c;
  c.algorithm = algorithm;
  switch (algorithm) {
    case TranslationAlgorithm::cyclegan:
      break;
    case TranslationAlgorithm::cut:
      c.nce_weight = 1.0;
      c.identity_weight = 1.0;
      break;
    case TranslationAlgorithm::fastcut:
      c.nce_weight = 10.0;
      c.identity_weight = 0.0;
      break;
  }
  return c;
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"algorithm", to_string(c.algorithm)},
       {"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"image_size", c.image_size},
       {"learning_rate", c.learning_rate},
       {"beta1", c.beta1},
       {"cycle_weight", c.cycle_weight},
       {"identity_weight", c.identity_weight},
       {"nce_weight", c.nce_weight},
       {"temperature", c.temperature},
       {"nce_patches", c.nce_patches},
       {"pool_size", c.pool_size},
       {"seed", c.seed ? nlohmann::json(*c.seed) : nlohmann::json(nullptr)},
       {"generator", c.generator},
       {"discriminator", c.discriminator}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.algorithm = parse_translation_algorithm(j.at("algorithm").get<std::string>());
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.image_size = j.value("image_size", c.image_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.beta1 = j.value("beta1", c.beta1);
  c.cycle_weight = j.value("cycle_weight", c.cycle_weight);
  c.identity_weight = j.value("identity_weight", c.identity_weight);
  c.nce_weight = j.value("nce_weight", c.nce_weight);
  c.temperature = j.value("temperature", c.temperature);
  c.nce_patches = j.value("nce_patches", c.nce_patches);
  c.pool_size = j.value("pool_size", c.pool_size);
  if (j.contains("seed") && !j.at("seed").is_null()) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("generator")) c.generator = j.at("generator").get<GeneratorSpec>();
  if (j.contains("discriminator")) c.discriminator = j.at("discriminator").get<DiscriminatorSpec>();
}

void validate(const TrainConfig& c) {
  if (!c.seed) throw ArgumentError("translation training requires an explicit seed");
  if (c.epochs < 0) throw ArgumentError("epochs must be >= 0");
  if (c.batch_size < 1) throw ArgumentError("batch_size must be >= 1");
  if (c.image_size < 16) throw ArgumentError("image_size must be >= 16");
  if (!(c.learning_rate > 0.0)) throw ArgumentError("learning_rate must be > 0");
  if (c.cycle_weight < 0 || c.identity_weight < 0 || c.nce_weight < 0)
    throw ArgumentError("loss weights must be >= 0");
  if (!(c.temperature > 0.0)) throw ArgumentError("temperature must be > 0");
  if (c.algorithm == TranslationAlgorithm::fastcut && c.identity_weight != 0.0)
    throw ArgumentError("fastcut does not use an identity term; identity_weight must be 0");
}

bool TranslationModel::supports(Direction direction) const {
  return direction == Direction::source_to_target ? static_cast<bool>(g_source_to_target)
                                                  : static_cast<bool>(g_target_to_source);
}

Generator TranslationModel::generator_for(Direction direction) const {
  if (!supports(direction))
    throw UnsupportedDirectionError(to_string(algorithm) + " model was not trained for direction " +
                                    to_string(direction));
  return direction == Direction::source_to_target ? g_source_to_target : g_target_to_source;
}

TranslationModel make_translation_model(const TrainConfig& config) {
  validate(config);
  torch::manual_seed(*config.seed);
  TranslationModel model;
  model.algorithm = config.algorithm;
  model.config = config;
  model.g_target_to_source = make_generator(config.generator);
  model.d_source = make_discriminator(config.discriminator);
  if (config.algorithm == TranslationAlgorithm::cyclegan) {
    model.g_source_to_target = make_generator(config.generator);
    model.d_target = make_discriminator(config.discriminator);
  } else {
    model.projector = PatchProjector(model.g_target_to_source->encoder_channels(), 64);
    init_weights(*model.projector);
  }
  return model;
}

TranslationModel train_translation(const std::vector<torch::Tensor>& source, const std::vector<torch::Tensor>& target,
                                   const TrainConfig& config, const TrainOptions& options) {
  if (source.empty() || target.empty()) throw ArgumentError("both domains need at least one image");
  TranslationModel model = make_translation_model(config);
  const bool cyclegan = config.algorithm == TranslationAlgorithm::cyclegan;

  auto& gy = model.g_target_to_source;  // target -> source
  auto& gx = model.g_source_to_target;  // source -> target (cyclegan only)
  std::vector<torch::Tensor> g_params =
      collect({gy.get(), cyclegan ? static_cast<torch::nn::Module*>(gx.get()) : nullptr,
               cyclegan ? nullptr : static_cast<torch::nn::Module*>(model.projector.get())});
  std::vector<torch::Tensor> d_params =
      collect({model.d_source.get(), cyclegan ? static_cast<torch::nn::Module*>(model.d_target.get()) : nullptr});
  const auto adam = torch::optim::AdamOptions(config.learning_rate).betas({config.beta1, 0.999});
  torch::optim::Adam g_opt(g_params, adam);
  torch::optim::Adam d_opt(d_params, adam);

  SplitMix rng(*config.seed ^ 0xD1B54A32D192ED03ULL);
  ImagePool pool_source(config.pool_size, *config.seed + 1);
  ImagePool pool_target(config.pool_size, *config.seed + 2);

  const std::size_t steps_per_epoch =
      (std::max(source.size(), target.size()) + static_cast<std::size_t>(config.batch_size) - 1) /
      static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto order_x = permutation(source.size(), rng);
    const auto order_y = permutation(target.size(), rng);
    EpochLosses sums{epoch, 0, 0, 0, 0, 0, 0};

    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      const std::size_t start = s * static_cast<std::size_t>(config.batch_size);
      const torch::Tensor x = gather_batch(source, order_x, start, config.batch_size);
      const torch::Tensor y = gather_batch(target, order_y, start, config.batch_size);
      StepLosses rec;
      rec.step = model.step;

      // Generator update.
      g_opt.zero_grad();
      torch::Tensor fake_x = gy->forward(y);
      torch::Tensor fake_y;
      torch::Tensor g_total;
      if (cyclegan) {
        fake_y = gx->forward(x);
        const torch::Tensor adv = adversarial_loss(model.d_target->forward(fake_y), RealFake::real) +
                                  adversarial_loss(model.d_source->forward(fake_x), RealFake::real);
        const torch::Tensor cyc = (gy->forward(fake_y) - x).abs().mean() + (gx->forward(fake_x) - y).abs().mean();
        torch::Tensor idt = torch::zeros({}, x.options());
        if (config.identity_weight > 0.0)
          idt = (gx->forward(y) - y).abs().mean() + (gy->forward(x) - x).abs().mean();
        g_total = adv + config.cycle_weight * cyc + config.identity_weight * idt;
        rec.adversarial = checked(adv, model.step, "adversarial loss");
        rec.cycle = checked(cyc, model.step, "cycle loss");
        rec.identity = checked(idt, model.step, "identity loss");
      } else {
        const torch::Tensor adv = adversarial_loss(model.d_source->forward(fake_x), RealFake::real);
        torch::Tensor nce = nce_between(model, gy, y, fake_x, rng);
        if (config.identity_weight > 0.0) {
          const torch::Tensor idt = nce_between(model, gy, x, gy->forward(x), rng);
          rec.identity = checked(idt, model.step, "identity NCE loss");
          nce = 0.5 * (nce + idt);
        }
        g_total = adv + config.nce_weight * nce;
        rec.adversarial = checked(adv, model.step, "adversarial loss");
        rec.nce = checked(nce, model.step, "NCE loss");
      }
      rec.generator_total = checked(g_total, model.step, "generator loss");
      g_total.backward();
      g_opt.step();

      // Discriminator update on pooled fakes.
      d_opt.zero_grad();
      const torch::Tensor pooled_x = pool_source.query(fake_x.detach());
      torch::Tensor d_loss = 0.5 * (adversarial_loss(model.d_source->forward(x), RealFake::real) +
                                    adversarial_loss(model.d_source->forward(pooled_x), RealFake::fake));
      if (cyclegan) {
        const torch::Tensor pooled_y = pool_target.query(fake_y.detach());
        d_loss = d_loss + 0.5 * (adversarial_loss(model.d_target->forward(y), RealFake::real) +
                                 adversarial_loss(model.d_target->forward(pooled_y), RealFake::fake));
      }
      rec.discriminator = checked(d_loss, model.step, "discriminator loss");
      d_loss.backward();
      d_opt.step();

      sums.generator_total += rec.generator_total;
      sums.adversarial += rec.adversarial;
      sums.cycle += rec.cycle;
      sums.identity += rec.identity;
      sums.nce += rec.nce;
      sums.discriminator += rec.discriminator;
      model.steps.push_back(rec);
      ++model.step;
    }

    const double n = static_cast<double>(steps_per_epoch);
    EpochLosses mean{epoch,      sums.generator_total / n, sums.adversarial / n, sums.cycle / n,
                     sums.identity / n, sums.nce / n,         sums.discriminator / n};
    model.epochs.push_back(mean);
    if (options.on_epoch) options.on_epoch(mean);
    if (options.checkpoint_dir) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%04d.ckpt", epoch);
      save_translation_model(model, *options.checkpoint_dir / name);
    }
  }
  return model;
}

TranslationModel train_translation(const DomainPair& pair, const TrainConfig& config, const TrainOptions& options) {
  validate(config);
  const auto source = load_domain(pair.source, config.image_size);
  const auto target = load_domain(pair.target, config.image_size);
  return train_translation(source, target, config, options);
}

ImageRaster translate_image(const TranslationModel& model, const ImageRaster& image, Direction direction) {
  Generator g = model.generator_for(direction);
  torch::NoGradGuard no_grad;
  const int size = model.config.image_size;
  const ImageRaster rgb = to_three_channel(image);
  const ImageRaster input = resize(rgb, size, size);
  const torch::Tensor out = g->forward(to_tensor(input));
  const ImageRaster translated = raster_from_tensor(out, image.source_bit_depth(), image.source_format());
  return resize(translated, image.height(), image.width());
}

std::size_t translate_images(const TranslationModel& model, const fs::path& input_dir, Direction direction,
                             const fs::path& output_dir) {
  model.generator_for(direction);  // reject unsupported directions before any work
  if (!fs::is_directory(input_dir)) throw NotFoundError("input directory not found: " + input_dir.string());
  fs::create_directories(output_dir);
  std::size_t written = 0;
  for (const auto& path : list_images(input_dir)) {
    const ImageRaster image = load_image(path);
    const ImageRaster out = translate_image(model, image, direction);
    const int depth = format_from_path(path) == ImageFormat::jpg ? 8 : image.source_bit_depth();
    commit_atomic(output_dir / path.filename(), [&](const fs::path& staged) { save_image(out, staged, depth); });
    ++written;
  }
  return written;
}

void save_translation_model(const TranslationModel& model, const fs::path& path) {
  Checkpoint ckpt;
  ckpt.algorithm = to_string(model.algorithm);
  ckpt.config = {{"train_config", model.config}, {"step", model.step}};
  if (model.g_source_to_target) append_module_state(ckpt, *model.g_source_to_target, "g_source_to_target.");
  if (model.g_target_to_source) append_module_state(ckpt, *model.g_target_to_source, "g_target_to_source.");
  if (model.d_source) append_module_state(ckpt, *model.d_source, "d_source.");
  if (model.d_target) append_module_state(ckpt, *model.d_target, "d_target.");
  if (model.projector) append_module_state(ckpt, *model.projector, "projector.");
  save_checkpoint_file(ckpt, path);
}

TranslationModel load_translation_model(const fs::path& path, std::optional<TranslationAlgorithm> expected) {
  const Checkpoint ckpt = load_checkpoint_file(path);
  TranslationAlgorithm algorithm;
  try {
    algorithm = parse_translation_algorithm(ckpt.algorithm);
  } catch (const Error&) {
    throw CompatibilityError("checkpoint holds '" + ckpt.algorithm + "', not a translation model");
  }
  if (expected && *expected != algorithm)
    throw CompatibilityError("checkpoint holds a " + ckpt.algorithm + " model, expected " + to_string(*expected));

  TrainConfig config = ckpt.config.at("train_config").get<TrainConfig>();
  TranslationModel model = make_translation_model(config);
  model.step = ckpt.config.value("step", std::int64_t{0});
  if (model.g_source_to_target) restore_module_state(ckpt, *model.g_source_to_target, "g_source_to_target.");
  if (model.g_target_to_source) restore_module_state(ckpt, *model.g_target_to_source, "g_target_to_source.");
  if (model.d_source) restore_module_state(ckpt, *model.d_source, "d_source.");
  if (model.d_target) restore_module_state(ckpt, *model.d_target, "d_target.");
  if (model.projector) restore_module_state(ckpt, *model.projector, "projector.");
  return model;
}

}  // namespace dshift
