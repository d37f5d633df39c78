#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "dshift/errors.hpp"
#include "dshift/evaluation.hpp"
#include "dshift/segmentation.hpp"
#include "test_support.hpp"

namespace dshift {
namespace {

namespace fs = std::filesystem;

DatasetManifest disc_manifest(const fs::path& root, int count, int size, std::uint64_t seed) {
  testing::write_disc_dataset(root, count, size, seed);
  return {"discs", root / "images", root / "masks", DomainRole::source, ""};
}

ToyUNetConfig small_unet() {
  ToyUNetConfig c;
  c.depth = 2;
  c.base_channels = 8;
  c.input_size = 32;
  c.learning_rate = 0.01;
  c.batch_size = 4;
  c.seed = 5;
  return c;
}

TEST(UNetConfig, ValidationAndJson) {
  ToyUNetConfig c = small_unet();
  EXPECT_NO_THROW(validate(c));
  const nlohmann::json j = c;
  EXPECT_EQ(nlohmann::json(j.get<ToyUNetConfig>()), j);
  c.patience = 0;
  EXPECT_THROW(validate(c), ArgumentError);
  c = small_unet();
  c.depth = 0;
  EXPECT_THROW(validate(c), ArgumentError);
}

TEST(UNetNet, OddSizesArePaddedAndCropped) {
  torch::manual_seed(0);
  UNet net(2, 4);
  torch::NoGradGuard no_grad;
  const torch::Tensor y = net->forward(torch::rand({1, 3, 21, 30}));
  EXPECT_EQ(y.sizes(), (std::vector<std::int64_t>{1, 1, 21, 30}));
}

TEST(SegmentationLossTest, PerfectLogitsNearZeroAndShapeChecked) {
  const torch::Tensor target = torch::tensor({0.0f, 1.0f, 1.0f, 0.0f}).reshape({1, 1, 2, 2});
  const torch::Tensor logits = (target * 2 - 1) * 30;
  EXPECT_LT(segmentation_loss(logits, target).item<double>(), 1e-6);
  EXPECT_GT(segmentation_loss(-logits, target).item<double>(), 1.0);
  EXPECT_THROW(segmentation_loss(torch::zeros({1, 1, 2, 3}), target), ContractError);
}

TEST(Samples, LoadAndMissingMask) {
  testing::TempDir dir("seg");
  const DatasetManifest m = disc_manifest(dir.path(), 3, 24, 1);
  const auto samples = load_samples(m);
  ASSERT_EQ(samples.size(), 3u);
  EXPECT_EQ(samples[0].mask.height(), 24);
  fs::remove(dir / "masks" / "img_001.png");
  EXPECT_THROW(load_samples(m), ArgumentError);
}

TEST(Samples, SplitFractionsAndDeterminism) {
  testing::TempDir dir("seg");
  const auto samples = load_samples(disc_manifest(dir.path(), 20, 16, 2));
  const SampleSplit a = split_samples(samples, {}, 3);
  const SampleSplit b = split_samples(samples, {}, 3);
  EXPECT_EQ(a.train.size(), 14u);
  EXPECT_EQ(a.val.size(), 3u);
  EXPECT_EQ(a.test.size(), 3u);
  for (std::size_t i = 0; i < a.train.size(); ++i) EXPECT_EQ(a.train[i].image_path, b.train[i].image_path);
  const SampleSplit small = split_samples(std::vector<SegmentationSample>(samples.begin(), samples.begin() + 3), {}, 0);
  EXPECT_EQ(small.train.size() + small.val.size() + small.test.size(), 3u);
  EXPECT_GE(small.val.size(), 1u);
  EXPECT_GE(small.test.size(), 1u);
}

TEST(EarlyStoppingTest, ConstantStreamStopsAfterPatience) {
  const EarlyStopping stop(3);
  TrainState state;
  int epochs = 0;
  for (int e = 1; e <= 20; ++e) {
    ++epochs;
    if (stop.update(state, {e, 0.5, 0.7})) break;
  }
  EXPECT_EQ(epochs, 4);
  EXPECT_EQ(state.best_epoch, 1);
  EXPECT_THROW(EarlyStopping(0), ArgumentError);
}

TEST(EarlyStoppingTest, OnlyStrictImprovementsResetTheCounter) {
  const EarlyStopping stop(2);
  TrainState state;
  EXPECT_FALSE(stop.update(state, {1, 1.0, 0.5}));
  EXPECT_FALSE(stop.update(state, {2, 1.0, 0.6}));
  EXPECT_FALSE(stop.update(state, {3, 1.0, 0.6}));
  EXPECT_TRUE(stop.update(state, {4, 1.0, 0.55}));
  EXPECT_EQ(state.best_epoch, 2);
  EXPECT_DOUBLE_EQ(state.best_val_iou, 0.6);
  EXPECT_EQ(state.history.size(), 4u);
}

double sigmoid_curve(double lr) { return 1.0 - std::tanh(2.0 * (std::log10(lr) + 2.0)); }

TEST(LrRange, UnsmoothedCurveHitsSteepestPoint) {
  const LrRangeResult r = lr_range_test(sigmoid_curve, 1e-5, 1.0, 101, 0.0);
  EXPECT_NEAR(std::log10(r.suggested), -2.0, 1e-9);
  EXPECT_EQ(r.learning_rates.size(), 101u);
  EXPECT_NEAR(r.learning_rates.front(), 1e-5, 1e-18);
  EXPECT_NEAR(r.learning_rates.back(), 1.0, 1e-12);
}

TEST(LrRange, SmoothedSuggestionMatchesIndependentLoop) {
  const int steps = 80;
  const double beta = 0.9;
  const auto curve = [](double lr) {
    return 2.0 + std::pow(std::log10(lr) + 1.5, 2) + 0.3 * std::sin(7 * std::log10(lr));
  };
  const LrRangeResult r = lr_range_test(curve, 1e-4, 1.0, steps, beta);

  std::vector<double> lrs;
  std::vector<double> smooth;
  double avg = 0.0;
  for (int i = 0; i < steps; ++i) {
    const double lr = std::exp(std::log(1e-4) + i * (std::log(1.0) - std::log(1e-4)) / (steps - 1));
    avg = beta * avg + (1 - beta) * curve(lr);
    lrs.push_back(lr);
    smooth.push_back(avg / (1 - std::pow(beta, i + 1)));
  }
  ASSERT_EQ(r.smoothed.size(), smooth.size());
  std::size_t best = 0;
  double best_slope = 1e300;
  for (std::size_t i = 0; i < smooth.size(); ++i) {
    EXPECT_NEAR(r.smoothed[i], smooth[i], 1e-9);
    const std::size_t lo = i == 0 ? 0 : i - 1;
    const std::size_t hi = i + 1 == smooth.size() ? i : i + 1;
    const double slope = (smooth[hi] - smooth[lo]) / static_cast<double>(hi - lo);
    if (slope < best_slope) {
      best_slope = slope;
      best = i;
    }
  }
  EXPECT_NEAR(r.suggested, lrs[best], 1e-12 * lrs[best]);
  EXPECT_GE(r.suggested, 1e-4);
  EXPECT_LE(r.suggested, 1.0);
}

TEST(LrRange, RejectsBadRangesAndEarlyDivergence) {
  EXPECT_THROW(lr_range_test(sigmoid_curve, 1.0, 1e-3, 50), ArgumentError);
  EXPECT_THROW(lr_range_test(sigmoid_curve, 0.0, 1.0, 50), ArgumentError);
  EXPECT_THROW(lr_range_test(sigmoid_curve, 1e-3, 1.0, 5), ArgumentError);
  const auto exploding = [](double) { return std::numeric_limits<double>::infinity(); };
  EXPECT_THROW(lr_range_test(exploding, 1e-3, 1.0, 50), DivergenceError);
}

TEST(UNetTraining, OverfitsFourImages) {
  testing::TempDir dir("seg");
  const auto samples = load_samples(disc_manifest(dir.path(), 4, 32, 11));
  ToyUNetConfig c = small_unet();
  c.max_epochs = 150;
  c.patience = 150;
  const UNetTrainResult r = train_unet(c, samples, samples);
  const DatasetEvaluation e = evaluate_samples(*r.model, samples);
  EXPECT_GE(e.mean_iou_percent, 90.0);
  EXPECT_DOUBLE_EQ(r.state.best_val_iou * 100.0, e.mean_iou_percent);
}

TEST(UNetTraining, ReturnsBestValidationSnapshotAndStopsEarly) {
  testing::TempDir dir("seg");
  const auto samples = load_samples(disc_manifest(dir.path(), 6, 32, 12));
  ToyUNetConfig c = small_unet();
  c.max_epochs = 12;
  c.patience = 2;
  std::vector<EpochRecord> seen;
  UNetTrainOptions opt;
  opt.on_epoch = [&](const EpochRecord& r) { seen.push_back(r); };
  const std::vector<SegmentationSample> train(samples.begin(), samples.begin() + 4);
  const std::vector<SegmentationSample> val(samples.begin() + 4, samples.end());
  const UNetTrainResult r = train_unet(c, train, val, opt);
  ASSERT_EQ(seen.size(), r.state.history.size());
  double best = -1.0;
  for (const auto& e : seen) best = std::max(best, e.val_iou);
  EXPECT_DOUBLE_EQ(r.state.best_val_iou, best);
  EXPECT_NEAR(evaluate_samples(*r.model, val).mean_iou_percent / 100.0, best, 1e-12);
  if (seen.size() < static_cast<std::size_t>(c.max_epochs))
    EXPECT_EQ(r.state.epochs_since_best, c.patience);
}

TEST(UNetTraining, AutoLearningRateIsRecorded) {
  testing::TempDir dir("seg");
  const auto samples = load_samples(disc_manifest(dir.path(), 4, 32, 13));
  ToyUNetConfig c = small_unet();
  c.learning_rate.reset();
  c.max_epochs = 1;
  c.lr_steps = 20;
  const UNetTrainResult r = train_unet(c, samples, samples);
  ASSERT_TRUE(r.lr_search.has_value());
  EXPECT_EQ(r.learning_rate, r.lr_search->suggested);
  EXPECT_GE(r.learning_rate, c.lr_min);
  EXPECT_LE(r.learning_rate, c.lr_max);
}

TEST(Prediction, SizeDeterminismAndBackground) {
  testing::TempDir dir("seg");
  const auto samples = load_samples(disc_manifest(dir.path(), 4, 32, 14));
  ToyUNetConfig c = small_unet();
  c.max_epochs = 40;
  c.patience = 40;
  const UNetTrainResult r = train_unet(c, samples, samples);
  const ImageRaster odd = resize(samples[0].image, 45, 37);
  const SegmentationMask m1 = predict_mask(*r.model, odd);
  EXPECT_EQ(m1.height(), 45);
  EXPECT_EQ(m1.width(), 37);
  EXPECT_EQ(m1, predict_mask(*r.model, odd));
  const SegmentationMask bg = predict_mask(*r.model, ImageRaster::filled(32, 32, 3, 0.85f));
  EXPECT_LT(bg.foreground_fraction(), 0.05);

  r.model->save(dir / "unet.ckpt");
  const auto back = ToyUNetAdapter::load(dir / "unet.ckpt");
  EXPECT_EQ(predict_mask(*back, odd), m1);
  EXPECT_EQ(back->probability(odd), r.model->probability(odd));
}

TEST(Registry, DefaultToyUNetAndCustomFactories) {
  testing::TempDir dir("seg");
  ToyUNetAdapter model(small_unet());
  model.save(dir / "m.ckpt");
  AdapterRegistry reg = make_default_adapter_registry();
  const auto a = reg.create({{"type", "toy-unet"}, {"checkpoint", (dir / "m.ckpt").string()}});
  EXPECT_EQ(a->name(), "toy-unet");
  EXPECT_THROW(reg.create({{"type", "nope"}}), UnknownAlgorithmError);
  reg.register_factory("all-fg", [](const nlohmann::json&) {
    return std::make_shared<FunctionAdapter>("all-fg", std::pair{8, 8}, [](const ImageRaster& img) {
      return SegmentationMask(img.height(), img.width(),
                              std::vector<std::uint8_t>(static_cast<std::size_t>(img.height()) * img.width(), 1));
    });
  });
  EXPECT_THROW(reg.register_factory("all-fg", {}), ConflictError);
  const auto f = reg.create({{"type", "all-fg"}});
  EXPECT_EQ(predict_mask(*f, ImageRaster::filled(5, 7, 3, 0.1f)).foreground_count(), 35u);
}

}  // namespace
}  // namespace dshift
