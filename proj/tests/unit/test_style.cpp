#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dshift/errors.hpp"
#include "dshift/evaluation.hpp"
#include "dshift/feature_stats.hpp"
#include "dshift/style_transfer.hpp"
#include "oracle_checks.hpp"
#include "test_support.hpp"

namespace dshift {
namespace {

using testing::scalar_of;

std::shared_ptr<const FeatureExtractor> backbone() {
  static const auto ex = std::make_shared<const FeatureExtractor>(FeatureExtractor::random(0));
  return ex;
}

FeaturePyramid single_layer(const torch::Tensor& map) {
  FeaturePyramid p;
  p.layer_ids = {0};
  p.maps = {map};
  p.input_height = static_cast<int>(map.size(1));
  p.input_width = static_cast<int>(map.size(2));
  return p;
}

// Domain-A style (dark disc on light) and a domain-B content image from the synthetic spec.
std::pair<ImageRaster, ImageRaster> domain_pair_images() {
  SyntheticBenchmarkSpec spec;
  spec.images_per_domain = 2;
  const auto a = synthesize_domain(spec, 'A');
  const auto b = synthesize_domain(spec, 'B');
  return {a[0].image, b[1].image};
}

// Registry -------------------------------------------------------------------

TEST(Registry, RegisterListAndConflicts) {
  AlgorithmRegistry reg;
  reg.register_algorithm("nst", [](const StyleTransferRequest& r) { return TransferResult{r.content_image}; });
  reg.register_algorithm("alpha", [](const StyleTransferRequest& r) { return TransferResult{r.content_image}; });
  EXPECT_EQ(reg.names(), (std::vector<std::string>{"alpha", "nst"}));
  EXPECT_THROW(reg.register_algorithm("nst", {}), ConflictError);
  reg.freeze();
  EXPECT_THROW(reg.register_algorithm("late", {}), StateError);
}

TEST(Registry, DefaultRegistryAndDiaStub) {
  const AlgorithmRegistry reg = make_default_registry(backbone());
  EXPECT_EQ(reg.names(), (std::vector<std::string>{"dia", "nst", "strotss"}));
  const ImageRaster img = ImageRaster::filled(16, 16, 3, 0.5f);
  try {
    run_transfer(reg, {img, img, "dia", {}});
    FAIL() << "expected ExtensionPointError";
  } catch (const ExtensionPointError& e) {
    EXPECT_NE(std::string(e.what()).find("not implemented"), std::string::npos);
  }
}

TEST(Registry, UnknownAlgorithmListsRegistered) {
  const AlgorithmRegistry reg = make_default_registry(backbone());
  const ImageRaster img = ImageRaster::filled(16, 16, 3, 0.5f);
  try {
    run_transfer(reg, {img, img, "unknown", {}});
    FAIL() << "expected UnknownAlgorithmError";
  } catch (const UnknownAlgorithmError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("nst"), std::string::npos);
    EXPECT_NE(msg.find("strotss"), std::string::npos);
  }
}

TEST(Registry, RequestValidation) {
  const AlgorithmRegistry reg = make_default_registry(backbone());
  const ImageRaster img = ImageRaster::filled(16, 16, 3, 0.5f);
  TransferParams p;
  p.iterations = -1;
  EXPECT_THROW(run_transfer(reg, {img, img, "nst", p}), ArgumentError);
  p = {};
  p.style_weight = -2.0;
  EXPECT_THROW(run_transfer(reg, {img, img, "nst", p}), ArgumentError);
}

// Losses ---------------------------------------------------------------------

TEST(ContentLoss, HandComputedCases) {
  std::mt19937_64 rng(1);
  const torch::Tensor m = testing::random_tensor(rng, {3, 4, 4});
  const std::vector<int> layers{0};
  EXPECT_EQ(scalar_of(content_loss(single_layer(m), single_layer(m), layers)), 0.0);
  EXPECT_DOUBLE_EQ(scalar_of(content_loss(single_layer(m + 1.0), single_layer(m), layers)), 1.0);
  EXPECT_THROW(content_loss(single_layer(m), single_layer(torch::zeros({3, 4, 5}, torch::kFloat64)), layers),
               ContractError);
}

TEST(ContentLoss, MatchesElementwiseOracle) { EXPECT_LT(testing::check_content_loss(60, 31).max_error, 1e-6); }

TEST(StyleLoss, HandComputedCases) {
  const std::vector<int> layers{0};
  const FeaturePyramid one = single_layer(torch::ones({1, 2, 2}, torch::kFloat64));
  const FeaturePyramid zero = single_layer(torch::zeros({1, 3, 1}, torch::kFloat64));
  EXPECT_EQ(scalar_of(style_loss(one, one, layers)), 0.0);
  EXPECT_DOUBLE_EQ(scalar_of(style_loss(one, zero, layers)), 1.0);
  EXPECT_THROW(style_loss(one, single_layer(torch::ones({2, 2, 2}, torch::kFloat64)), layers), ContractError);
}

TEST(StyleLoss, MatchesGramThenMseOracle) { EXPECT_LT(testing::check_style_loss(60, 37).max_error, 1e-6); }

TEST(Remd, HandComputedCases) {
  std::mt19937_64 rng(3);
  const torch::Tensor a = testing::random_tensor(rng, {4, 3});
  EXPECT_NEAR(scalar_of(remd_loss(a, a)), 0.0, 1e-12);
  const torch::Tensor x = torch::tensor({{1.0, 0.0}}, torch::kFloat64);
  const torch::Tensor y = torch::tensor({{1.0, 1.0}}, torch::kFloat64);
  EXPECT_NEAR(scalar_of(remd_loss(x, y)), 1.0 - 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_THROW(remd_loss(torch::zeros({0, 2}), y), ArgumentError);
}

TEST(Remd, ThreeByThreeMatchesCostMatrixOracle) {
  std::mt19937_64 rng(4);
  for (int k = 0; k < 20; ++k) {
    const torch::Tensor a = testing::random_tensor(rng, {3, 3});
    const torch::Tensor b = testing::random_tensor(rng, {3, 3});
    EXPECT_NEAR(scalar_of(remd_loss(a, b)), oracle::remd(testing::matrix_of(a), testing::matrix_of(b)), 1e-6);
  }
  EXPECT_LT(testing::check_remd(60, 41).max_error, 1e-6);
}

TEST(Remd, SymmetricAndBoundedByMaxPairwiseDistance) {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 30; ++k) {
    const torch::Tensor a = testing::random_tensor(rng, {1 + k % 5, 4});
    const torch::Tensor b = testing::random_tensor(rng, {1 + (k * 3) % 6, 4});
    const double ab = scalar_of(remd_loss(a, b));
    EXPECT_NEAR(ab, scalar_of(remd_loss(b, a)), 1e-12);
    EXPECT_LE(ab, scalar_of(cosine_distance_matrix(a, b).max()) + 1e-12);
  }
}

TEST(Moment, HandComputedCases) {
  std::mt19937_64 rng(6);
  const torch::Tensor a = testing::random_tensor(rng, {6, 3});
  EXPECT_EQ(scalar_of(moment_matching_loss(a, a)), 0.0);
  EXPECT_NEAR(scalar_of(moment_matching_loss(a + 1.0, a)), 1.0, 1e-12);
  EXPECT_THROW(moment_matching_loss(a, torch::zeros({2, 2}, torch::kFloat64)), ContractError);
}

TEST(Moment, MatchesDirectStatisticsOracle) { EXPECT_LT(testing::check_moment(60, 43).max_error, 1e-6); }

// NST ------------------------------------------------------------------------

TEST(Nst, IdenticalStyleAndContentWithZeroIterations) {
  std::mt19937_64 rng(7);
  const ImageRaster img = testing::random_raster(rng, 32, 32);
  TransferParams p;
  p.iterations = 0;
  const TransferResult r = nst_transfer({img, img, "nst", p}, *backbone());
  EXPECT_EQ(r.output_image, img);
  ASSERT_EQ(r.loss_trace.size(), 1u);
  EXPECT_EQ(r.loss_trace[0].total, 0.0);
}

TEST(Nst, ToyRunLowersTotalAndStyleLoss) {
  const auto [style, content] = domain_pair_images();
  TransferParams p;
  p.iterations = 50;
  p.seed = 0;
  const TransferResult r = nst_transfer({style, content, "nst", p}, *backbone());
  EXPECT_LT(r.scales.at(0).final_objective, r.loss_trace.front().total);

  const std::vector<int> layers = r.hyperparams.at("style_layers").get<std::vector<int>>();
  const FeaturePyramid fs = backbone()->extract(style);
  const double before = scalar_of(style_loss(backbone()->extract(content), fs, layers));
  const double after = scalar_of(style_loss(backbone()->extract(r.output_image), fs, layers));
  EXPECT_LT(after, before);
  EXPECT_EQ(r.hyperparams.at("optimizer"), "adam");
}

TEST(Nst, ZeroStyleWeightConvergesTowardContent) {
  std::mt19937_64 rng(9);
  const ImageRaster content = testing::smooth_raster(48, 48, 3, 0.4);
  const ImageRaster noise = testing::random_raster(rng, 48, 48);
  TransferParams p;
  p.style_weight = 0.0;
  const TransferResult r = nst_transfer({content, noise, "nst", p}, *backbone());
  const std::vector<int> layers = r.hyperparams.at("content_layers").get<std::vector<int>>();
  const FeaturePyramid target = backbone()->extract(noise);
  const double out_loss = scalar_of(content_loss(backbone()->extract(r.output_image), target, layers));
  const double noise_loss = scalar_of(content_loss(backbone()->extract(content), target, layers));
  EXPECT_LE(out_loss * 10.0, noise_loss);
}

// STROTSS --------------------------------------------------------------------

TEST(Strotss, IdenticalImagesSingleScaleZeroIterations) {
  const ImageRaster img = testing::smooth_raster(32, 32, 3, 1.1);
  TransferParams p;
  p.scales = 1;
  p.iterations = 0;
  p.samples = 128;
  const TransferResult r = strotss_transfer({img, img, "strotss", p}, *backbone());
  EXPECT_NEAR(r.scales.at(0).initial_objective, 0.0, 1e-6);
  for (std::size_t i = 0; i < img.values().size(); ++i) EXPECT_NEAR(r.output_image.values()[i], img.values()[i], 1e-6);
}

TEST(Strotss, TwoScaleRunDecreasesEveryScale) {
  const auto [style, content] = domain_pair_images();
  TransferParams p;
  p.scales = 2;
  p.iterations = 40;
  p.samples = 256;
  const TransferResult r = strotss_transfer({style, content, "strotss", p}, *backbone());
  ASSERT_EQ(r.scales.size(), 2u);
  for (const auto& s : r.scales) EXPECT_LT(s.final_objective, s.initial_objective) << "scale " << s.scale;
  EXPECT_EQ(r.output_image.height(), content.height());
  EXPECT_EQ(r.output_image.width(), content.width());
}

// Shared invariants ------------------------------------------------------------

TEST(Transfer, EveryAlgorithmHonoursOutputContract) {
  const AlgorithmRegistry reg = make_default_registry(backbone());
  std::mt19937_64 rng(10);
  const ImageRaster style = testing::random_raster(rng, 24, 40);
  const ImageRaster content = to_three_channel(testing::smooth_raster(36, 28, 1, 0.2));
  for (const auto& name : {"nst", "strotss"}) {
    TransferParams p;
    p.iterations = 5;
    p.scales = 2;
    p.samples = 64;
    const TransferResult r = run_transfer(reg, {style, content, name, p});
    EXPECT_EQ(r.output_image.height(), 36) << name;
    EXPECT_EQ(r.output_image.width(), 28) << name;
    for (float v : r.output_image.values()) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
    ASSERT_FALSE(r.loss_trace.empty());
    for (const auto& rec : r.loss_trace) EXPECT_TRUE(std::isfinite(rec.total));
    EXPECT_EQ(r.algorithm, name);
    EXPECT_TRUE(r.provenance.contains("backbone"));
  }
}

TEST(Transfer, FixedSeedIsBitIdentical) {
  const AlgorithmRegistry reg = make_default_registry(backbone());
  const auto [style, content] = domain_pair_images();
  for (const auto& name : {"nst", "strotss"}) {
    TransferParams p;
    p.iterations = 8;
    p.scales = 2;
    p.samples = 128;
    p.seed = 5;
    const TransferResult a = run_transfer(reg, {style, content, name, p});
    const TransferResult b = run_transfer(reg, {style, content, name, p});
    EXPECT_EQ(a.output_image, b.output_image) << name;
    EXPECT_EQ(loss_trace_csv(a.loss_trace), loss_trace_csv(b.loss_trace)) << name;
  }
}

TEST(PickStyleImage, SeededAndFromManifest) {
  testing::TempDir dir("pick");
  testing::write_disc_dataset(dir.path(), 5, 16, 2, false);
  DatasetManifest m;
  m.name = "d";
  m.image_dir = dir.path() / "images";
  const auto a = pick_style_image(m, 0);
  EXPECT_EQ(a, pick_style_image(m, 0));
  EXPECT_EQ(a.parent_path(), m.image_dir);
}

}  // namespace
}  // namespace dshift
