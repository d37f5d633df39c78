#include <benchmark/benchmark.h>

#include <random>

#include "dshift/evaluation.hpp"
#include "dshift/feature_stats.hpp"
#include "dshift/features.hpp"
#include "dshift/style_transfer.hpp"
#include "dshift/translation.hpp"

namespace {

using namespace dshift;

ImageRaster noise_image(int size) {
  std::mt19937 rng(0);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<float> v(static_cast<std::size_t>(3) * size * size);
  for (auto& x : v) x = u(rng);
  return ImageRaster(size, size, 3, std::move(v));
}

void BM_Extract(benchmark::State& state) {
  const FeatureExtractor ex = FeatureExtractor::random(0);
  const ImageRaster img = noise_image(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(ex.extract(img));
}
BENCHMARK(BM_Extract)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_Gram(benchmark::State& state) {
  torch::manual_seed(0);
  const torch::Tensor map = torch::rand({state.range(0), 32, 32});
  for (auto _ : state) benchmark::DoNotOptimize(gram_matrix(map));
}
BENCHMARK(BM_Gram)->Arg(16)->Arg(64);

void BM_Remd(benchmark::State& state) {
  torch::manual_seed(0);
  const torch::Tensor a = torch::rand({state.range(0), 64});
  const torch::Tensor b = torch::rand({state.range(0), 64});
  for (auto _ : state) benchmark::DoNotOptimize(remd_loss(a, b));
}
BENCHMARK(BM_Remd)->Arg(256)->Arg(1024);

void BM_SelfSimilarity(benchmark::State& state) {
  torch::manual_seed(0);
  const torch::Tensor v = torch::rand({state.range(0), 64});
  for (auto _ : state) benchmark::DoNotOptimize(self_similarity(v));
}
BENCHMARK(BM_SelfSimilarity)->Arg(256)->Arg(1024);

void BM_PatchNce(benchmark::State& state) {
  torch::manual_seed(0);
  const torch::Tensor q = torch::rand({state.range(0), 64});
  const torch::Tensor p = torch::rand({state.range(0), 64});
  for (auto _ : state) benchmark::DoNotOptimize(patch_nce_loss(q, p, 0.07));
}
BENCHMARK(BM_PatchNce)->Arg(64)->Arg(256);

void BM_Iou(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937 rng(0);
  std::bernoulli_distribution coin(0.3);
  std::vector<std::uint8_t> a(static_cast<std::size_t>(n) * n), b(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = coin(rng);
    b[i] = coin(rng);
  }
  const SegmentationMask ma(n, n, a), mb(n, n, b);
  for (auto _ : state) benchmark::DoNotOptimize(iou(ma, mb));
}
BENCHMARK(BM_Iou)->Arg(256)->Arg(1024);

}  // namespace
BENCHMARK_MAIN();
