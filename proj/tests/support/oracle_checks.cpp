#include "oracle_checks.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "dshift/evaluation.hpp"
#include "dshift/feature_stats.hpp"
#include "dshift/style_transfer.hpp"
#include "dshift/translation.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

namespace dshift::testing {

namespace {

double max_abs(const oracle::Matrix& a, const oracle::Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) m = std::max(m, std::abs(a[i][j] - b[i][j]));
  return m;
}

int pick(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

FeaturePyramid random_pyramid(std::mt19937_64& rng, const std::vector<int>& channels, int h, int w) {
  FeaturePyramid p;
  for (std::size_t l = 0; l < channels.size(); ++l) {
    p.layer_ids.push_back(static_cast<int>(l));
    const int hl = std::max(1, h >> l);
    const int wl = std::max(1, w >> l);
    p.maps.push_back(random_tensor(rng, {channels[l], hl, wl}, 0.0, 2.0));
  }
  p.input_height = h;
  p.input_width = w;
  return p;
}

std::vector<oracle::Matrix> layers_of(const FeaturePyramid& p, const std::vector<int>& layers) {
  std::vector<oracle::Matrix> out;
  for (int l : layers) out.push_back(channels_of(p.at(l)));
  return out;
}

}  // namespace

OracleCheck check_iou(int instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  OracleCheck r{"iou", instances, 0.0};
  for (int k = 0; k < instances; ++k) {
    const int h = pick(rng, 1, 24);
    const int w = pick(rng, 1, 24);
    std::bernoulli_distribution fg(std::uniform_real_distribution<double>(0.0, 1.0)(rng));
    std::vector<std::uint8_t> a(static_cast<std::size_t>(h) * w);
    std::vector<std::uint8_t> b(a.size());
    for (auto& v : a) v = fg(rng);
    for (auto& v : b) v = fg(rng);
    const double expected = oracle::iou({a.begin(), a.end()}, {b.begin(), b.end()});
    const double got = iou(SegmentationMask(h, w, a), SegmentationMask(h, w, b));
    r.max_error = std::max(r.max_error, std::abs(got - expected));
  }
  return r;
}

OracleCheck check_gram(int instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  OracleCheck r{"gram_matrix", instances, 0.0};
  for (int k = 0; k < instances; ++k) {
    const torch::Tensor map = random_tensor(rng, {pick(rng, 1, 6), pick(rng, 1, 4), pick(rng, 1, 5)});
    r.max_error = std::max(r.max_error, max_abs(matrix_of(gram_matrix(map)), oracle::gram(channels_of(map))));
  }
  return r;
}

OracleCheck check_content_loss(int instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  OracleCheck r{"content_loss", instances, 0.0};
  for (int k = 0; k < instances; ++k) {
    const std::vector<int> channels{pick(rng, 1, 4), pick(rng, 1, 4), pick(rng, 1, 4)};
    const int h = pick(rng, 4, 9);
    const int w = pick(rng, 4, 9);
    const FeaturePyramid a = random_pyramid(rng, channels, h, w);
    const FeaturePyramid b = random_pyramid(rng, channels, h, w);
    std::vector<int> layers{0, 1, 2};
    layers.resize(static_cast<std::size_t>(pick(rng, 1, 3)));
    const double got = scalar_of(content_loss(a, b, layers));
    const double expected = oracle::content(layers_of(a, layers), layers_of(b, layers));
    r.max_error = std::max(r.max_error, std::abs(got - expected));
  }
  return r;
}

OracleCheck check_style_loss(int instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  OracleCheck r{"style_loss", instances, 0.0};
  for (int k = 0; k < instances; ++k) {
    const std::vector<int> channels{pick(rng, 1, 4), pick(rng, 1, 4)};
    const FeaturePyramid a = random_pyramid(rng, channels, pick(rng, 2, 8), pick(rng, 2, 8));
    const FeaturePyramid b = random_pyramid(rng, channels, pick(rng, 2, 8), pick(rng, 2, 8));
    const std::vector<int> layers = k % 2 ? std::vector<int>{0, 1} : std::vector<int>{1};
    const double got = scalar_of(style_loss(a, b, layers));
    const double expected = oracle::style(layers_of(a, layers), layers_of(b, layers));
    r.max_error = std::max(r.max_error, std::abs(got - expected));
  }
  return r;
}

OracleCheck check_remd(int instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  OracleCheck r{"remd_loss", instances, 0.0};
  for (int k = 0; k < instances; ++k) {
    const int d = pick(rng, 2, 6);
    const torch::Tensor a = random_tensor(rng, {pick(rng, 1, 5), d});
    const torch::Tensor b = random_tensor(rng, {pick(rng, 1, 5), d});
    const double got = scalar_of(remd_loss(a, b));
    r.max_error = std::max(r.max_error, std::abs(got - oracle::remd(matrix_of(a), matrix_of(b))));
  }
  return r;
}

OracleCheck check_moment(int instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  OracleCheck r{"moment_matching_loss", instances, 0.0};
  for (int k = 0; k < instances; ++k) {
    const int d = pick(rng, 1, 5);
    const torch::Tensor a = random_tensor(rng, {pick(rng, 1, 8), d});
    const torch::Tensor b = random_tensor(rng, {pick(rng, 1, 8), d});
    const double got = scalar_of(moment_matching_loss(a, b));
    r.max_error = std::max(r.max_error, std::abs(got - oracle::moment(matrix_of(a), matrix_of(b))));
  }
  return r;
}

OracleCheck check_self_similarity(int instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  OracleCheck r{"self_similarity", instances, 0.0};
  for (int k = 0; k < instances; ++k) {
    torch::Tensor v = random_tensor(rng, {8, pick(rng, 2, 6)});
    if (k % 5 == 0) v[3].zero_();
    r.max_error = std::max(r.max_error, max_abs(matrix_of(self_similarity(v)), oracle::self_similarity(matrix_of(v))));
  }
  return r;
}

OracleCheck check_cycle(int instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  OracleCheck r{"cycle_consistency_loss", instances, 0.0};
  GeneratorSpec spec;
  spec.base_channels = 4;
  spec.residual_blocks = 1;
  spec.downsample_steps = 1;
  spec.identity_init = false;
  for (int k = 0; k < instances; ++k) {
    torch::manual_seed(seed + static_cast<std::uint64_t>(k));
    Generator gx(spec);
    Generator gy(spec);
    gx->to(torch::kFloat64);
    gy->to(torch::kFloat64);
    gx->eval();
    gy->eval();
    const ImageMap map_x = [&](const torch::Tensor& t) { return gx->forward(t); };
    const ImageMap map_y = [&](const torch::Tensor& t) { return gy->forward(t); };
    const int s = 4 * pick(rng, 2, 3);
    const torch::Tensor x = random_tensor(rng, {pick(rng, 1, 2), 3, s, s}, 0.0, 1.0);
    const torch::Tensor y = random_tensor(rng, {1, 3, s, s}, 0.0, 1.0);
    torch::NoGradGuard no_grad;
    // Oracle: compose the generators, then a plain L1 loop.
    double expected = oracle::mean_abs_difference(values_of(x), values_of(gy->forward(gx->forward(x))));
    const bool both = k % 2 == 1;
    if (both) expected += oracle::mean_abs_difference(values_of(y), values_of(gx->forward(gy->forward(y))));
    const double got = scalar_of(both ? cycle_consistency_loss(x, map_x, map_y, y) : cycle_consistency_loss(x, map_x, map_y));
    r.max_error = std::max(r.max_error, std::abs(got - expected));
  }
  return r;
}

OracleCheck check_adversarial(int instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  OracleCheck r{"adversarial_loss", instances, 0.0};
  for (int k = 0; k < instances; ++k) {
    const torch::Tensor d = random_tensor(rng, {pick(rng, 1, 3), 1, pick(rng, 1, 6), pick(rng, 1, 6)}, -1.0, 2.0);
    const RealFake label = k % 2 ? RealFake::real : RealFake::fake;
    const double got = scalar_of(adversarial_loss(d, label));
    const double expected = oracle::lsgan(values_of(d), label == RealFake::real ? 1.0 : 0.0);
    r.max_error = std::max(r.max_error, std::abs(got - expected));
  }
  return r;
}

OracleCheck check_patch_nce(int instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  OracleCheck r{"patch_nce_loss", instances, 0.0};
  for (int k = 0; k < instances; ++k) {
    const int p = pick(rng, 2, 6);
    const int d = pick(rng, 2, 8);
    const double tau = std::uniform_real_distribution<double>(0.05, 1.0)(rng);
    const torch::Tensor q = random_tensor(rng, {p, d});
    const torch::Tensor pos = random_tensor(rng, {p, d});
    double got = 0.0;
    double expected = 0.0;
    if (k % 2 == 0) {
      const int kneg = pick(rng, 1, 5);
      const torch::Tensor neg = random_tensor(rng, {p, kneg, d});
      std::vector<oracle::Matrix> negs;
      for (int i = 0; i < p; ++i) negs.push_back(matrix_of(neg[i]));
      got = scalar_of(patch_nce_loss(q, pos, neg, tau));
      expected = oracle::patch_nce(matrix_of(q), matrix_of(pos), negs, tau);
    } else {
      got = scalar_of(patch_nce_loss(q, pos, tau));
      expected = oracle::patch_nce_in_batch(matrix_of(q), matrix_of(pos), tau);
    }
    r.max_error = std::max(r.max_error, std::abs(got - expected));
  }
  return r;
}

std::vector<OracleCheck> all_loss_checks(int instances, std::uint64_t seed) {
  return {check_gram(instances, seed + 1),        check_content_loss(instances, seed + 2),
          check_style_loss(instances, seed + 3),  check_remd(instances, seed + 4),
          check_moment(instances, seed + 5),      check_self_similarity(instances, seed + 6),
          check_cycle(instances, seed + 7),       check_adversarial(instances, seed + 8),
          check_patch_nce(instances, seed + 9)};
}

}  // namespace dshift::testing
