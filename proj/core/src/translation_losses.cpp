#include <torch/torch.h>

#include "dshift/errors.hpp"
#include "dshift/translation.hpp"

namespace dshift {

torch::Tensor cycle_consistency_loss(const torch::Tensor& x, const ImageMap& g_x, const ImageMap& g_y,
                                     const torch::Tensor& y) {
  const torch::Tensor x_rec = g_y(g_x(x));
  if (x_rec.sizes() != x.sizes()) throw ContractError("cycle_consistency_loss: reconstruction shape differs");
  torch::Tensor loss = (x - x_rec).abs().mean();
  if (y.defined()) {
    const torch::Tensor y_rec = g_x(g_y(y));
    if (y_rec.sizes() != y.sizes()) throw ContractError("cycle_consistency_loss: reconstruction shape differs");
    loss = loss + (y - y_rec).abs().mean();
  }
  return loss;
}

torch::Tensor adversarial_loss(const torch::Tensor& d_out, RealFake label) {
  const double target = label == RealFake::real ? 1.0 : 0.0;
  return (d_out - target).pow(2).mean();
}

torch::Tensor patch_nce_loss(const torch::Tensor& query, const torch::Tensor& positive,
                             const torch::Tensor& negatives, double temperature) {
  if (!(temperature > 0.0)) throw ArgumentError("patch_nce_loss: temperature must be > 0");
  if (query.dim() != 2 || positive.sizes() != query.sizes())
    throw ContractError("patch_nce_loss: query and positive must both be [P, D]");
  if (negatives.dim() != 3 || negatives.size(0) != query.size(0) || negatives.size(2) != query.size(1))
    throw ContractError("patch_nce_loss: negatives must be [P, K, D]");

  namespace F = torch::nn::functional;
  const auto unit = F::NormalizeFuncOptions().p(2).dim(-1).eps(1e-12);
  const torch::Tensor q = F::normalize(query, unit);
  const torch::Tensor p = F::normalize(positive, unit);
  const torch::Tensor n = F::normalize(negatives, unit);

  const torch::Tensor pos_logit = (q * p).sum(1, true);                   // [P, 1]
  const torch::Tensor neg_logits = torch::bmm(n, q.unsqueeze(2)).squeeze(2);  // [P, K]
  const torch::Tensor logits = torch::cat({pos_logit, neg_logits}, 1) / temperature;
  // Cross-entropy with the positive at index 0.
  return -torch::log_softmax(logits, 1).select(1, 0).mean();
}

torch::Tensor patch_nce_loss(const torch::Tensor& query, const torch::Tensor& positive, double temperature) {
  if (query.dim() != 2 || query.size(0) < 2)
    throw ArgumentError("patch_nce_loss: in-batch negatives need at least two patches");
  const std::int64_t count = query.size(0);
  std::vector<torch::Tensor> rows;
  rows.reserve(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) {
    rows.push_back(torch::cat({positive.slice(0, 0, i), positive.slice(0, i + 1, count)}, 0));
  }
  return patch_nce_loss(query, positive, torch::stack(rows, 0), temperature);
}

ImagePool::ImagePool(int capacity, std::uint64_t seed) : capacity_(capacity), state_(seed ^ 0x5DEECE66DULL) {}

double ImagePool::uniform() {
  // splitmix64
  std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return static_cast<double>(z >> 11) * 0x1.0p-53;
}

torch::Tensor ImagePool::query(const torch::Tensor& images) {
  if (capacity_ <= 0) return images;
  std::vector<torch::Tensor> out;
  for (std::int64_t i = 0; i < images.size(0); ++i) {
    torch::Tensor image = images[i].detach().unsqueeze(0);
    if (static_cast<int>(images_.size()) < capacity_) {
      images_.push_back(image);
      out.push_back(image);
    } else if (uniform() > 0.5) {
      const auto slot = static_cast<std::size_t>(uniform() * static_cast<double>(capacity_)) %
                        static_cast<std::size_t>(capacity_);
      out.push_back(images_[slot].clone());
      images_[slot] = image;
    } else {
      out.push_back(image);
    }
  }
  return torch::cat(out, 0);
}

}  // namespace dshift
