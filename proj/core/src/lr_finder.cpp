#include <cmath>
#include <limits>

#include "dshift/errors.hpp"
#include "dshift/segmentation.hpp"

namespace dshift {

namespace {

constexpr int kMinSteps = 10;
constexpr double kBlowUpFactor = 4.0;

}  // namespace

LrRangeResult lr_range_test(const std::function<double(double)>& step, double lr_min, double lr_max, int steps,
                            double smoothing) {
  if (!(lr_min > 0.0)) throw ArgumentError("lr_min must be > 0");
  if (!(lr_min < lr_max)) throw ArgumentError("lr_min must be smaller than lr_max");
  if (steps < kMinSteps) throw ArgumentError("the LR range test needs at least 10 steps");
  if (smoothing < 0.0 || smoothing >= 1.0) throw ArgumentError("smoothing must lie in [0, 1)");

  LrRangeResult r;
  const double ratio = lr_max / lr_min;
  double average = 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < steps; ++i) {
    const double lr = lr_min * std::pow(ratio, static_cast<double>(i) / static_cast<double>(steps - 1));
    const double loss = step(lr);
    average = smoothing * average + (1.0 - smoothing) * loss;
    const double smoothed = average / (1.0 - std::pow(smoothing, i + 1));
    if (!std::isfinite(loss) || !std::isfinite(smoothed) || smoothed > kBlowUpFactor * best) {
      if (i < kMinSteps)
        throw DivergenceError("loss diverged after " + std::to_string(i) +
                                  " steps of the LR range test; try a smaller lr_max",
                              i);
      break;
    }
    best = std::min(best, smoothed);
    r.learning_rates.push_back(lr);
    r.losses.push_back(loss);
    r.smoothed.push_back(smoothed);
  }

  // Slope per step (uniform in log LR): central differences inside, one-sided at the ends.
  const std::size_t n = r.smoothed.size();
  std::size_t steepest = 0;
  double steepest_slope = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    double slope;
    if (i == 0) {
      slope = r.smoothed[1] - r.smoothed[0];
    } else if (i + 1 == n) {
      slope = r.smoothed[i] - r.smoothed[i - 1];
    } else {
      slope = 0.5 * (r.smoothed[i + 1] - r.smoothed[i - 1]);
    }
    if (slope < steepest_slope) {
      steepest_slope = slope;
      steepest = i;
    }
  }
  r.suggested = r.learning_rates[steepest];
  return r;
}

}  // namespace dshift
