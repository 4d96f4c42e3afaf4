#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "origami/model.hpp"

namespace origami {

struct OptimSettings {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moments are laid out parallel to the parameter
// registry, so the walk order must stay fixed.
template <class S>
class Adam {
 public:
  Adam(ModelParamsT<S>& params, OptimSettings settings)
      : settings_(settings) {
    params.for_each([&](const std::string&, Mat<S>& p) {
      m_.emplace_back(Mat<S>::Zero(p.rows(), p.cols()));
      v_.emplace_back(Mat<S>::Zero(p.rows(), p.cols()));
    });
  }

  void step(ModelParamsT<S>& params, ModelParamsT<S>& grads, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(settings_.beta1, t_);
    const double bc2 = 1.0 - std::pow(settings_.beta2, t_);
    const S b1 = static_cast<S>(settings_.beta1);
    const S b2 = static_cast<S>(settings_.beta2);
    const S eps = static_cast<S>(settings_.eps);
    std::size_t slot = 0;
    // Walk parameters and gradients in lockstep.
    std::vector<Mat<S>*> gslots;
    grads.for_each([&](const std::string&, Mat<S>& g) { gslots.push_back(&g); });
    params.for_each([&](const std::string&, Mat<S>& p) {
      Mat<S>& g = *gslots[slot];
      Mat<S>& m = m_[slot];
      Mat<S>& v = v_[slot];
      m = b1 * m + (S(1) - b1) * g;
      v = b2 * v + (S(1) - b2) * g.cwiseProduct(g);
      const S alpha = static_cast<S>(lr / bc1);
      const S denom_scale = static_cast<S>(1.0 / std::sqrt(bc2));
      p.array() -=
          alpha * m.array() /
          ((v.array().sqrt() * denom_scale) + eps);
      ++slot;
    });
  }

  std::int64_t steps() const { return t_; }

 private:
  OptimSettings settings_;
  std::vector<Mat<S>> m_, v_;
  std::int64_t t_ = 0;
};

// Cosine decay from lr down to lr * floor_ratio across total_steps.
inline double cosine_lr(double base_lr, std::int64_t step,
                        std::int64_t total_steps, double floor_ratio = 0.0) {
  if (total_steps <= 1) return base_lr;
  double progress =
      std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps - 1));
  double scale = 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
  return base_lr * (floor_ratio + (1.0 - floor_ratio) * scale);
}

}  // namespace origami
