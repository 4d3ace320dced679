#include "plotadapter/registry/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace pa::reg {

Adam::Adam(num::ParamList params, AdamOptions options) : params_(std::move(params)), options_(options) {
  if (!(options_.beta1 >= 0 && options_.beta1 < 1 && options_.beta2 >= 0 && options_.beta2 < 1 && options_.eps > 0))
    throw std::invalid_argument("Adam: betas must be in [0,1) and eps positive");
  for (auto* p : params_) {
    m_.emplace_back(p->value.numel(), 0.0);
    v_.emplace_back(p->value.numel(), 0.0);
  }
}

void Adam::step(double lr) {
  ++t_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_)), c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k];
    if (!p.trainable || !p.grad) continue;
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double g = p.grad->at(i);
      m[i] = b1 * m[i] + (1 - b1) * g;
      v[i] = b2 * v[i] + (1 - b2) * g * g;
      const double update = lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + options_.eps);
      p.value.set(i, p.value.at(i) - update);
    }
  }
}

double cosine_lr(double lr0, double floor, std::size_t t, std::size_t total) {
  if (total == 0) throw std::invalid_argument("cosine_lr: total must be positive");
  const double frac = static_cast<double>(std::min(t, total)) / static_cast<double>(total);
  if (frac == 1.0) return floor;
  return floor + 0.5 * (lr0 - floor) * (1.0 + std::cos(std::numbers::pi * frac));
}

}  // namespace pa::reg
