#pragma once

#include <cstddef>
#include <vector>

#include "plotadapter/numerics/parameter.hpp"

namespace pa::reg {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  bool operator==(const AdamOptions&) const = default;
};

/// Adam with bias correction. Moments are kept in double precision; only
/// parameters in the list are ever written.
class Adam {
 public:
  Adam(num::ParamList params, AdamOptions options = {});

  /// Applies one update with the current grads; parameters without a grad
  /// are skipped but still advance the step count.
  void step(double lr);
  void zero_grad() const { params_.zero_grad(); }
  std::size_t steps() const { return t_; }
  const num::ParamList& parameters() const { return params_; }

 private:
  num::ParamList params_;
  AdamOptions options_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

/// floor + (lr0 - floor)(1 + cos(pi t / T)) / 2, with t clamped to [0, T].
double cosine_lr(double lr0, double floor, std::size_t t, std::size_t total);

}  // namespace pa::reg
