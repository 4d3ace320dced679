#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "plotadapter/numerics/parameter.hpp"
#include "plotadapter/numerics/tape.hpp"

namespace pa::num {

/// |a-b| / max(|a|, |b|, 1e-12)
double relative_error(double a, double b);

/// Central-difference check of an analytic gradient.
///
/// Returns the largest element-wise relative error between analytic_grad and
/// (f(x+eps*e_i) - f(x-eps*e_i)) / (2*eps). Throws std::runtime_error when f
/// is not deterministic.
double finite_difference_check(const std::function<double(const Tensor&)>& f, const Tensor& x,
                               const Tensor& analytic_grad, double eps);

/// Same check where f is built on a fresh tape and the analytic gradient
/// comes from Tape::backward.
double finite_difference_check(const std::function<Var(Tape&, Var)>& build, const Tensor& x, double eps);

struct GradCheckOptions {
  double eps = 1e-6;
  /// 0 checks every element; otherwise a seeded random subset per tensor.
  std::size_t max_elements_per_param = 0;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t elements_checked = 0;
  std::string worst_param;
};

/// Checks every trainable parameter in params against the loss returned by
/// build_loss. Parameter values are perturbed in place and restored.
GradCheckReport check_parameter_gradients(const ParamList& params, const std::function<Var(Tape&)>& build_loss,
                                          const GradCheckOptions& options = {});

}  // namespace pa::num
