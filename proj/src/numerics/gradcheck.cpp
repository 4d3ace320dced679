#include "plotadapter/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>

#include "plotadapter/numerics/rng.hpp"

namespace pa::num {

double relative_error(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-12});
  return std::abs(a - b) / denom;
}

namespace {

void require_deterministic(double first, double second) {
  if (std::memcmp(&first, &second, sizeof(double)) != 0) {
    throw std::runtime_error("finite_difference_check: function is not deterministic");
  }
}

std::vector<std::size_t> pick_indices(std::size_t n, std::size_t limit, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (limit == 0 || limit >= n) return idx;
  for (std::size_t i = 0; i < limit; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
  idx.resize(limit);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

double finite_difference_check(const std::function<double(const Tensor&)>& f, const Tensor& x,
                               const Tensor& analytic_grad, double eps) {
  if (analytic_grad.shape() != x.shape()) throw DimensionError("finite_difference_check: gradient shape mismatch");
  require_deterministic(f(x), f(x));
  Tensor probe = x;
  double worst = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double orig = x.at(i);
    probe.set(i, orig + eps);
    const double up = f(probe);
    probe.set(i, orig - eps);
    const double down = f(probe);
    probe.set(i, orig);
    const double numeric = (up - down) / (2.0 * eps);
    worst = std::max(worst, relative_error(analytic_grad.at(i), numeric));
  }
  return worst;
}

double finite_difference_check(const std::function<Var(Tape&, Var)>& build, const Tensor& x, double eps) {
  Tape tape(x.dtype());
  Var input = tape.leaf(x, true);
  Var loss = build(tape, input);
  tape.backward(loss);
  const Tensor* g = tape.grad(input);
  Tensor analytic = g ? *g : Tensor(x.shape(), x.dtype());
  auto f = [&](const Tensor& t) {
    Tape local(t.dtype());
    return build(local, local.leaf(t, false)).value().item();
  };
  return finite_difference_check(f, x, analytic, eps);
}

GradCheckReport check_parameter_gradients(const ParamList& params, const std::function<Var(Tape&)>& build_loss,
                                          const GradCheckOptions& options) {
  params.zero_grad();
  DType dtype = params.size() ? params[0].value.dtype() : DType::f64;
  {
    Tape tape(dtype);
    tape.backward(build_loss(tape));
  }
  auto evaluate = [&] {
    Tape tape(dtype);
    return build_loss(tape).value().item();
  };
  require_deterministic(evaluate(), evaluate());

  Rng rng(options.seed);
  GradCheckReport report;
  for (auto* p : params) {
    if (!p->trainable) continue;
    const Tensor analytic = p->grad ? *p->grad : Tensor(p->value.shape(), p->value.dtype());
    for (auto i : pick_indices(p->value.numel(), options.max_elements_per_param, rng)) {
      const double orig = p->value.at(i);
      p->value.set(i, orig + options.eps);
      const double up = evaluate();
      p->value.set(i, orig - options.eps);
      const double down = evaluate();
      p->value.set(i, orig);
      const double numeric = (up - down) / (2.0 * options.eps);
      const double err = relative_error(analytic.at(i), numeric);
      ++report.elements_checked;
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_param = p->name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return report;
}

}  // namespace pa::num
