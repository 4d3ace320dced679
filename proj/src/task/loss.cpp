#include "plotadapter/task/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace pa::task {

namespace {

template <class T>
T element_loss(T x, T y) {
  return std::max(x, T(0)) - x * y + std::log1p(std::exp(-std::abs(x)));
}

}  // namespace

num::Var multilabel_soft_margin_loss(num::Var logits, const std::vector<LabelVector>& labels) {
  const auto& shape = logits.shape();
  if (shape.size() != 2) throw num::DimensionError("loss: logits must be [n,m], got " + num::shape_str(shape));
  const std::size_t n = shape[0], m = shape[1];
  if (labels.size() != n)
    throw num::DimensionError("loss: " + std::to_string(labels.size()) + " label vectors for " + std::to_string(n) +
                              " samples");
  std::vector<double> targets;
  targets.reserve(n * m);
  for (const auto& l : labels) {
    if (l.size() != m)
      throw num::DimensionError("loss: label width " + std::to_string(l.size()) + " vs " + std::to_string(m) +
                                " logits");
    for (std::size_t i = 0; i < m; ++i) targets.push_back(l[i]);
  }
  const double norm = 1.0 / static_cast<double>(n * m);

  num::Tensor out({1}, logits.value().dtype());
  num::dispatch(out.dtype(), [&]<class T>() {
    auto x = logits.value().data<T>();
    double acc = 0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += element_loss<double>(x[i], targets[i]);
    out.data<T>()[0] = static_cast<T>(acc * norm);
  });
  return logits.tape().record(
      std::move(out), {logits},
      [targets = std::move(targets), norm](num::BackwardContext& ctx) {
        num::dispatch(ctx.grad_out().dtype(), [&]<class T>() {
          const T g = ctx.grad_out().data<T>()[0];
          auto x = ctx.input(0).data<T>();
          auto gi = ctx.grad_in(0).data<T>();
          for (std::size_t i = 0; i < x.size(); ++i)
            gi[i] += g * static_cast<T>((num::sigmoid_scalar(x[i]) - targets[i]) * norm);
        });
      },
      "multilabel_soft_margin_loss");
}

double multilabel_soft_margin_loss(std::span<const double> logits, const LabelVector& labels) {
  if (logits.size() != labels.size()) throw num::DimensionError("loss: logits and labels differ in length");
  double acc = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) acc += element_loss<double>(logits[i], labels[i]);
  return acc / static_cast<double>(logits.size());
}

}  // namespace pa::task
