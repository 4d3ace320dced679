#pragma once

#include <span>
#include <vector>

#include "plotadapter/numerics/ops.hpp"
#include "plotadapter/task/catalog.hpp"

namespace pa::task {

/// Multi-label soft-margin loss of logits [n,m] against n label vectors.
///
/// Per sample: -(1/m)·Σ_i [y_i·log σ(x_i) + (1-y_i)·log(1-σ(x_i))], evaluated as
/// max(x,0) - x·y + log(1+exp(-|x|)). The result is the mean over samples.
num::Var multilabel_soft_margin_loss(num::Var logits, const std::vector<LabelVector>& labels);

/// Single-sample reference value in double precision.
double multilabel_soft_margin_loss(std::span<const double> logits, const LabelVector& labels);

}  // namespace pa::task
