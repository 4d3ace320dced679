#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "plotadapter/task/catalog.hpp"

namespace pa::task {

struct RecommendOptions {
  enum class Mode { top_k, threshold };
  Mode mode = Mode::top_k;
  std::size_t k = 3;
  double threshold = 0.5;

  static RecommendOptions top(std::size_t k) { return {Mode::top_k, k, 0.5}; }
  static RecommendOptions at_least(double tau) { return {Mode::threshold, 0, tau}; }
};

struct Recommendation {
  std::string api;
  std::size_t index = 0;
  double probability = 0.0;
};

/// Ranks APIs by σ(logit), descending, ties in catalog order.
///
/// Top-k mode returns k entries (1 <= k <= m). Threshold mode returns every
/// API with σ(logit) >= τ for τ in (0,1), possibly none.
std::vector<Recommendation> recommend(std::span<const double> logits, const ApiCatalog& catalog,
                                      const RecommendOptions& options);

}  // namespace pa::task
