#include "plotadapter/task/recommend.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "plotadapter/numerics/ops.hpp"

namespace pa::task {

std::vector<Recommendation> recommend(std::span<const double> logits, const ApiCatalog& catalog,
                                      const RecommendOptions& options) {
  const std::size_t m = catalog.size();
  if (logits.size() != m)
    throw std::invalid_argument("recommend: " + std::to_string(logits.size()) + " logits for catalog of " +
                                std::to_string(m));
  using Mode = RecommendOptions::Mode;
  if (options.mode == Mode::top_k && (options.k < 1 || options.k > m))
    throw std::invalid_argument("recommend: k must be in [1, " + std::to_string(m) + "]");
  if (options.mode == Mode::threshold && !(options.threshold > 0.0 && options.threshold < 1.0))
    throw std::invalid_argument("recommend: threshold must be in (0, 1)");

  // Ranking on logits matches ranking on σ(logits) but avoids saturation ties.
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return logits[a] > logits[b]; });

  std::vector<Recommendation> out;
  for (std::size_t idx : order) {
    const double p = num::sigmoid_scalar(logits[idx]);
    if (options.mode == Mode::top_k && out.size() == options.k) break;
    if (options.mode == Mode::threshold && p < options.threshold) break;
    out.push_back({catalog.name(idx), idx, p});
  }
  return out;
}

}  // namespace pa::task
