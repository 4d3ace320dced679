#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "plotadapter/task/catalog.hpp"

namespace pa::task {

/// Step-wise area under the precision-recall curve, Σ_n (R_n - R_{n-1})·P_n.
///
/// Items are ranked by descending score; equal scores keep their original
/// order. Returns nullopt when there are no positive labels.
std::optional<double> average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct ApiResult {
  std::string name;
  std::optional<double> ap;  // empty when the column has no positives
  std::size_t n_pos = 0;
};

struct EvalReport {
  std::string catalog;
  std::size_t n_samples = 0;
  std::vector<ApiResult> per_api;
  /// Mean over APIs with a defined AP.
  double map = 0.0;
  /// One line per API excluded from the mean.
  std::vector<std::string> warnings;

  std::string to_text() const;
  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

/// Per-API AP down the sample axis and their mean.
///
/// scores holds n rows of m values. Throws std::invalid_argument when n is 0,
/// widths disagree with the catalog, or no API has a positive label.
EvalReport mean_average_precision(const std::vector<std::vector<double>>& scores, const std::vector<LabelVector>& labels,
                                  const ApiCatalog& catalog);

}  // namespace pa::task
