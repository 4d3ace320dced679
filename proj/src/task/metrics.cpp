#include "plotadapter/task/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace pa::task {

std::optional<double> average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("average_precision: scores and labels differ in length");
  std::size_t total = 0;
  for (auto l : labels) {
    if (l > 1) throw std::invalid_argument("average_precision: labels must be 0 or 1");
    total += l;
  }
  if (total == 0) return std::nullopt;

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  double ap = 0.0;
  std::size_t hits = 0;
  for (std::size_t n = 0; n < order.size(); ++n) {
    if (!labels[order[n]]) continue;
    ++hits;
    // Recall rises by 1/total only at positives.
    ap += static_cast<double>(hits) / static_cast<double>(n + 1);
  }
  return ap / static_cast<double>(total);
}

EvalReport mean_average_precision(const std::vector<std::vector<double>>& scores, const std::vector<LabelVector>& labels,
                                  const ApiCatalog& catalog) {
  const std::size_t n = scores.size(), m = catalog.size();
  if (n == 0) throw std::invalid_argument("mean_average_precision: no samples");
  if (labels.size() != n) throw std::invalid_argument("mean_average_precision: score and label counts differ");
  for (std::size_t i = 0; i < n; ++i)
    if (scores[i].size() != m || labels[i].size() != m)
      throw std::invalid_argument("mean_average_precision: row " + std::to_string(i) + " does not match catalog width " +
                                  std::to_string(m));

  EvalReport report;
  report.catalog = catalog.id();
  report.n_samples = n;
  std::vector<double> column(n);
  std::vector<std::uint8_t> truth(n);
  double sum = 0.0;
  std::size_t defined = 0;
  for (std::size_t j = 0; j < m; ++j) {
    ApiResult r{catalog.name(j), std::nullopt, 0};
    for (std::size_t i = 0; i < n; ++i) {
      column[i] = scores[i][j];
      truth[i] = labels[i][j];
      r.n_pos += truth[i];
    }
    r.ap = average_precision(column, truth);
    if (r.ap) {
      sum += *r.ap;
      ++defined;
    } else {
      report.warnings.push_back("API '" + r.name + "' has no positive samples; excluded from mAP");
    }
    report.per_api.push_back(std::move(r));
  }
  if (defined == 0) throw std::invalid_argument("mean_average_precision: no API has a positive label");
  report.map = sum / static_cast<double>(defined);
  return report;
}

std::string EvalReport::to_text() const {
  std::ostringstream os;
  char buf[160];
  os << "catalog " << catalog << "\n";
  os << "samples " << n_samples << "\n";
  for (const auto& r : per_api) {
    if (r.ap)
      std::snprintf(buf, sizeof buf, "AP %-16s %.4f  n_pos %zu\n", r.name.c_str(), *r.ap, r.n_pos);
    else
      std::snprintf(buf, sizeof buf, "AP %-16s n/a     n_pos %zu\n", r.name.c_str(), r.n_pos);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "mAP %.4f\n", map);
  os << buf;
  for (const auto& w : warnings) os << "warning: " << w << "\n";
  return os.str();
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json apis = nlohmann::json::array();
  for (const auto& r : per_api)
    apis.push_back({{"name", r.name}, {"AP", r.ap ? nlohmann::json(*r.ap) : nlohmann::json(nullptr)}, {"n_pos", r.n_pos}});
  return {{"catalog", catalog}, {"n_samples", n_samples}, {"per_api", apis}, {"mAP", map}, {"warnings", warnings}};
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  EvalReport r;
  r.catalog = j.at("catalog").get<std::string>();
  r.n_samples = j.at("n_samples").get<std::size_t>();
  for (const auto& a : j.at("per_api")) {
    ApiResult x{a.at("name").get<std::string>(), std::nullopt, a.at("n_pos").get<std::size_t>()};
    if (!a.at("AP").is_null()) x.ap = a["AP"].get<double>();
    r.per_api.push_back(std::move(x));
  }
  r.map = j.at("mAP").get<double>();
  if (j.contains("warnings")) r.warnings = j["warnings"].get<std::vector<std::string>>();
  return r;
}

}  // namespace pa::task
