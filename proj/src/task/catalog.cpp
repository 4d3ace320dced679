#include "plotadapter/task/catalog.hpp"

#include <cstdio>
#include <stdexcept>
#include <unordered_set>

namespace pa::task {

ApiCatalog::ApiCatalog(std::string id, std::vector<std::string> apis) : id_(std::move(id)), apis_(std::move(apis)) {
  if (id_.empty()) throw std::invalid_argument("catalog id must not be empty");
  if (apis_.empty()) throw std::invalid_argument("catalog '" + id_ + "' has no APIs");
  std::unordered_set<std::string> seen;
  for (const auto& a : apis_) {
    if (a.empty()) throw std::invalid_argument("catalog '" + id_ + "' has an empty API name");
    if (!seen.insert(a).second) throw std::invalid_argument("catalog '" + id_ + "' repeats API '" + a + "'");
  }
}

const ApiCatalog& ApiCatalog::python13() {
  static const ApiCatalog c("python-13", {"bar", "barh", "boxplot", "broken_barh", "errorbar", "hist", "pie", "plot",
                                          "polar", "scatter", "stackplot", "stem", "step"});
  return c;
}

const ApiCatalog& ApiCatalog::r32() {
  static const ApiCatalog c = [] {
    std::vector<std::string> names;
    for (int i = 0; i < 32; ++i) {
      char buf[16];
      std::snprintf(buf, sizeof buf, "r_api_%02d", i);
      names.emplace_back(buf);
    }
    return ApiCatalog("r-32", std::move(names));
  }();
  return c;
}

const ApiCatalog& ApiCatalog::builtin(const std::string& id) {
  if (id == python13().id()) return python13();
  if (id == r32().id()) return r32();
  throw std::invalid_argument("unknown catalog '" + id + "'");
}

std::vector<std::string> ApiCatalog::builtin_ids() { return {python13().id(), r32().id()}; }

std::size_t ApiCatalog::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < apis_.size(); ++i)
    if (apis_[i] == name) return i;
  throw std::out_of_range("API '" + name + "' is not in catalog '" + id_ + "'");
}

bool ApiCatalog::contains(const std::string& name) const {
  for (const auto& a : apis_)
    if (a == name) return true;
  return false;
}

void to_json(nlohmann::json& j, const ApiCatalog& c) { j = {{"id", c.id()}, {"apis", c.apis()}}; }

void from_json(const nlohmann::json& j, ApiCatalog& c) {
  c = ApiCatalog(j.at("id").get<std::string>(), j.at("apis").get<std::vector<std::string>>());
}

LabelVector::LabelVector(std::vector<std::uint8_t> values) : y_(std::move(values)) {
  for (auto v : y_)
    if (v > 1) throw std::invalid_argument("label values must be 0 or 1");
  if (positives() == 0) throw std::invalid_argument("label vector needs at least one positive");
}

LabelVector LabelVector::from_names(const ApiCatalog& catalog, const std::vector<std::string>& names) {
  std::vector<std::uint8_t> y(catalog.size(), 0);
  for (const auto& n : names) y[catalog.index_of(n)] = 1;
  return LabelVector(std::move(y));
}

std::size_t LabelVector::positives() const {
  std::size_t n = 0;
  for (auto v : y_) n += v;
  return n;
}

std::vector<std::string> LabelVector::names(const ApiCatalog& catalog) const {
  if (catalog.size() != y_.size()) throw std::invalid_argument("label vector does not match catalog size");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < y_.size(); ++i)
    if (y_[i]) out.push_back(catalog.name(i));
  return out;
}

}  // namespace pa::task
