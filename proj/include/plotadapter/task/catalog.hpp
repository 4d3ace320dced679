#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace pa::task {

/// Ordered set of API names for one plotting language.
///
/// The position of a name is its label index; the order never changes.
class ApiCatalog {
 public:
  ApiCatalog() = default;
  /// Throws std::invalid_argument on an empty id, empty list or duplicate names.
  ApiCatalog(std::string id, std::vector<std::string> apis);

  /// The 13 matplotlib APIs.
  static const ApiCatalog& python13();
  /// Placeholder catalog with 32 synthetic names.
  static const ApiCatalog& r32();
  /// Looks up a built-in catalog by id; throws std::invalid_argument otherwise.
  static const ApiCatalog& builtin(const std::string& id);
  static std::vector<std::string> builtin_ids();

  const std::string& id() const { return id_; }
  const std::vector<std::string>& apis() const { return apis_; }
  std::size_t size() const { return apis_.size(); }
  const std::string& name(std::size_t index) const { return apis_.at(index); }
  /// Throws std::out_of_range for unknown names.
  std::size_t index_of(const std::string& name) const;
  bool contains(const std::string& name) const;

  bool operator==(const ApiCatalog&) const = default;

 private:
  std::string id_;
  std::vector<std::string> apis_;
};

void to_json(nlohmann::json& j, const ApiCatalog& c);
void from_json(const nlohmann::json& j, ApiCatalog& c);

/// Binary multi-label target over a catalog.
class LabelVector {
 public:
  LabelVector() = default;
  /// Throws std::invalid_argument unless every value is 0 or 1 and at least one is 1.
  explicit LabelVector(std::vector<std::uint8_t> values);
  static LabelVector from_names(const ApiCatalog& catalog, const std::vector<std::string>& names);

  std::size_t size() const { return y_.size(); }
  std::uint8_t operator[](std::size_t i) const { return y_[i]; }
  const std::vector<std::uint8_t>& values() const { return y_; }
  std::size_t positives() const;
  std::vector<std::string> names(const ApiCatalog& catalog) const;

  bool operator==(const LabelVector&) const = default;

 private:
  std::vector<std::uint8_t> y_;
};

}  // namespace pa::task
