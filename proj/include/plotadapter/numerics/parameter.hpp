#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "plotadapter/numerics/tensor.hpp"

namespace pa::num {

/// A named model weight. Frozen parameters never carry a gradient.
struct Parameter {
  std::string name;
  Tensor value;
  bool trainable = true;
  std::optional<Tensor> grad;

  Parameter(std::string name_, Tensor value_, bool trainable_ = true)
      : name(std::move(name_)), value(std::move(value_)), trainable(trainable_) {}

  void zero_grad();
  void set_trainable(bool on);
};

/// Ordered, non-owning view over parameters of one or more modules.
///
/// Parameters are held by unique_ptr inside their owners so the addresses in
/// a ParamList stay valid across container growth.
class ParamList {
 public:
  ParamList() = default;

  void add(Parameter& p) { items_.push_back(&p); }
  void extend(const ParamList& other);

  std::size_t size() const { return items_.size(); }
  Parameter& operator[](std::size_t i) const { return *items_[i]; }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

  Parameter* find(const std::string& name) const;
  std::size_t element_count() const;
  std::size_t trainable_element_count() const;

  /// Throws std::invalid_argument on duplicate names.
  void check_unique_names() const;
  void zero_grad() const;

 private:
  std::vector<Parameter*> items_;
};

/// Owning storage for a module's parameters.
class ParamStore {
 public:
  Parameter& create(std::string name, Tensor value, bool trainable = true);
  ParamList list() const;
  std::size_t size() const { return params_.size(); }
  Parameter* find(const std::string& name) const;

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

}  // namespace pa::num
