#include "plotadapter/numerics/parameter.hpp"

#include <set>
#include <stdexcept>

namespace pa::num {

void Parameter::zero_grad() {
  if (!trainable) {
    grad.reset();
    return;
  }
  if (!grad || grad->shape() != value.shape() || grad->dtype() != value.dtype()) {
    grad = Tensor(value.shape(), value.dtype());
  } else {
    grad->fill(0.0);
  }
}

void Parameter::set_trainable(bool on) {
  trainable = on;
  if (!on) grad.reset();
}

void ParamList::extend(const ParamList& other) {
  items_.insert(items_.end(), other.items_.begin(), other.items_.end());
}

Parameter* ParamList::find(const std::string& name) const {
  for (auto* p : items_) {
    if (p->name == name) return p;
  }
  return nullptr;
}

std::size_t ParamList::element_count() const {
  std::size_t n = 0;
  for (auto* p : items_) n += p->value.numel();
  return n;
}

std::size_t ParamList::trainable_element_count() const {
  std::size_t n = 0;
  for (auto* p : items_) {
    if (p->trainable) n += p->value.numel();
  }
  return n;
}

void ParamList::check_unique_names() const {
  std::set<std::string> seen;
  for (auto* p : items_) {
    if (!seen.insert(p->name).second) throw std::invalid_argument("duplicate parameter name: " + p->name);
  }
}

void ParamList::zero_grad() const {
  for (auto* p : items_) p->zero_grad();
}

Parameter& ParamStore::create(std::string name, Tensor value, bool trainable) {
  if (find(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  params_.push_back(std::make_unique<Parameter>(std::move(name), std::move(value), trainable));
  return *params_.back();
}

ParamList ParamStore::list() const {
  ParamList out;
  for (const auto& p : params_) out.add(*p);
  return out;
}

Parameter* ParamStore::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

}  // namespace pa::num
