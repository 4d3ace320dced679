#pragma once

#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "plotadapter/numerics/parameter.hpp"
#include "plotadapter/numerics/tensor.hpp"

namespace pa::num {

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t dim(std::size_t axis) const { return value().dim(axis); }
  bool requires_grad() const;
  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// View handed to an op's backward rule.
class BackwardContext {
 public:
  const Tensor& grad_out() const;
  const Tensor& output() const;
  const Tensor& input(std::size_t i) const;
  bool needs_grad(std::size_t i) const;
  /// Gradient accumulator for input i, zero-allocated on first use.
  Tensor& grad_in(std::size_t i);

 private:
  friend class Tape;
  BackwardContext(Tape& tape, std::size_t node) : tape_(tape), node_(node) {}
  Tape& tape_;
  std::size_t node_;
};

using BackwardFn = std::function<void(BackwardContext&)>;

/// Linear record of executed ops for reverse-mode differentiation.
///
/// A tape belongs to one thread. Values never move once recorded, so a
/// reference from Var::value() stays valid until clear().
class Tape {
 public:
  explicit Tape(DType dtype = DType::f32) : dtype_(dtype) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  DType dtype() const { return dtype_; }

  Var constant(Tensor value);
  Var leaf(Tensor value, bool requires_grad = true);
  /// Binds a model parameter. Repeated calls return the same Var.
  Var param(Parameter& p);

  Var record(Tensor out, std::vector<Var> inputs, BackwardFn fn, const char* op);

  /// Propagates d(loss)/d(.) to every recorded value and accumulates into
  /// the grad slot of each trainable parameter bound to this tape.
  void backward(Var loss);

  const Tensor* grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }
  std::size_t op_count() const;
  /// Op names in execution order (leaves excluded).
  std::vector<std::string> op_names() const;
  /// Op names in the order backward() visited them.
  const std::vector<std::string>& backward_trace() const { return backward_trace_; }

  void clear();

 private:
  friend class Var;
  friend class BackwardContext;

  struct Node {
    std::optional<Tensor> owned;
    Parameter* param = nullptr;
    std::vector<std::size_t> inputs;
    BackwardFn fn;
    const char* op = nullptr;
    bool requires_grad = false;
    std::optional<Tensor> grad;

    const Tensor& value() const { return param ? param->value : *owned; }
  };

  Tensor& grad_slot(std::size_t id);
  Tensor conform(Tensor value) const;

  DType dtype_;
  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
  std::vector<std::string> backward_trace_;
};

}  // namespace pa::num
