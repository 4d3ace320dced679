#include "plotadapter/numerics/tape.hpp"

#include <stdexcept>

namespace pa::num {

const Tensor& Var::value() const { return tape_->nodes_[id_].value(); }

bool Var::requires_grad() const { return tape_->nodes_[id_].requires_grad; }

const Tensor& BackwardContext::grad_out() const { return *tape_.nodes_[node_].grad; }

const Tensor& BackwardContext::output() const { return tape_.nodes_[node_].value(); }

const Tensor& BackwardContext::input(std::size_t i) const {
  return tape_.nodes_[tape_.nodes_[node_].inputs.at(i)].value();
}

bool BackwardContext::needs_grad(std::size_t i) const {
  return tape_.nodes_[tape_.nodes_[node_].inputs.at(i)].requires_grad;
}

Tensor& BackwardContext::grad_in(std::size_t i) {
  return tape_.grad_slot(tape_.nodes_[node_].inputs.at(i));
}

Tensor Tape::conform(Tensor value) const {
  if (value.dtype() != dtype_) return value.cast(dtype_);
  return value;
}

Var Tape::constant(Tensor value) {
  Node n;
  n.owned = conform(std::move(value));
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.owned = conform(std::move(value));
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  if (p.value.dtype() != dtype_) {
    throw std::invalid_argument("parameter " + p.name + " is " + dtype_name(p.value.dtype()) +
                                " but tape computes in " + dtype_name(dtype_));
  }
  Node n;
  n.param = &p;
  n.requires_grad = p.trainable;
  nodes_.push_back(std::move(n));
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor out, std::vector<Var> inputs, BackwardFn fn, const char* op) {
  if (!out.all_finite()) throw NonFiniteError(std::string(op) + " produced a non-finite value");
  Node n;
  n.owned = std::move(out);
  n.op = op;
  for (const auto& v : inputs) {
    if (v.tape_ != this) throw std::invalid_argument(std::string(op) + ": input from another tape");
    n.inputs.push_back(v.id_);
    n.requires_grad = n.requires_grad || nodes_[v.id_].requires_grad;
  }
  if (n.requires_grad) n.fn = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_slot(std::size_t id) {
  auto& n = nodes_[id];
  if (!n.grad) n.grad = Tensor(n.value().shape(), n.value().dtype());
  return *n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape_ != this) throw std::invalid_argument("backward: loss recorded on another tape");
  if (loss.value().numel() != 1) {
    throw DimensionError("backward: loss must be scalar, got " + shape_str(loss.shape()));
  }
  for (auto& n : nodes_) n.grad.reset();
  backward_trace_.clear();
  grad_slot(loss.id_).fill(1.0);

  for (std::size_t id = loss.id_ + 1; id-- > 0;) {
    auto& n = nodes_[id];
    if (!n.fn || !n.grad) continue;
    BackwardContext ctx(*this, id);
    n.fn(ctx);
    backward_trace_.emplace_back(n.op);
  }

  for (auto& [param, id] : param_nodes_) {
    auto* p = const_cast<Parameter*>(param);
    if (!p->trainable) continue;
    if (!p->grad) p->zero_grad();
    if (nodes_[id].grad) p->grad->add_(*nodes_[id].grad);
  }
}

const Tensor* Tape::grad(Var v) const {
  const auto& n = nodes_.at(v.id_);
  return n.grad ? &*n.grad : nullptr;
}

std::size_t Tape::op_count() const {
  std::size_t c = 0;
  for (const auto& n : nodes_) c += n.op != nullptr;
  return c;
}

std::vector<std::string> Tape::op_names() const {
  std::vector<std::string> out;
  for (const auto& n : nodes_) {
    if (n.op) out.emplace_back(n.op);
  }
  return out;
}

void Tape::clear() {
  nodes_.clear();
  param_nodes_.clear();
  backward_trace_.clear();
}

}  // namespace pa::num
