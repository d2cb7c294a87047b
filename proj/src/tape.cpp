#include "hmws/tape.hpp"

#include <cmath>

#include "hmws/error.hpp"

namespace hmws {

const Tensor& Var::value() const {
  if (!tape_) throw Error("value() on an unbound Var");
  return tape_->value_of(id_);
}

Tape::Tape(const ParamStore* params) : params_(params), params_version_(params ? params->version() : 0) {}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::check_owner(Var v) const {
  if (v.tape() != this) throw Error("Var recorded on a different tape");
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::leaf(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::param(std::string_view name) {
  if (!params_) throw ConfigError("tape has no parameter store");
  return param(params_->id(name));
}

Var Tape::param(SlotId id) {
  if (!params_) throw ConfigError("tape has no parameter store");
  auto it = param_nodes_.find(id.index);
  if (it != param_nodes_.end()) return Var(this, it->second);
  Node n;
  n.value = params_->value(id);
  n.requires_grad = true;
  n.slot = id;
  Var v = push(std::move(n));
  param_nodes_.emplace(id.index, v.id());
  return v;
}

Var Tape::record(std::string_view op, std::span<const Var> inputs, Tensor value, BackwardFn backward,
                 bool may_emit_neg_inf) {
  bool inputs_finite = true;
  bool any_grad = false;
  for (const Var& in : inputs) {
    check_owner(in);
    const Node& src = nodes_[in.id()];
    if (src.requires_grad) any_grad = true;
    if (inputs_finite && !src.value.all_finite()) inputs_finite = false;
  }
  for (double x : value.values()) {
    if (std::isnan(x)) throw NumericalError(std::string(op) + " produced NaN");
    if (std::isinf(x)) {
      const bool allowed = !inputs_finite || (may_emit_neg_inf && x < 0);
      if (!allowed) throw NumericalError(std::string(op) + " produced a non-finite value");
    }
  }
  Node n;
  n.value = std::move(value);
  if (any_grad && backward) {
    n.requires_grad = true;
    n.backward = std::move(backward);
    n.inputs.reserve(inputs.size());
    for (const Var& in : inputs) n.inputs.push_back(in.id());
  }
  return push(std::move(n));
}

bool Tape::requires_grad(Var v) const {
  check_owner(v);
  return nodes_[v.id()].requires_grad;
}

Gradients Tape::backward(Var output, const Tensor& seed) {
  check_owner(output);
  if (params_ && params_->version() != params_version_) {
    throw StaleTapeError("tape recorded against parameter version " + std::to_string(params_version_) +
                         " but store is at " + std::to_string(params_->version()));
  }
  Node& out = nodes_[output.id()];
  if (!seed.same_shape(out.value) && seed.size() != out.value.size()) {
    throw ShapeError("backward seed " + shape_string(seed.shape()) + " does not match output " +
                     shape_string(out.value.shape()));
  }
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
  out.grad = seed.reshaped(out.value.shape());
  out.has_grad = true;

  std::vector<Tensor*> grad_in;
  for (std::size_t i = output.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.backward) continue;
    grad_in.assign(n.inputs.size(), nullptr);
    for (std::size_t j = 0; j < n.inputs.size(); ++j) {
      Node& src = nodes_[n.inputs[j]];
      if (!src.requires_grad) continue;
      if (!src.has_grad) {
        src.grad = Tensor::zeros_like(src.value);
        src.has_grad = true;
      }
      grad_in[j] = &src.grad;
    }
    n.backward(n.grad, grad_in);
  }

  Gradients grads = params_ ? Gradients(*params_) : Gradients();
  for (const auto& [slot, node_id] : param_nodes_) {
    const Node& n = nodes_[node_id];
    if (!n.has_grad) continue;
    auto dst = grads.at(slot).values();
    auto src = n.grad.values();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
  }
  return grads;
}

Gradients Tape::backward(Var output) {
  check_owner(output);
  if (output.size() != 1) throw ShapeError("backward without seed needs a scalar output, got " +
                                           shape_string(output.shape()));
  return backward(output, Tensor(output.shape(), 1.0));
}

Tensor Tape::adjoint(Var v) const {
  check_owner(v);
  const Node& n = nodes_[v.id()];
  if (!n.has_grad) return Tensor::zeros_like(n.value);
  return n.grad;
}

const std::vector<Var>& Tape::memo(const std::string& key, const std::function<std::vector<Var>()>& build) {
  auto it = memo_.find(key);
  if (it != memo_.end()) return it->second;
  return memo_.emplace(key, build()).first->second;
}

}  // namespace hmws
