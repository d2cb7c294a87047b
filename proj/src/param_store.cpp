#include "hmws/param_store.hpp"

#include "hmws/error.hpp"

namespace hmws {

std::string_view role_name(Role role) { return role == Role::kGenerative ? "generative" : "recognition"; }

Role parse_role(std::string_view name) {
  if (name == "generative") return Role::kGenerative;
  if (name == "recognition") return Role::kRecognition;
  throw DataError("unknown parameter role '" + std::string(name) + "'");
}

SlotId ParamStore::add(std::string name, Role role, Tensor init) {
  if (index_.count(name)) throw ConfigError("duplicate parameter slot '" + name + "'");
  const std::size_t i = slots_.size();
  index_.emplace(name, i);
  slots_.push_back(Slot{std::move(name), role, std::move(init)});
  ++version_;
  return SlotId{i};
}

bool ParamStore::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

SlotId ParamStore::id(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("no parameter slot '" + std::string(name) + "'");
  return SlotId{it->second};
}

Tensor& ParamStore::mutable_value(SlotId id) {
  ++version_;
  return slots_.at(id.index).value;
}

void ParamStore::set(std::string_view name, Tensor v) {
  auto& slot = slots_.at(id(name).index);
  if (!slot.value.same_shape(v)) {
    throw ShapeError("slot '" + slot.name + "' has shape " + shape_string(slot.value.shape()) + ", got " +
                     shape_string(v.shape()));
  }
  slot.value = std::move(v);
  ++version_;
}

Gradients::Gradients(const ParamStore& store) {
  grads_.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) grads_.push_back(Tensor::zeros_like(store.slot(i).value));
}

void Gradients::add_scaled(const Gradients& other, double scale) {
  if (other.grads_.size() != grads_.size()) throw ShapeError("gradient sets address different stores");
  for (std::size_t i = 0; i < grads_.size(); ++i) {
    auto dst = grads_[i].values();
    auto src = other.grads_[i].values();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += scale * src[j];
  }
}

void Gradients::scale(double s) {
  for (auto& g : grads_) {
    for (auto& x : g.values()) x *= s;
  }
}

void Gradients::restrict_to(const ParamStore& store, Role keep) {
  for (std::size_t i = 0; i < grads_.size(); ++i) {
    if (store.slot(i).role != keep) grads_[i].fill(0.0);
  }
}

bool Gradients::all_finite() const {
  for (const auto& g : grads_) {
    if (!g.all_finite()) return false;
  }
  return true;
}

double Gradients::squared_norm() const {
  double s = 0.0;
  for (const auto& g : grads_) {
    for (double x : g.values()) s += x * x;
  }
  return s;
}

}  // namespace hmws
