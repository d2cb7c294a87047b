#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "hmws/tensor.hpp"

namespace hmws {

// Generative parameters (theta) vs recognition parameters (phi).
enum class Role { kGenerative, kRecognition };

std::string_view role_name(Role role);
Role parse_role(std::string_view name);

struct SlotId {
  std::size_t index = 0;
  friend bool operator==(SlotId, SlotId) = default;
};

struct Slot {
  std::string name;
  Role role;
  Tensor value;
};

/// Named learnable tensors. Slot order is insertion order and is the order
/// used by checkpoints. Every mutation bumps version(), which tapes use to
/// detect stale recordings.
class ParamStore {
 public:
  SlotId add(std::string name, Role role, Tensor init);
  bool contains(std::string_view name) const;
  SlotId id(std::string_view name) const;

  std::size_t size() const { return slots_.size(); }
  const Slot& slot(SlotId id) const { return slots_.at(id.index); }
  const Slot& slot(std::size_t i) const { return slots_.at(i); }
  const Tensor& value(SlotId id) const { return slots_.at(id.index).value; }
  const Tensor& value(std::string_view name) const { return value(id(name)); }

  // Mutable access; bumps version.
  Tensor& mutable_value(SlotId id);
  void set(std::string_view name, Tensor v);

  std::uint64_t version() const { return version_; }
  void bump_version() { ++version_; }

 private:
  std::vector<Slot> slots_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::uint64_t version_ = 0;
};

/// Gradients aligned with a ParamStore's slots; unreached slots hold zeros.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const ParamStore& store);

  std::size_t size() const { return grads_.size(); }
  Tensor& operator[](SlotId id) { return grads_.at(id.index); }
  const Tensor& operator[](SlotId id) const { return grads_.at(id.index); }
  Tensor& at(std::size_t i) { return grads_.at(i); }
  const Tensor& at(std::size_t i) const { return grads_.at(i); }

  void add_scaled(const Gradients& other, double scale);
  void scale(double s);
  // Zeroes every slot whose role differs from `keep`.
  void restrict_to(const ParamStore& store, Role keep);
  bool all_finite() const;
  double squared_norm() const;

 private:
  std::vector<Tensor> grads_;
};

}  // namespace hmws
