#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hmws/param_store.hpp"
#include "hmws/tensor.hpp"

namespace hmws {

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape
/// lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  double item() const { return value().item(); }
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Instrumentation carried by a tape: every log-joint evaluation a model
// performs while recording here is counted.
struct TapeCounters {
  std::int64_t likelihood_evals = 0;
  std::int64_t discrete_prior_evals = 0;
};

// Accumulates d(output)/d(input_i) into grad_in[i] given d(loss)/d(output).
// grad_in[i] is null for inputs that do not require gradients.
using BackwardFn = std::function<void(const Tensor& grad_out, std::span<Tensor* const> grad_in)>;

/// Reverse-mode recording of one computation. A tape reads parameters from a
/// ParamStore and refuses to backpropagate once that store has changed.
class Tape {
 public:
  explicit Tape(const ParamStore* params = nullptr);
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var constant(double v) { return constant(Tensor::scalar(v)); }
  // Differentiable input not bound to a parameter slot.
  Var leaf(Tensor value);
  Var param(std::string_view name);
  Var param(SlotId id);

  // Records an op. `may_emit_neg_inf` marks log-weight producing ops that are
  // allowed to return -inf from finite inputs.
  Var record(std::string_view op, std::span<const Var> inputs, Tensor value, BackwardFn backward,
             bool may_emit_neg_inf = false);
  Var record(std::string_view op, std::initializer_list<Var> inputs, Tensor value, BackwardFn backward,
             bool may_emit_neg_inf = false) {
    return record(op, std::span<const Var>(inputs.begin(), inputs.size()), std::move(value), std::move(backward),
                  may_emit_neg_inf);
  }

  Gradients backward(Var output, const Tensor& seed);
  // Scalar outputs only: seed 1.
  Gradients backward(Var output);
  // Adjoint of any node from the most recent backward (zeros if unreached).
  Tensor adjoint(Var v) const;

  bool requires_grad(Var v) const;
  const Tensor& value_of(std::size_t id) const { return nodes_[id].value; }
  std::size_t node_count() const { return nodes_.size(); }
  const ParamStore* params() const { return params_; }

  TapeCounters& counters() { return counters_; }
  const TapeCounters& counters() const { return counters_; }

  // Returns the Vars cached under `key`, building them on first use.
  const std::vector<Var>& memo(const std::string& key, const std::function<std::vector<Var>()>& build);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    std::optional<SlotId> slot;
  };

  Var push(Node node);
  void check_owner(Var v) const;

  const ParamStore* params_;
  std::uint64_t params_version_ = 0;
  std::deque<Node> nodes_;
  std::map<std::size_t, std::size_t> param_nodes_;
  std::map<std::string, std::vector<Var>> memo_;
  TapeCounters counters_;
};

}  // namespace hmws
