#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hmws/param_store.hpp"

namespace hmws {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamHyper hyper;
  std::int64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  AdamState() = default;
  AdamState(const ParamStore& store, AdamHyper hyper = {});
};

struct AdamReport {
  // Slots left untouched because their gradient was non-finite.
  std::vector<std::string> skipped;
};

// One bias-corrected Adam update (descends along `grads`).
AdamReport adam_step(ParamStore& params, const Gradients& grads, AdamState& state);

}  // namespace hmws
