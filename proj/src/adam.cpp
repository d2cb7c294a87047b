#include "hmws/adam.hpp"

#include <cmath>

#include "hmws/error.hpp"

namespace hmws {

AdamState::AdamState(const ParamStore& store, AdamHyper h) : hyper(h) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    m.push_back(Tensor::zeros_like(store.slot(i).value));
    v.push_back(Tensor::zeros_like(store.slot(i).value));
  }
}

AdamReport adam_step(ParamStore& params, const Gradients& grads, AdamState& state) {
  if (grads.size() != params.size() || state.m.size() != params.size()) {
    throw ShapeError("adam_step: gradient/state/parameter slot counts differ");
  }
  AdamReport report;
  state.step += 1;
  const auto& h = state.hyper;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(h.beta1, t);
  const double c2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& g = grads.at(i);
    if (!g.all_finite()) {
      report.skipped.push_back(params.slot(i).name);
      continue;
    }
    Tensor& p = params.mutable_value(SlotId{i});
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    if (!g.same_shape(p)) {
      throw ShapeError("gradient for '" + params.slot(i).name + "' has shape " + shape_string(g.shape()));
    }
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = h.beta1 * m[j] + (1.0 - h.beta1) * g[j];
      v[j] = h.beta2 * v[j] + (1.0 - h.beta2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      p[j] -= h.lr * mhat / (std::sqrt(vhat) + h.epsilon);
    }
  }
  params.bump_version();
  return report;
}

}  // namespace hmws
