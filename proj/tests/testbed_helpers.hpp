#pragma once

// Oracles on the conjugate testbed shared by the engine and baseline tests.

#include <cmath>
#include <functional>
#include <vector>

#include "hmws/ops.hpp"
#include "hmws/param_store.hpp"
#include "hmws/testbed.hpp"

namespace hmws::testing {

inline ConjugateTestbed three_component() {
  ConjugateTestbed tb;
  tb.prior = {0.2, 0.5, 0.3};
  tb.means = {-2.0, 0.5, 3.0};
  tb.prior_std = 1.2;
  tb.noise_std = 0.7;
  return tb;
}

// Flattens the slots of one role in store order.
inline std::vector<double> flatten(const ParamStore& store, const Gradients& g, Role role) {
  std::vector<double> out;
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (store.slot(i).role != role) continue;
    for (double v : g.at(i).values()) out.push_back(v);
  }
  return out;
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

// d/dtheta log p(x) from central differences of the closed form.
inline std::vector<double> exact_theta_grad(TestbedModel& model, double x, double step = 1e-6) {
  std::vector<double> out;
  ParamStore& store = model.params();
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (store.slot(i).role != Role::kGenerative) continue;
    const SlotId id{i};
    for (std::size_t j = 0; j < store.value(id).size(); ++j) {
      const double orig = store.value(id)[j];
      store.mutable_value(id)[j] = orig + step;
      const double up = testbed_exact(model.current(), x).log_marginal;
      store.mutable_value(id)[j] = orig - step;
      const double down = testbed_exact(model.current(), x).log_marginal;
      store.mutable_value(id)[j] = orig;
      out.push_back((up - down) / (2 * step));
    }
  }
  return out;
}

// Integral of f against Normal(mean, sd), by a trapezoid rule over +-10 sd.
inline double gaussian_expectation(const std::function<double(double)>& f, double mean, double sd, int points = 4001) {
  const double lo = mean - 10 * sd, h = 20 * sd / (points - 1);
  double total = 0.0;
  for (int i = 0; i < points; ++i) {
    const double z = lo + i * h;
    const double w = (i == 0 || i == points - 1) ? 0.5 : 1.0;
    total += w * f(z) * std::exp(-0.5 * ((z - mean) / sd) * ((z - mean) / sd));
  }
  return total * h / (sd * std::sqrt(2 * M_PI));
}

// The testbed with every likelihood shifted by a constant, so every
// importance weight is scaled by exp(shift).
class ShiftedTestbed : public TestbedModel {
 public:
  ShiftedTestbed(const ConjugateTestbed& tb, double shift) : TestbedModel(tb), shift_(shift) {}

 protected:
  Var log_likelihood(Tape& tape, const Discrete& z_d, Var z_c, const Observation& x) const override {
    return ad::add(TestbedModel::log_likelihood(tape, z_d, z_c, x), tape.constant(shift_));
  }

 private:
  double shift_;
};

}  // namespace hmws::testing
