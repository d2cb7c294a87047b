#pragma once

#include <cstdint>
#include <span>
#include <vector>
#include <string_view>

#include "hmws/model.hpp"

namespace hmws {

enum class BaselineMethod { kReinforce, kVimco, kRws };
// How REINFORCE and VIMCO differentiate through continuous latents.
enum class ContinuousGradMode { kReparameterized, kScoreFunction };

BaselineMethod parse_baseline_method(std::string_view name);
std::string_view method_name(BaselineMethod m);
ContinuousGradMode parse_continuous_mode(std::string_view name);

struct BaselineConfig {
  int particles = 30;  // S
  BaselineMethod method = BaselineMethod::kRws;
  ContinuousGradMode continuous = ContinuousGradMode::kReparameterized;

  void validate() const;
};

struct BaselineGrads {
  Gradients theta;  // descent directions, i.e. gradients of the loss
  Gradients phi;
  bool skipped = false;
  std::int64_t likelihood_evals = 0;
  std::int64_t discrete_prior_evals = 0;
};

// Plain score-function ELBO gradient, no control variate.
BaselineGrads reinforce_grad(const HybridModel& model, const Observation& x, int particles, Rng& rng,
                             ContinuousGradMode mode = ContinuousGradMode::kReparameterized);
// Leave-one-out signals L(w) - L(w with w_k replaced by the geometric mean of
// the rest). Needs at least two finite log-weights.
std::vector<double> vimco_learning_signals(std::span<const double> log_w);
// Multi-sample bound with leave-one-out (geometric mean) learning signals.
BaselineGrads vimco_grad(const HybridModel& model, const Observation& x, int particles, Rng& rng,
                         ContinuousGradMode mode = ContinuousGradMode::kReparameterized);
// Wake-theta and wake-phi with self-normalized importance weights.
BaselineGrads rws_grads(const HybridModel& model, const Observation& x, int particles, Rng& rng);

BaselineGrads baseline_grads(const HybridModel& model, const Observation& x, const BaselineConfig& config, Rng& rng);

// log (1/S) sum_k p(z_k, x) / q(z_k | x), z_k ~ q. -inf if every weight is zero.
double iwae_log_marginal(const HybridModel& model, const Observation& x, int samples, Rng& rng);

}  // namespace hmws
