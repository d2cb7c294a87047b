#include "hmws/baselines.hpp"

#include <cmath>
#include <limits>

#include "hmws/engine.hpp"
#include "hmws/error.hpp"
#include "hmws/importance.hpp"
#include "hmws/ops.hpp"

namespace hmws {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct Particle {
  Discrete z_d;
  Var log_q_d;
  Var log_q_c;
  Var log_p;
  double log_w = 0.0;
};

// Draws z ~ q(z | x) and scores it. With `reparameterize`, z_c is a
// differentiable function of phi.
Particle draw_particle(const HybridModel& model, Tape& tape, const Observation& x, Rng& rng, bool reparameterize) {
  Particle p;
  auto [z_d, lq_d] = model.sample_q_discrete(tape, x, rng);
  p.z_d = std::move(z_d);
  p.log_q_d = lq_d;
  const GaussianVar q_c = model.q_continuous_cached(tape, p.z_d, x);
  std::vector<double> eps(q_c.dim());
  for (auto& e : eps) e = standard_normal(rng);
  Var z_c;
  if (reparameterize) {
    z_c = q_c.reparameterize(eps);
  } else {
    const DiagonalGaussian d = q_c.detached();
    Continuous values(eps.size());
    for (std::size_t i = 0; i < eps.size(); ++i) values[i] = d.mean()[i] + std::exp(d.log_std()[i]) * eps[i];
    z_c = tape.constant(Tensor::vector(std::move(values)));
  }
  p.log_q_c = q_c.log_prob(z_c);
  p.log_p = model.log_joint(tape, p.z_d, z_c, x);
  p.log_w = p.log_p.item() - p.log_q_d.item() - p.log_q_c.item();
  return p;
}

BaselineGrads finish(const HybridModel& model, Tape& tape, Var loss) {
  BaselineGrads out;
  Gradients g = tape.backward(loss);
  out.theta = g;
  out.theta.restrict_to(model.params(), Role::kGenerative);
  out.phi = std::move(g);
  out.phi.restrict_to(model.params(), Role::kRecognition);
  out.likelihood_evals = tape.counters().likelihood_evals;
  out.discrete_prior_evals = tape.counters().discrete_prior_evals;
  if (!out.theta.all_finite() || !out.phi.all_finite()) {
    out.skipped = true;
    out.theta = Gradients(model.params());
    out.phi = Gradients(model.params());
  }
  return out;
}

BaselineGrads skipped(const HybridModel& model, const Tape& tape) {
  BaselineGrads out;
  out.theta = Gradients(model.params());
  out.phi = Gradients(model.params());
  out.skipped = true;
  out.likelihood_evals = tape.counters().likelihood_evals;
  out.discrete_prior_evals = tape.counters().discrete_prior_evals;
  return out;
}

}  // namespace

BaselineMethod parse_baseline_method(std::string_view name) {
  if (name == "reinforce") return BaselineMethod::kReinforce;
  if (name == "vimco") return BaselineMethod::kVimco;
  if (name == "rws") return BaselineMethod::kRws;
  throw ConfigError("unknown baseline method '" + std::string(name) + "'");
}

std::string_view method_name(BaselineMethod m) {
  switch (m) {
    case BaselineMethod::kReinforce: return "reinforce";
    case BaselineMethod::kVimco: return "vimco";
    case BaselineMethod::kRws: return "rws";
  }
  return "?";
}

ContinuousGradMode parse_continuous_mode(std::string_view name) {
  if (name == "reparameterized") return ContinuousGradMode::kReparameterized;
  if (name == "score-function") return ContinuousGradMode::kScoreFunction;
  throw ConfigError("unknown continuous gradient mode '" + std::string(name) + "'");
}

void BaselineConfig::validate() const {
  if (particles < 1) throw ConfigError("S must be at least 1");
  if (method == BaselineMethod::kVimco && particles < 2) throw ConfigError("vimco needs S >= 2");
}

BaselineGrads reinforce_grad(const HybridModel& model, const Observation& x, int particles, Rng& rng,
                             ContinuousGradMode mode) {
  if (particles < 1) throw ConfigError("S must be at least 1");
  const bool reparam = mode == ContinuousGradMode::kReparameterized;
  Tape tape(&model.params());
  std::vector<Var> terms;
  for (int s = 0; s < particles; ++s) {
    Particle p = draw_particle(model, tape, x, rng, reparam);
    if (!std::isfinite(p.log_w)) continue;
    // Surrogate whose gradient is log(p/q) grad log q + grad log(p/q).
    Var score = reparam ? p.log_q_d : ad::add(p.log_q_d, p.log_q_c);
    Var log_w = ad::sub(ad::sub(p.log_p, p.log_q_d), p.log_q_c);
    terms.push_back(ad::add(ad::mul(score, p.log_w), log_w));
  }
  if (terms.empty()) return skipped(model, tape);
  Var loss = ad::mul(ad::sum(ad::concat(terms)), -1.0 / static_cast<double>(terms.size()));
  return finish(model, tape, loss);
}

std::vector<double> vimco_learning_signals(std::span<const double> log_w) {
  const std::size_t n = log_w.size();
  if (n < 2) throw ConfigError("vimco needs S >= 2");
  double sum_lw = 0.0;
  for (double v : log_w) sum_lw += v;
  const double bound = ad::log_sum_exp(log_w);
  std::vector<double> signal(n);
  std::vector<double> loo(log_w.begin(), log_w.end());
  for (std::size_t k = 0; k < n; ++k) {
    // Replace w_k by the geometric mean of the others.
    loo[k] = (sum_lw - log_w[k]) / static_cast<double>(n - 1);
    signal[k] = bound - ad::log_sum_exp(loo);
    loo[k] = log_w[k];
  }
  return signal;
}

BaselineGrads vimco_grad(const HybridModel& model, const Observation& x, int particles, Rng& rng,
                         ContinuousGradMode mode) {
  if (particles < 2) throw ConfigError("vimco needs S >= 2");
  const bool reparam = mode == ContinuousGradMode::kReparameterized;
  Tape tape(&model.params());
  std::vector<Particle> ps;
  for (int s = 0; s < particles; ++s) {
    Particle p = draw_particle(model, tape, x, rng, reparam);
    if (std::isfinite(p.log_w)) ps.push_back(std::move(p));
  }
  const std::size_t n = ps.size();
  if (n < 2) return skipped(model, tape);

  std::vector<double> lw(n);
  for (std::size_t k = 0; k < n; ++k) lw[k] = ps[k].log_w;
  const double log_n = std::log(static_cast<double>(n));
  const std::vector<double> signal = vimco_learning_signals(lw);

  std::vector<Var> log_w_vars;
  std::vector<Var> scores;
  for (const auto& p : ps) {
    log_w_vars.push_back(ad::sub(ad::sub(p.log_p, p.log_q_d), p.log_q_c));
    scores.push_back(reparam ? p.log_q_d : ad::add(p.log_q_d, p.log_q_c));
  }
  Var bound_var = ad::add(ad::logsumexp(ad::concat(log_w_vars)), -log_n);
  Var surrogate = ad::add(bound_var, weighted_sum(tape, scores, signal));
  return finish(model, tape, ad::neg(surrogate));
}

BaselineGrads rws_grads(const HybridModel& model, const Observation& x, int particles, Rng& rng) {
  if (particles < 1) throw ConfigError("S must be at least 1");
  Tape tape(&model.params());
  std::vector<Particle> ps;
  std::vector<double> lw;
  for (int s = 0; s < particles; ++s) {
    ps.push_back(draw_particle(model, tape, x, rng, false));
    lw.push_back(ps.back().log_w);
  }
  if (!std::isfinite(ad::log_sum_exp(lw))) return skipped(model, tape);
  const auto w_bar = normalized_weights(lw);
  std::vector<Var> terms;
  std::vector<double> coeffs;
  for (std::size_t k = 0; k < ps.size(); ++k) {
    // wake-theta and wake-phi share the weights; roles keep them apart.
    terms.push_back(ad::add(ps[k].log_p, ad::add(ps[k].log_q_d, ps[k].log_q_c)));
    coeffs.push_back(-w_bar[k]);
  }
  return finish(model, tape, weighted_sum(tape, terms, coeffs));
}

BaselineGrads baseline_grads(const HybridModel& model, const Observation& x, const BaselineConfig& config, Rng& rng) {
  config.validate();
  switch (config.method) {
    case BaselineMethod::kReinforce: return reinforce_grad(model, x, config.particles, rng, config.continuous);
    case BaselineMethod::kVimco: return vimco_grad(model, x, config.particles, rng, config.continuous);
    case BaselineMethod::kRws: return rws_grads(model, x, config.particles, rng);
  }
  throw ConfigError("unknown baseline method");
}

double iwae_log_marginal(const HybridModel& model, const Observation& x, int samples, Rng& rng) {
  if (samples < 1) throw ConfigError("S_test must be at least 1");
  std::vector<double> lw;
  lw.reserve(samples);
  // Fresh tapes in chunks bound the memory held by likelihood recordings.
  constexpr int kChunk = 25;
  for (int start = 0; start < samples; start += kChunk) {
    Tape tape(&model.params());
    const int end = std::min(samples, start + kChunk);
    for (int s = start; s < end; ++s) lw.push_back(draw_particle(model, tape, x, rng, false).log_w);
  }
  return is_normalizer(lw);
}

}  // namespace hmws
