#include "hmws/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_set>

#include "hmws/error.hpp"
#include "hmws/ops.hpp"

namespace hmws {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

void HmwsConfig::validate() const {
  if (memory_size < 1) throw ConfigError("M must be at least 1");
  if (proposals < 1) throw ConfigError("N must be at least 1");
  if (importance_samples < 1) throw ConfigError("K must be at least 1");
  if (!(replay_factor >= 0.0 && replay_factor <= 1.0)) throw ConfigError("replay factor must lie in [0, 1]");
  if (fantasy_samples < 0) throw ConfigError("fantasy_samples must be non-negative");
}

std::int64_t HmwsConfig::likelihood_budget() const {
  return static_cast<std::int64_t>(importance_samples) * (proposals + memory_size);
}

WakeWeights compute_wake_weights(const Tensor& log_w) {
  const std::size_t m_count = log_w.rows();
  const std::size_t k_count = log_w.cols();
  WakeWeights out;
  out.log_p_hat.resize(m_count);
  out.w_bar = Tensor(Shape{m_count, k_count});
  out.v = Tensor(Shape{m_count, k_count});
  const double log_k = std::log(static_cast<double>(k_count));
  for (std::size_t m = 0; m < m_count; ++m) {
    std::span<const double> row(log_w.data() + m * k_count, k_count);
    const double lse = ad::log_sum_exp(row);
    out.log_p_hat[m] = lse - log_k;
    for (std::size_t k = 0; k < k_count; ++k) {
      // A row with no finite weight carries omega = 0; its w_bar is uniform.
      out.w_bar.at(m, k) = std::isfinite(lse) ? std::exp(row[k] - lse) : 1.0 / static_cast<double>(k_count);
    }
  }
  const double total = ad::log_sum_exp(out.log_p_hat);
  if (!std::isfinite(total)) throw NumericalError("degenerate weights");
  out.omega.resize(m_count);
  for (std::size_t m = 0; m < m_count; ++m) {
    out.omega[m] = std::exp(out.log_p_hat[m] - total);
    for (std::size_t k = 0; k < k_count; ++k) out.v.at(m, k) = out.w_bar.at(m, k) * out.omega[m];
  }
  return out;
}

Memory init_memory(const HybridModel& model, const Observation& x, int memory_size, Rng& rng) {
  if (memory_size < 1) throw ConfigError("M must be at least 1");
  const auto target = static_cast<std::size_t>(memory_size);
  Tape tape(&model.params());
  Memory mem;
  std::unordered_set<std::string> seen;
  const std::size_t cap = 100 * target;
  for (std::size_t attempt = 0; attempt < cap && mem.entries.size() < target; ++attempt) {
    // First half of the budget from q(z_d | x); if q has collapsed, the prior
    // supplies the rest.
    Discrete z = attempt < cap / 2 ? model.sample_q_discrete(tape, x, rng).first
                                   : model.sample_prior_discrete(tape, rng);
    if (seen.insert(model.canonical_key(z)).second) mem.entries.push_back(std::move(z));
  }
  if (mem.entries.size() < target) {
    mem.degenerate = true;
    const std::size_t unique = mem.entries.size();
    for (std::size_t i = 0; mem.entries.size() < target; ++i) mem.entries.push_back(mem.entries[i % unique]);
  }
  return mem;
}

std::pair<Memory, WakeResult> wake_update(const HybridModel& model, const Observation& x, const Memory& memory,
                                          const HmwsConfig& config, Rng& rng) {
  config.validate();
  if (memory.entries.empty()) throw ConfigError("wake_update needs a populated memory");
  if (config.exact_scoring && !model.exact_log_joint_discrete(memory.entries.front(), x)) {
    throw ConfigError("exact scoring requested but the model has no exact log p(z_d, x)");
  }
  const std::size_t target = static_cast<std::size_t>(config.memory_size);
  const std::size_t k_count = static_cast<std::size_t>(config.importance_samples);

  WakeResult wr;
  wr.tape = std::make_shared<Tape>(&model.params());
  Tape& tape = *wr.tape;

  // unique(memory U proposals), memory first so that it wins ties.
  std::vector<Discrete> candidates;
  std::unordered_set<std::string> seen;
  for (const auto& z : memory.entries) {
    if (seen.insert(model.canonical_key(z)).second) candidates.push_back(z);
  }
  for (int n = 0; n < config.proposals; ++n) {
    Discrete z = model.sample_q_discrete(tape, x, rng).first;
    if (seen.insert(model.canonical_key(z)).second) candidates.push_back(std::move(z));
  }
  const std::size_t l_count = candidates.size();
  wr.candidates = l_count;

  Tensor log_w(Shape{l_count, k_count});
  std::vector<std::vector<Continuous>> samples(l_count);
  std::vector<std::vector<Var>> joint_vars(l_count), qc_vars(l_count);
  std::vector<double> scores(l_count);
  for (std::size_t i = 0; i < l_count; ++i) {
    const Discrete& z_d = candidates[i];
    Var log_prior_d = model.log_prior_discrete(tape, z_d);
    const GaussianVar q_c = model.q_continuous_cached(tape, z_d, x);
    const DiagonalGaussian q_c_values = q_c.detached();
    for (std::size_t k = 0; k < k_count; ++k) {
      Continuous z_c = q_c_values.sample(rng);
      Var z_c_var = tape.constant(Tensor::vector(z_c));
      Var lq = q_c.log_prob(z_c_var);
      Var lj = ad::add(log_prior_d, model.log_conditional(tape, z_d, z_c_var, x));
      log_w.at(i, k) = lj.item() - lq.item();
      samples[i].push_back(std::move(z_c));
      joint_vars[i].push_back(lj);
      qc_vars[i].push_back(lq);
    }
    if (config.exact_scoring) {
      scores[i] = *model.exact_log_joint_discrete(z_d, x);
    } else {
      std::span<const double> row(log_w.data() + i * k_count, k_count);
      scores[i] = ad::log_sum_exp(row) - std::log(static_cast<double>(k_count));
    }
  }
  wr.likelihood_evals = tape.counters().likelihood_evals;
  wr.discrete_prior_evals = tape.counters().discrete_prior_evals;

  const bool any_finite = std::any_of(scores.begin(), scores.end(), [](double s) { return std::isfinite(s); });
  if (!any_finite) {
    wr.degenerate = true;
    return {memory, std::move(wr)};
  }

  // Best M by score; stable so existing memory ranks first at equal score.
  std::vector<std::size_t> order(l_count);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const std::size_t keep = std::min(target, l_count);
  order.resize(keep);

  Memory next;
  next.degenerate = keep < target;
  Tensor kept_log_w(Shape{keep, k_count});
  for (std::size_t m = 0; m < keep; ++m) {
    const std::size_t i = order[m];
    next.entries.push_back(candidates[i]);
    wr.selected.push_back(candidates[i]);
    wr.z_c.push_back(std::move(samples[i]));
    wr.log_joint.push_back(std::move(joint_vars[i]));
    wr.log_q_c.push_back(std::move(qc_vars[i]));
    for (std::size_t k = 0; k < k_count; ++k) kept_log_w.at(m, k) = log_w.at(i, k);
  }
  WakeWeights weights = compute_wake_weights(kept_log_w);
  if (config.exact_scoring) {
    std::vector<double> exact(keep);
    for (std::size_t m = 0; m < keep; ++m) exact[m] = scores[order[m]];
    const double total = ad::log_sum_exp(exact);
    for (std::size_t m = 0; m < keep; ++m) {
      weights.omega[m] = std::exp(exact[m] - total);
      for (std::size_t k = 0; k < k_count; ++k) weights.v.at(m, k) = weights.w_bar.at(m, k) * weights.omega[m];
    }
    weights.log_p_hat = std::move(exact);
  }
  wr.log_w = std::move(kept_log_w);
  wr.log_p_hat = std::move(weights.log_p_hat);
  wr.omega = std::move(weights.omega);
  wr.w_bar = std::move(weights.w_bar);
  wr.v = std::move(weights.v);
  return {std::move(next), std::move(wr)};
}

double memory_elbo(std::span<const double> log_p, std::span<const double> omega) {
  if (log_p.size() != omega.size()) throw ShapeError("memory_elbo: size mismatch");
  double elbo = 0.0;
  for (std::size_t m = 0; m < omega.size(); ++m) {
    if (omega[m] > 0.0) elbo += omega[m] * (log_p[m] - std::log(omega[m]));
  }
  return elbo;
}

Var weighted_sum(Tape& tape, std::span<const Var> terms, std::span<const double> coeffs) {
  if (terms.size() != coeffs.size()) throw ShapeError("weighted_sum: term/coefficient count mismatch");
  std::vector<Var> kept;
  std::vector<double> w;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (coeffs[i] == 0.0) continue;
    kept.push_back(terms[i]);
    w.push_back(coeffs[i]);
  }
  if (kept.empty()) return tape.constant(0.0);
  return ad::sum(ad::mul(ad::concat(kept), tape.constant(Tensor::vector(std::move(w)))));
}

namespace {

void require_usable(const WakeResult& wake) {
  if (wake.degenerate || !wake.tape) throw NumericalError("replay gradient requested for a degenerate wake result");
}

}  // namespace

Gradients gen_grad(const HybridModel& model, const WakeResult& wake) {
  require_usable(wake);
  std::vector<Var> terms;
  std::vector<double> coeffs;
  for (std::size_t m = 0; m < wake.selected.size(); ++m) {
    for (std::size_t k = 0; k < wake.log_joint[m].size(); ++k) {
      terms.push_back(wake.log_joint[m][k]);
      coeffs.push_back(-wake.v.at(m, k));
    }
  }
  Tape& tape = *wake.tape;
  Gradients g = tape.backward(weighted_sum(tape, terms, coeffs));
  g.restrict_to(model.params(), Role::kGenerative);
  return g;
}

Gradients discrete_replay_grad(const HybridModel& model, const Observation& x, const WakeResult& wake) {
  require_usable(wake);
  Tape& tape = *wake.tape;
  std::vector<Var> terms;
  std::vector<double> coeffs;
  for (std::size_t m = 0; m < wake.selected.size(); ++m) {
    if (wake.omega[m] == 0.0) continue;
    terms.push_back(model.log_q_discrete(tape, x, wake.selected[m]));
    coeffs.push_back(-wake.omega[m]);
  }
  Gradients g = tape.backward(weighted_sum(tape, terms, coeffs));
  g.restrict_to(model.params(), Role::kRecognition);
  return g;
}

Gradients continuous_replay_grad(const HybridModel& model, const Observation&, const WakeResult& wake) {
  require_usable(wake);
  Tape& tape = *wake.tape;
  const double inv_m = 1.0 / static_cast<double>(wake.selected.size());
  std::vector<Var> terms;
  std::vector<double> coeffs;
  for (std::size_t m = 0; m < wake.selected.size(); ++m) {
    if (!std::isfinite(wake.log_p_hat[m])) continue;
    for (std::size_t k = 0; k < wake.log_q_c[m].size(); ++k) {
      terms.push_back(wake.log_q_c[m][k]);
      coeffs.push_back(-inv_m * wake.w_bar.at(m, k));
    }
  }
  Gradients g = tape.backward(weighted_sum(tape, terms, coeffs));
  g.restrict_to(model.params(), Role::kRecognition);
  return g;
}

Gradients fantasy_grad(const HybridModel& model, int samples, Rng& rng) {
  if (samples < 1) throw ConfigError("fantasy needs at least one sample");
  Gradients total(model.params());
  for (int k = 0; k < samples; ++k) {
    const JointSample s = model.sample_joint(rng);
    Tape tape(&model.params());
    const GaussianVar q_c = model.q_continuous_cached(tape, s.z_d, s.x);
    Var lq = ad::add(model.log_q_discrete(tape, s.x, s.z_d), q_c.log_prob(tape.constant(Tensor::vector(s.z_c))));
    total.add_scaled(tape.backward(lq), -1.0 / samples);
  }
  total.restrict_to(model.params(), Role::kRecognition);
  return total;
}

HmwsStep hmws_step(const HybridModel& model, const Observation& x, const Memory& memory, const HmwsConfig& config,
                   Rng& rng) {
  config.validate();
  HmwsStep step;
  step.theta = Gradients(model.params());
  step.phi = Gradients(model.params());

  auto [next, wake] = wake_update(model, x, memory, config, rng);
  step.likelihood_evals = wake.likelihood_evals;
  step.discrete_prior_evals = wake.discrete_prior_evals;
  if (wake.degenerate) {
    step.memory = memory;
    step.skipped = true;
    step.wake = std::move(wake);
    return step;
  }

  Gradients theta = gen_grad(model, wake);
  Gradients phi(model.params());
  const double lambda = config.replay_factor;
  if (lambda > 0.0) {
    phi.add_scaled(discrete_replay_grad(model, x, wake), lambda);
    phi.add_scaled(continuous_replay_grad(model, x, wake), lambda);
  }
  if (lambda < 1.0) {
    const int k = config.fantasy_samples > 0 ? config.fantasy_samples : config.importance_samples;
    phi.add_scaled(fantasy_grad(model, k, rng), 1.0 - lambda);
  }
  if (!theta.all_finite() || !phi.all_finite()) {
    step.memory = memory;
    step.skipped = true;
    step.wake = std::move(wake);
    return step;
  }
  step.theta = std::move(theta);
  step.phi = std::move(phi);
  step.memory = std::move(next);
  step.wake = std::move(wake);
  return step;
}

nlohmann::json memory_to_json(const HybridModel& model, const Memory& memory) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& z : memory.entries) entries.push_back(model.canonical_key(z));
  return {{"entries", std::move(entries)}, {"degenerate", memory.degenerate}};
}

Memory memory_from_json(const HybridModel& model, const nlohmann::json& j) {
  Memory mem;
  for (const auto& e : j.at("entries")) mem.entries.push_back(model.parse_key(e.get<std::string>()));
  mem.degenerate = j.value("degenerate", false);
  return mem;
}

}  // namespace hmws
