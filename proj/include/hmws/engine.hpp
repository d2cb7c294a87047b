#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "hmws/model.hpp"

namespace hmws {

struct HmwsConfig {
  int memory_size = 2;         // M
  int proposals = 8;           // N
  int importance_samples = 3;  // K
  double replay_factor = 0.5;  // lambda
  // Fantasy samples per step; 0 means K as in a single-datapoint iteration.
  int fantasy_samples = 0;
  // Score memory candidates by the model's exact log p(z_d, x) instead of the
  // K-sample importance estimate. Only for models that provide it.
  bool exact_scoring = false;

  void validate() const;
  // Likelihood evaluations one wake phase may spend: K (N + M).
  std::int64_t likelihood_budget() const;
};

/// Per-datapoint memory: the support of q_mem(z_d | x).
struct Memory {
  std::vector<Discrete> entries;
  // Set when fewer than M unique values could be found; cleared once a wake
  // update fills the memory with M unique entries.
  bool degenerate = false;
};

/// Normalized quantities derived from an [M, K] matrix of log importance
/// weights. All arithmetic is in log space.
struct WakeWeights {
  std::vector<double> log_p_hat;  // log (1/K) sum_k w_mk
  std::vector<double> omega;      // p-hat_m / sum_i p-hat_i
  Tensor w_bar;                   // w_mk / sum_k w_mk
  Tensor v;                       // w_mk / sum_{i,j} w_ij
};

WakeWeights compute_wake_weights(const Tensor& log_w);

struct WakeResult {
  std::vector<Discrete> selected;
  std::vector<std::vector<Continuous>> z_c;  // [m][k]
  Tensor log_w;                              // [M, K]
  std::vector<double> log_p_hat;
  std::vector<double> omega;
  Tensor w_bar;
  Tensor v;
  bool degenerate = false;
  std::size_t candidates = 0;
  std::int64_t likelihood_evals = 0;
  std::int64_t discrete_prior_evals = 0;

  // Recording of the wake phase, reused by the replay gradients.
  std::shared_ptr<Tape> tape;
  std::vector<std::vector<Var>> log_joint;  // [m][k]
  std::vector<std::vector<Var>> log_q_c;    // [m][k]
};

// M unique draws from q(z_d | x), falling back to the prior when q keeps
// repeating itself; duplicates are accepted (and the memory flagged) after
// 100 M attempts.
Memory init_memory(const HybridModel& model, const Observation& x, int memory_size, Rng& rng);

// Propose N, merge with memory, score by K-sample importance sampling, keep
// the best M. An all -inf candidate set leaves the memory unchanged and
// flags the result degenerate.
std::pair<Memory, WakeResult> wake_update(const HybridModel& model, const Observation& x, const Memory& memory,
                                          const HmwsConfig& config, Rng& rng);

// ELBO of q_mem: sum_m omega_m (log p_m - log omega_m).
double memory_elbo(std::span<const double> log_p, std::span<const double> omega);

// -sum_{m,k} v_mk grad_theta log p(z_d^m, z_c^mk, x).
Gradients gen_grad(const HybridModel& model, const WakeResult& wake);
// -sum_m omega_m grad_phi log q(z_d^m | x).
Gradients discrete_replay_grad(const HybridModel& model, const Observation& x, const WakeResult& wake);
// -(1/M) sum_{m,k} w_bar_mk grad_phi log q(z_c^mk | z_d^m, x).
Gradients continuous_replay_grad(const HybridModel& model, const Observation& x, const WakeResult& wake);
// -(1/K) sum_k grad_phi log q(z_k | x_k), (z_k, x_k) ~ p_theta.
Gradients fantasy_grad(const HybridModel& model, int samples, Rng& rng);

struct HmwsStep {
  Gradients theta;
  Gradients phi;
  Memory memory;
  bool skipped = false;
  std::int64_t likelihood_evals = 0;
  std::int64_t discrete_prior_evals = 0;
  WakeResult wake;
};

// One iteration of the algorithm for a single datapoint.
HmwsStep hmws_step(const HybridModel& model, const Observation& x, const Memory& memory, const HmwsConfig& config,
                   Rng& rng);

// Weighted sum of scalar Vars with constant coefficients; zero coefficients
// are dropped so that -inf terms never meet a zero weight.
Var weighted_sum(Tape& tape, std::span<const Var> terms, std::span<const double> coeffs);

nlohmann::json memory_to_json(const HybridModel& model, const Memory& memory);
Memory memory_from_json(const HybridModel& model, const nlohmann::json& j);

}  // namespace hmws
