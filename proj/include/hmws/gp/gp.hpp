#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "hmws/gp/kernel.hpp"
#include "hmws/rng.hpp"
#include "hmws/tape.hpp"

namespace hmws::gp {

// Diagonal jitter tried in order when factorizing K + sigma^2 I.
inline constexpr double kJitterLadder[] = {0.0, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2};

// Cholesky of a covariance with jitter escalation; nullopt when every rung
// fails.
std::optional<Eigen::LLT<Eigen::MatrixXd>> robust_cholesky(const Eigen::MatrixXd& cov);

struct MarginalResult {
  double value = 0.0;  // -inf when the factorization failed
  double d_sigma = 0.0;
  std::vector<double> d_raw;
};

// log N(y; 0, K + sigma^2 I) and optionally its gradient in sigma and in the
// raw kernel parameters.
MarginalResult gp_log_marginal(std::span<const int> tokens, std::span<const double> raw, double sigma,
                               std::span<const double> t, std::span<const double> y, bool with_grad = false);

struct Prediction {
  std::vector<double> mean;
  std::vector<double> var;     // includes observation noise
  std::vector<double> sample;  // one joint draw, empty without an rng
};

Prediction gp_predict(std::span<const int> tokens, std::span<const double> raw, double sigma,
                      std::span<const double> t, std::span<const double> y, std::span<const double> t_query,
                      Rng* rng = nullptr);

// Draws y ~ N(0, K + sigma^2 I) on the grid t.
std::vector<double> gp_sample(std::span<const int> tokens, std::span<const double> raw, double sigma,
                              std::span<const double> t, Rng& rng);

// The normalized grid 0, 1/(n-1), ..., 1.
std::vector<double> unit_grid(std::size_t n);

// Tape version: raw parameters and the raw noise (sigma = softplus(raw)) are
// differentiable; t and y are data. May return -inf.
Var gp_log_marginal_var(Var raw, Var raw_sigma, std::vector<int> tokens, std::span<const double> t,
                    std::span<const double> y);
}  // namespace hmws::gp
