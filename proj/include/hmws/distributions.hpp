#pragma once

#include <vector>

#include "hmws/ops.hpp"
#include "hmws/rng.hpp"
#include "hmws/tensor.hpp"

namespace hmws {

inline constexpr double kHalfLog2Pi = 0.91893853320467274178;

/// Categorical over {0..D-1} parameterized by unnormalized logits. Logits of
/// -inf mark values outside the support.
class Categorical {
 public:
  explicit Categorical(std::vector<double> logits);

  std::size_t arity() const { return logits_.size(); }
  const std::vector<double>& logits() const { return logits_; }
  std::vector<double> log_probs() const;
  std::vector<double> probs() const;
  double log_prob(std::size_t value) const;
  std::size_t sample(Rng& rng) const;

 private:
  std::vector<double> logits_;
  double log_norm_;
};

class DiagonalGaussian {
 public:
  DiagonalGaussian(std::vector<double> mean, std::vector<double> log_std);

  std::size_t dim() const { return mean_.size(); }
  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& log_std() const { return log_std_; }
  double log_prob(std::span<const double> value) const;
  std::vector<double> sample(Rng& rng) const;

 private:
  std::vector<double> mean_;
  std::vector<double> log_std_;
};

double normal_log_density(double x, double mean, double stddev);

// Draws the index of one of `probs` (need not sum exactly to 1).
std::size_t sample_index(std::span<const double> probs, Rng& rng);

namespace ad {

// Tape versions. `logits` is rank 1.
Var categorical_log_prob(Var logits, std::size_t value);
// Sum of independent Normal(mean_i, exp(log_std_i)) log densities at z.
Var gaussian_log_prob(Var z, Var mean, Var log_std);

}  // namespace ad

// Diagonal Gaussian whose parameters live on a tape.
struct GaussianVar {
  Var mean;
  Var log_std;

  std::size_t dim() const { return mean.size(); }
  DiagonalGaussian detached() const;
  Var log_prob(Var z) const { return ad::gaussian_log_prob(z, mean, log_std); }
  // mean + exp(log_std) * eps, differentiable in the parameters.
  Var reparameterize(std::span<const double> eps) const;
};

}  // namespace hmws
