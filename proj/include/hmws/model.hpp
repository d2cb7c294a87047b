#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hmws/distributions.hpp"
#include "hmws/param_store.hpp"
#include "hmws/rng.hpp"
#include "hmws/tape.hpp"

namespace hmws {

// Every domain encodes its discrete latent as a flat integer sequence (kernel
// tokens, tower heights + primitive indices, a mixture component) and its
// continuous latent as a flat vector of unconstrained reals whose length may
// depend on the discrete part.
using Discrete = std::vector<int>;
using Continuous = std::vector<double>;
using Observation = Tensor;

struct JointSample {
  Discrete z_d;
  Continuous z_c;
  Observation x;
};

/// Generative model p_theta(z_d, z_c, x) = p(z_d) p(z_c | z_d) p(x | z_d, z_c)
/// with factorized recognition q_phi(z_d | x) q_phi(z_c | z_d, x).
///
/// A tape passed to these methods records computations for a single
/// observation; per-tape caches (signal embeddings, conditional Gaussians)
/// rely on that.
class HybridModel {
 public:
  virtual ~HybridModel() = default;

  virtual std::string_view domain() const = 0;

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // --- generative side (theta) -------------------------------------------
  Var log_prior_discrete(Tape& tape, const Discrete& z_d) const;
  Discrete sample_prior_discrete(Tape& tape, Rng& rng) const;
  // p(z_c | z_d), cached per tape and discrete value.
  GaussianVar prior_continuous_cached(Tape& tape, const Discrete& z_d) const;
  // log p(z_c | z_d) + log p(x | z_d, z_c); counts one likelihood evaluation.
  Var log_conditional(Tape& tape, const Discrete& z_d, Var z_c, const Observation& x) const;
  // log p(z_d, z_c, x); counts one likelihood and one discrete-prior evaluation.
  Var log_joint(Tape& tape, const Discrete& z_d, Var z_c, const Observation& x) const;
  JointSample sample_joint(Rng& rng) const;

  // --- recognition side (phi) --------------------------------------------
  Var log_q_discrete(Tape& tape, const Observation& x, const Discrete& z_d) const;
  // Returns the sample and its log-probability on the tape.
  std::pair<Discrete, Var> sample_q_discrete(Tape& tape, const Observation& x, Rng& rng) const;
  GaussianVar q_continuous_cached(Tape& tape, const Discrete& z_d, const Observation& x) const;

  // Canonical serialization: equal iff the discrete latents are equal.
  virtual std::string canonical_key(const Discrete& z_d) const;
  virtual Discrete parse_key(std::string_view key) const;
  // Human-readable form for exports.
  virtual std::string describe(const Discrete& z_d) const { return canonical_key(z_d); }

  // Exact log p(z_d, x), for models where it is tractable.
  virtual std::optional<double> exact_log_joint_discrete(const Discrete& z_d, const Observation& x) const;

 protected:
  // Scores z_d when rng is null; otherwise samples into z_d. Returns log p(z_d).
  virtual Var prior_discrete(Tape& tape, Discrete& z_d, Rng* rng) const = 0;
  virtual GaussianVar prior_continuous(Tape& tape, const Discrete& z_d) const = 0;
  virtual Var log_likelihood(Tape& tape, const Discrete& z_d, Var z_c, const Observation& x) const = 0;
  virtual Observation sample_observation(const Discrete& z_d, std::span<const double> z_c, Rng& rng) const = 0;
  // Same contract as prior_discrete, conditioned on x.
  virtual Var recognition_discrete(Tape& tape, const Observation& x, Discrete& z_d, Rng* rng) const = 0;
  virtual GaussianVar recognition_continuous(Tape& tape, const Discrete& z_d, const Observation& x) const = 0;

  ParamStore params_;
};

}  // namespace hmws
