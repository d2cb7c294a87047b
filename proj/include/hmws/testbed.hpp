#pragma once

#include <vector>

#include "hmws/model.hpp"

namespace hmws {

/// z_d ~ Cat(prior), z_c | z_d ~ Normal(mean[z_d], prior_std^2),
/// x | z_c ~ Normal(z_c, noise_std^2). Everything is Gaussian given z_d, so
/// p(z_d, x), p(x) and the posterior have closed forms.
struct ConjugateTestbed {
  std::vector<double> prior;
  std::vector<double> means;
  double prior_std = 1.0;
  double noise_std = 1.0;

  std::size_t arity() const { return prior.size(); }
  void validate() const;
};

struct TestbedExact {
  std::vector<double> log_joint;  // log p(z_d = d, x)
  double log_marginal = 0.0;      // log p(x)
  std::vector<double> posterior;  // p(z_d = d | x)
  std::vector<double> cond_mean;  // E[z_c | z_d = d, x]
  double cond_std = 0.0;          // sd[z_c | z_d, x], shared by all d
  double posterior_mean = 0.0;    // E[z_c | x]
};

TestbedExact testbed_exact(const ConjugateTestbed& tb, double x);

/// The testbed as a learnable HybridModel. Recognition is linear in x:
/// logits_d = a_d x + b_d and z_c | d, x ~ Normal(c_d x + e_d, exp(s_d)^2),
/// which contains the exact posterior.
class TestbedModel : public HybridModel {
 public:
  explicit TestbedModel(const ConjugateTestbed& init);

  std::string_view domain() const override { return "testbed"; }

  // Current theta read back as a closed-form testbed.
  ConjugateTestbed current() const;
  // Sets phi so that q equals the exact posterior for every x.
  void set_recognition_to_posterior();
  // Sets phi so that q ignores x and equals the given tables.
  void set_recognition_tabular(std::span<const double> probs, std::span<const double> cond_means,
                               std::span<const double> cond_log_stds);

  static Observation observation(double x) { return Tensor::vector({x}); }

  std::optional<double> exact_log_joint_discrete(const Discrete& z_d, const Observation& x) const override;

 protected:
  Var prior_discrete(Tape& tape, Discrete& z_d, Rng* rng) const override;
  GaussianVar prior_continuous(Tape& tape, const Discrete& z_d) const override;
  Var log_likelihood(Tape& tape, const Discrete& z_d, Var z_c, const Observation& x) const override;
  Observation sample_observation(const Discrete& z_d, std::span<const double> z_c, Rng& rng) const override;
  Var recognition_discrete(Tape& tape, const Observation& x, Discrete& z_d, Rng* rng) const override;
  GaussianVar recognition_continuous(Tape& tape, const Discrete& z_d, const Observation& x) const override;

 private:
  std::size_t arity_;
};

}  // namespace hmws
