#include "hmws/testbed.hpp"

#include <cmath>

#include "hmws/error.hpp"

namespace hmws {

using namespace hmws::ad;

void ConjugateTestbed::validate() const {
  if (prior.empty() || prior.size() != means.size()) throw ConfigError("testbed prior/means size mismatch");
  double total = 0.0;
  for (double p : prior) {
    if (!(p > 0.0)) throw ConfigError("testbed prior probabilities must be positive");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("testbed prior does not sum to 1");
  if (!(prior_std > 0.0) || !(noise_std > 0.0)) throw ConfigError("testbed scales must be positive");
}

TestbedExact testbed_exact(const ConjugateTestbed& tb, double x) {
  tb.validate();
  const std::size_t d = tb.arity();
  const double s2 = tb.prior_std * tb.prior_std;
  const double sx2 = tb.noise_std * tb.noise_std;
  const double marginal_std = std::sqrt(s2 + sx2);
  const double post_var = 1.0 / (1.0 / s2 + 1.0 / sx2);

  TestbedExact out;
  out.log_joint.resize(d);
  out.cond_mean.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    out.log_joint[i] = std::log(tb.prior[i]) + normal_log_density(x, tb.means[i], marginal_std);
    out.cond_mean[i] = post_var * (tb.means[i] / s2 + x / sx2);
  }
  out.log_marginal = log_sum_exp(out.log_joint);
  out.posterior.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    out.posterior[i] = std::exp(out.log_joint[i] - out.log_marginal);
    out.posterior_mean += out.posterior[i] * out.cond_mean[i];
  }
  out.cond_std = std::sqrt(post_var);
  return out;
}

namespace {

std::vector<double> log_vector(const std::vector<double>& p) {
  std::vector<double> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = std::log(p[i]);
  return out;
}

std::size_t component(const Discrete& z_d, std::size_t arity) {
  if (z_d.size() != 1 || z_d[0] < 0 || static_cast<std::size_t>(z_d[0]) >= arity) {
    throw Error("testbed discrete latent must be a single index below " + std::to_string(arity));
  }
  return static_cast<std::size_t>(z_d[0]);
}

}  // namespace

TestbedModel::TestbedModel(const ConjugateTestbed& init) : arity_(init.arity()) {
  init.validate();
  const std::size_t d = arity_;
  params_.add("testbed/prior_logits", Role::kGenerative, Tensor::vector(log_vector(init.prior)));
  params_.add("testbed/means", Role::kGenerative, Tensor::vector(init.means));
  params_.add("testbed/log_prior_std", Role::kGenerative, Tensor::vector({std::log(init.prior_std)}));
  params_.add("testbed/log_noise_std", Role::kGenerative, Tensor::vector({std::log(init.noise_std)}));
  params_.add("testbed/q_logit_slope", Role::kRecognition, Tensor(Shape{d}));
  params_.add("testbed/q_logit_bias", Role::kRecognition, Tensor(Shape{d}));
  params_.add("testbed/q_mean_slope", Role::kRecognition, Tensor(Shape{d}));
  params_.add("testbed/q_mean_bias", Role::kRecognition, Tensor(Shape{d}));
  params_.add("testbed/q_log_std", Role::kRecognition, Tensor(Shape{d}));
}

ConjugateTestbed TestbedModel::current() const {
  ConjugateTestbed tb;
  Categorical prior(params_.value("testbed/prior_logits").storage());
  tb.prior = prior.probs();
  tb.means = params_.value("testbed/means").storage();
  tb.prior_std = std::exp(params_.value("testbed/log_prior_std")[0]);
  tb.noise_std = std::exp(params_.value("testbed/log_noise_std")[0]);
  return tb;
}

void TestbedModel::set_recognition_to_posterior() {
  const ConjugateTestbed tb = current();
  const std::size_t d = arity_;
  const double s2 = tb.prior_std * tb.prior_std;
  const double sx2 = tb.noise_std * tb.noise_std;
  const double v = s2 + sx2;
  const double post_var = 1.0 / (1.0 / s2 + 1.0 / sx2);
  Tensor a(Shape{d}), b(Shape{d}), c(Shape{d}), e(Shape{d}), s(Shape{d});
  for (std::size_t i = 0; i < d; ++i) {
    // log p(d | x) = log pi_d - (x - mu_d)^2 / 2v + const(x)
    a[i] = tb.means[i] / v;
    b[i] = std::log(tb.prior[i]) - tb.means[i] * tb.means[i] / (2.0 * v);
    c[i] = post_var / sx2;
    e[i] = post_var * tb.means[i] / s2;
    s[i] = 0.5 * std::log(post_var);
  }
  params_.set("testbed/q_logit_slope", a);
  params_.set("testbed/q_logit_bias", b);
  params_.set("testbed/q_mean_slope", c);
  params_.set("testbed/q_mean_bias", e);
  params_.set("testbed/q_log_std", s);
}

void TestbedModel::set_recognition_tabular(std::span<const double> probs, std::span<const double> cond_means,
                                           std::span<const double> cond_log_stds) {
  const std::size_t d = arity_;
  if (probs.size() != d || cond_means.size() != d || cond_log_stds.size() != d) {
    throw ShapeError("tabular recognition tables must have one entry per component");
  }
  Tensor b(Shape{d}), e(Shape{d}), s(Shape{d});
  for (std::size_t i = 0; i < d; ++i) {
    b[i] = std::log(probs[i]);
    e[i] = cond_means[i];
    s[i] = cond_log_stds[i];
  }
  params_.set("testbed/q_logit_slope", Tensor(Shape{d}));
  params_.set("testbed/q_logit_bias", b);
  params_.set("testbed/q_mean_slope", Tensor(Shape{d}));
  params_.set("testbed/q_mean_bias", e);
  params_.set("testbed/q_log_std", s);
}

std::optional<double> TestbedModel::exact_log_joint_discrete(const Discrete& z_d, const Observation& x) const {
  return testbed_exact(current(), x[0]).log_joint[component(z_d, arity_)];
}

Var TestbedModel::prior_discrete(Tape& tape, Discrete& z_d, Rng* rng) const {
  Var logits = tape.param("testbed/prior_logits");
  if (rng) {
    Categorical c(logits.value().storage());
    z_d = {static_cast<int>(c.sample(*rng))};
  }
  return categorical_log_prob(logits, component(z_d, arity_));
}

GaussianVar TestbedModel::prior_continuous(Tape& tape, const Discrete& z_d) const {
  const std::size_t d = component(z_d, arity_);
  return GaussianVar{reshape(index(tape.param("testbed/means"), d), Shape{1}), tape.param("testbed/log_prior_std")};
}

Var TestbedModel::log_likelihood(Tape& tape, const Discrete&, Var z_c, const Observation& x) const {
  return gaussian_log_prob(tape.constant(x), z_c, tape.param("testbed/log_noise_std"));
}

Observation TestbedModel::sample_observation(const Discrete&, std::span<const double> z_c, Rng& rng) const {
  const double sx = std::exp(params_.value("testbed/log_noise_std")[0]);
  return observation(z_c[0] + sx * standard_normal(rng));
}

Var TestbedModel::recognition_discrete(Tape& tape, const Observation& x, Discrete& z_d, Rng* rng) const {
  Var logits = add(mul(tape.param("testbed/q_logit_slope"), x[0]), tape.param("testbed/q_logit_bias"));
  if (rng) {
    Categorical c(logits.value().storage());
    z_d = {static_cast<int>(c.sample(*rng))};
  }
  return categorical_log_prob(logits, component(z_d, arity_));
}

GaussianVar TestbedModel::recognition_continuous(Tape& tape, const Discrete& z_d, const Observation& x) const {
  const std::size_t d = component(z_d, arity_);
  Var mean = add(mul(index(tape.param("testbed/q_mean_slope"), d), x[0]), index(tape.param("testbed/q_mean_bias"), d));
  return GaussianVar{reshape(mean, Shape{1}), reshape(index(tape.param("testbed/q_log_std"), d), Shape{1})};
}

}  // namespace hmws
