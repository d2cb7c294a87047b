#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "doctest.h"
#include "gradcheck.hpp"
#include "hmws/baselines.hpp"
#include "hmws/engine.hpp"
#include "hmws/error.hpp"
#include "testbed_helpers.hpp"

using namespace hmws;
using namespace hmws::testing;

namespace {

void set_mismatched_q(TestbedModel& model, double x) {
  const auto ex = testbed_exact(model.current(), x);
  const std::size_t d = ex.posterior.size();
  std::vector<double> probs(d), means(d), log_stds(d);
  for (std::size_t i = 0; i < d; ++i) {
    probs[i] = 0.5 * ex.posterior[i] + 0.5 / d;
    means[i] = ex.cond_mean[i] - 0.4;
    log_stds[i] = std::log(1.5 * ex.cond_std);
  }
  model.set_recognition_tabular(probs, means, log_stds);
}

// Running per-component mean and variance.
struct Moments {
  std::vector<double> sum, sum_sq;
  long n = 0;

  void add(const std::vector<double>& g) {
    if (sum.empty()) sum.assign(g.size(), 0.0), sum_sq.assign(g.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      sum[i] += g[i];
      sum_sq[i] += g[i] * g[i];
    }
    ++n;
  }
  double mean(std::size_t i) const { return sum[i] / n; }
  double var(std::size_t i) const { return sum_sq[i] / n - mean(i) * mean(i); }
  double se(std::size_t i) const { return std::sqrt(var(i) / n); }
  double total_var() const {
    double t = 0;
    for (std::size_t i = 0; i < sum.size(); ++i) t += var(i);
    return t;
  }
};

// E over z_d ~ probs, z_c ~ Normal(means[d], sd) of the per-point gradient f.
std::vector<double> enumerate_expectation(const std::vector<double>& probs, const std::vector<double>& means, double sd,
                                          const std::function<std::vector<double>(int, double)>& f) {
  std::vector<double> total;
  for (std::size_t d = 0; d < probs.size(); ++d) {
    const int points = 801;
    const double lo = means[d] - 10 * sd, h = 20 * sd / (points - 1);
    for (int i = 0; i < points; ++i) {
      const double z = lo + i * h;
      const double w = (i == 0 || i == points - 1 ? 0.5 : 1.0) * h * std::exp(normal_log_density(z, means[d], sd));
      const auto g = f(static_cast<int>(d), z);
      if (total.empty()) total.assign(g.size(), 0.0);
      for (std::size_t j = 0; j < g.size(); ++j) total[j] += probs[d] * w * g[j];
    }
  }
  return total;
}

double norm(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("configuration") {
  BaselineConfig c;
  c.method = BaselineMethod::kVimco;
  c.particles = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.method = BaselineMethod::kRws;
  CHECK_NOTHROW(c.validate());
  c.particles = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(parse_baseline_method("vimco") == BaselineMethod::kVimco);
  CHECK_THROWS_AS(parse_baseline_method("iwae"), ConfigError);
  CHECK(parse_continuous_mode("score-function") == ContinuousGradMode::kScoreFunction);
}

TEST_CASE("likelihood evaluations equal S") {
  TestbedModel model(three_component());
  const Observation x = TestbedModel::observation(0.1);
  Rng rng(1);
  CHECK(rws_grads(model, x, 30, rng).likelihood_evals == 30);
  CHECK(reinforce_grad(model, x, 30, rng).likelihood_evals == 30);
  CHECK(vimco_grad(model, x, 50, rng).likelihood_evals == 50);
}

TEST_CASE("vimco learning signals") {
  const auto zero = vimco_learning_signals(std::vector<double>{0.7, 0.7});
  CHECK(std::abs(zero[0]) < 1e-15);
  CHECK(std::abs(zero[1]) < 1e-15);

  const std::vector<double> lw = {-1.0, 0.5, 2.0, -3.0};
  const auto s = vimco_learning_signals(lw);
  // Oracle: direct leave-one-out evaluation in linear space.
  for (std::size_t k = 0; k < lw.size(); ++k) {
    double geo = 0, full = 0, loo = 0;
    for (std::size_t j = 0; j < lw.size(); ++j)
      if (j != k) geo += lw[j] / 3.0;
    for (std::size_t j = 0; j < lw.size(); ++j) {
      full += std::exp(lw[j]);
      loo += j == k ? std::exp(geo) : std::exp(lw[j]);
    }
    CHECK(s[k] == doctest::Approx(std::log(full) - std::log(loo)).epsilon(1e-12));
  }

  std::vector<double> shifted = lw;
  for (auto& v : shifted) v += 40.0;
  const auto ss = vimco_learning_signals(shifted);
  for (std::size_t k = 0; k < lw.size(); ++k) CHECK(ss[k] == doctest::Approx(s[k]).epsilon(1e-10));

  const std::vector<double> perm = {lw[2], lw[0], lw[3], lw[1]};
  const auto sp = vimco_learning_signals(perm);
  CHECK(sp[0] == doctest::Approx(s[2]));
  CHECK(sp[1] == doctest::Approx(s[0]));
  CHECK(sp[2] == doctest::Approx(s[3]));
  CHECK(sp[3] == doctest::Approx(s[1]));
}

TEST_CASE("reinforce with q equal to the posterior has zero expected phi-gradient") {
  TestbedModel model(three_component());
  const double xv = 0.6;
  const Observation x = TestbedModel::observation(xv);
  model.set_recognition_to_posterior();
  const auto ex = testbed_exact(model.current(), xv);

  // Enumeration of the score-function formula over z_d and quadrature over z_c.
  auto per_point = [&](int d, double z) {
    Tape tape(&model.params());
    Var lq = ad::add(model.log_q_discrete(tape, x, {d}),
                     model.q_continuous_cached(tape, {d}, x).log_prob(tape.constant(Tensor::vector({z}))));
    Var lp = model.log_joint(tape, {d}, tape.constant(Tensor::vector({z})), x);
    const double log_ratio = lp.item() - lq.item();
    auto score = flatten(model.params(), tape.backward(lq), Role::kRecognition);
    for (auto& s : score) s = -(log_ratio * s - s);
    return score;
  };
  const auto expected = enumerate_expectation(ex.posterior, ex.cond_mean, ex.cond_std, per_point);
  CHECK(norm(expected) < 1e-8);

  for (auto mode : {ContinuousGradMode::kScoreFunction, ContinuousGradMode::kReparameterized}) {
    Rng rng(7);
    Moments mom;
    for (int r = 0; r < 20000; ++r) {
      mom.add(flatten(model.params(), reinforce_grad(model, x, 1, rng, mode).phi, Role::kRecognition));
    }
    for (std::size_t i = 0; i < mom.sum.size(); ++i) {
      CAPTURE(i);
      CHECK(std::abs(mom.mean(i)) <= 4 * mom.se(i) + 1e-12);
    }
  }
}

TEST_CASE("reinforce with one discrete value reduces to the pathwise term") {
  TestbedModel model(ConjugateTestbed{{1.0}, {0.5}, 1.0, 0.7});
  set_mismatched_q(model, 0.2);
  const Observation x = TestbedModel::observation(0.2);
  Rng rng(3);
  Rng replay = rng;
  const auto g = reinforce_grad(model, x, 1, rng);

  Tape tape(&model.params());
  auto [z_d, lq_d] = model.sample_q_discrete(tape, x, replay);
  const GaussianVar q_c = model.q_continuous_cached(tape, z_d, x);
  const double eps = standard_normal(replay);
  Var z = q_c.reparameterize(std::vector<double>{eps});
  Var log_ratio = ad::sub(ad::sub(model.log_joint(tape, z_d, z, x), lq_d), q_c.log_prob(z));
  const auto ref = flatten(model.params(), tape.backward(ad::neg(log_ratio)), Role::kRecognition);
  CHECK(relative_error(flatten(model.params(), g.phi, Role::kRecognition), ref) < 1e-12);
}

TEST_CASE("reinforce has higher variance than vimco") {
  TestbedModel model(three_component());
  const double xv = 0.6;
  set_mismatched_q(model, xv);
  const Observation x = TestbedModel::observation(xv);
  Rng r1(11), r2(12);
  Moments rf, vm;
  for (int r = 0; r < 10000; ++r) {
    rf.add(flatten(model.params(), reinforce_grad(model, x, 10, r1).phi, Role::kRecognition));
    vm.add(flatten(model.params(), vimco_grad(model, x, 10, r2).phi, Role::kRecognition));
  }
  CHECK(rf.total_var() > vm.total_var());
}

TEST_CASE("vimco and rws agree on the expected theta-gradient") {
  TestbedModel model(three_component());
  const double xv = 0.6;
  set_mismatched_q(model, xv);
  const Observation x = TestbedModel::observation(xv);
  Rng r1(21), r2(22);
  Moments vm, rw;
  for (int r = 0; r < 100000; ++r) {
    vm.add(flatten(model.params(), vimco_grad(model, x, 3, r1).theta, Role::kGenerative));
    rw.add(flatten(model.params(), rws_grads(model, x, 3, r2).theta, Role::kGenerative));
  }
  for (std::size_t i = 0; i < vm.sum.size(); ++i) {
    CAPTURE(i);
    CHECK(std::abs(vm.mean(i) - rw.mean(i)) <= 4 * std::hypot(vm.se(i), rw.se(i)) + 1e-12);
  }
}

TEST_CASE("gradients are invariant to scaling the joint") {
  const auto tb = three_component();
  TestbedModel plain(tb);
  ShiftedTestbed shifted(tb, -300.0);
  set_mismatched_q(plain, 0.6);
  set_mismatched_q(shifted, 0.6);
  const Observation x = TestbedModel::observation(0.6);
  for (int r = 0; r < 20; ++r) {
    Rng a(100 + r), b(100 + r);
    const auto g1 = vimco_grad(plain, x, 5, a);
    const auto g2 = vimco_grad(shifted, x, 5, b);
    CHECK(relative_error(flatten(plain.params(), g1.phi, Role::kRecognition),
                         flatten(plain.params(), g2.phi, Role::kRecognition)) < 1e-9);
    Rng c(200 + r), d(200 + r);
    const auto h1 = rws_grads(plain, x, 5, c);
    const auto h2 = rws_grads(shifted, x, 5, d);
    CHECK(relative_error(flatten(plain.params(), h1.phi, Role::kRecognition),
                         flatten(plain.params(), h2.phi, Role::kRecognition)) < 1e-9);
    CHECK(relative_error(flatten(plain.params(), h1.theta, Role::kGenerative),
                         flatten(plain.params(), h2.theta, Role::kGenerative)) < 1e-9);
  }
}

TEST_CASE("rws") {
  TestbedModel model(three_component());
  const double xv = 0.6;
  set_mismatched_q(model, xv);
  const Observation x = TestbedModel::observation(xv);

  SUBCASE("one particle is a single-sample gradient") {
    Rng rng(5);
    Rng replay = rng;
    const auto g = rws_grads(model, x, 1, rng);
    Tape tape(&model.params());
    auto [z_d, lq_d] = model.sample_q_discrete(tape, x, replay);
    const DiagonalGaussian q = model.q_continuous_cached(tape, z_d, x).detached();
    const double z = q.mean()[0] + std::exp(q.log_std()[0]) * standard_normal(replay);
    Var zc = tape.constant(Tensor::vector({z}));
    Var lq = ad::add(lq_d, model.q_continuous_cached(tape, z_d, x).log_prob(zc));
    const Gradients gq = tape.backward(lq);
    Tape tape2(&model.params());
    const Gradients gp = tape2.backward(model.log_joint(tape2, z_d, tape2.constant(Tensor::vector({z})), x));
    auto ref_phi = flatten(model.params(), gq, Role::kRecognition);
    auto ref_theta = flatten(model.params(), gp, Role::kGenerative);
    for (auto& v : ref_phi) v = -v;
    for (auto& v : ref_theta) v = -v;
    CHECK(relative_error(flatten(model.params(), g.phi, Role::kRecognition), ref_phi) < 1e-12);
    CHECK(relative_error(flatten(model.params(), g.theta, Role::kGenerative), ref_theta) < 1e-12);
  }

  SUBCASE("wake-phi matches the posterior expectation") {
    const auto ex = testbed_exact(model.current(), xv);
    auto per_point = [&](int d, double z) {
      Tape tape(&model.params());
      Var lq = ad::add(model.log_q_discrete(tape, x, {d}),
                       model.q_continuous_cached(tape, {d}, x).log_prob(tape.constant(Tensor::vector({z}))));
      auto g = flatten(model.params(), tape.backward(lq), Role::kRecognition);
      for (auto& v : g) v = -v;
      return g;
    };
    const auto oracle = enumerate_expectation(ex.posterior, ex.cond_mean, ex.cond_std, per_point);
    Rng rng(6);
    const auto g = rws_grads(model, x, 10000, rng);
    CHECK(relative_error(flatten(model.params(), g.phi, Role::kRecognition), oracle) < 0.02);
  }
}

TEST_CASE("rws wake-theta and hmws gen_grad agree in expectation") {
  // With q equal to the posterior both are unbiased for -grad log p(x).
  TestbedModel model(ConjugateTestbed{{0.35, 0.65}, {-1.0, 1.5}, 0.9, 0.6});
  const double xv = 0.3;
  model.set_recognition_to_posterior();
  const Observation x = TestbedModel::observation(xv);
  HmwsConfig cfg;
  cfg.memory_size = 2;
  cfg.proposals = 1;
  cfg.importance_samples = 3;
  const int s = static_cast<int>(cfg.likelihood_budget());
  Memory mem{{{0}, {1}}, false};
  Rng r1(31), r2(32);
  Moments hm, rw;
  for (int r = 0; r < 100000; ++r) {
    const auto [next, wake] = wake_update(model, x, mem, cfg, r1);
    hm.add(flatten(model.params(), gen_grad(model, wake), Role::kGenerative));
    rw.add(flatten(model.params(), rws_grads(model, x, s, r2).theta, Role::kGenerative));
  }
  const auto exact = exact_theta_grad(model, xv);
  for (std::size_t i = 0; i < hm.sum.size(); ++i) {
    CAPTURE(i);
    CHECK(std::abs(hm.mean(i) - rw.mean(i)) <= 4 * std::hypot(hm.se(i), rw.se(i)) + 1e-9);
    CHECK(std::abs(hm.mean(i) + exact[i]) <= 4 * hm.se(i) + 1e-9);
  }
}

TEST_CASE("iwae evaluation") {
  TestbedModel model(three_component());
  const double xv = 0.6;
  const Observation x = TestbedModel::observation(xv);
  const double log_px = testbed_exact(model.current(), xv).log_marginal;

  SUBCASE("exact posterior proposal is exact for any S") {
    model.set_recognition_to_posterior();
    Rng rng(1);
    for (int s : {1, 7, 100}) CHECK(iwae_log_marginal(model, x, s, rng) == doctest::Approx(log_px).epsilon(1e-10));
  }
  SUBCASE("one sample is the ELBO sample") {
    set_mismatched_q(model, xv);
    Rng rng(2);
    Rng replay = rng;
    const double est = iwae_log_marginal(model, x, 1, rng);
    Tape tape(&model.params());
    auto [z_d, lq_d] = model.sample_q_discrete(tape, x, replay);
    const GaussianVar q = model.q_continuous_cached(tape, z_d, x);
    const DiagonalGaussian qd = q.detached();
    const double z = qd.mean()[0] + std::exp(qd.log_std()[0]) * standard_normal(replay);
    Var zc = tape.constant(Tensor::vector({z}));
    CHECK(est == doctest::Approx(model.log_joint(tape, z_d, zc, x).item() - lq_d.item() - q.log_prob(zc).item()));
  }
  SUBCASE("bound tightens with S") {
    set_mismatched_q(model, xv);
    Rng rng(3);
    std::vector<double> mean, se;
    for (int s : {1, 10, 100}) {
      double sum = 0, sum_sq = 0;
      const int reps = 10000;
      for (int r = 0; r < reps; ++r) {
        const double v = iwae_log_marginal(model, x, s, rng);
        sum += v;
        sum_sq += v * v;
      }
      mean.push_back(sum / reps);
      se.push_back(std::sqrt((sum_sq / reps - mean.back() * mean.back()) / reps));
    }
    CHECK(mean[0] <= mean[1] + 3 * std::hypot(se[0], se[1]));
    CHECK(mean[1] <= mean[2] + 3 * std::hypot(se[1], se[2]));
    CHECK(mean[2] <= log_px + 3 * se[2]);
  }
}
