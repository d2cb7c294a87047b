#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "doctest.h"
#include "gradcheck.hpp"
#include "hmws/adam.hpp"
#include "hmws/engine.hpp"
#include "hmws/error.hpp"
#include "testbed_helpers.hpp"

using namespace hmws;
using namespace hmws::testing;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::set<std::string> key_set(const HybridModel& model, const Memory& mem) {
  std::set<std::string> out;
  for (const auto& z : mem.entries) out.insert(model.canonical_key(z));
  return out;
}

Memory full_support(std::size_t d) {
  Memory mem;
  for (std::size_t i = 0; i < d; ++i) mem.entries.push_back({static_cast<int>(i)});
  return mem;
}

// q ignores x and is deliberately off: uniform z_d, shifted and widened z_c.
void set_mismatched_q(TestbedModel& model, double x) {
  const auto ex = testbed_exact(model.current(), x);
  const std::size_t d = ex.posterior.size();
  std::vector<double> probs(d, 1.0 / d), means(d), log_stds(d);
  for (std::size_t i = 0; i < d; ++i) {
    means[i] = ex.cond_mean[i] + 0.3;
    log_stds[i] = std::log(1.3 * ex.cond_std);
  }
  model.set_recognition_tabular(probs, means, log_stds);
}

void zero_slopes(const ParamStore& store, Gradients& g) {
  g[store.id("testbed/q_logit_slope")].fill(0.0);
  g[store.id("testbed/q_mean_slope")].fill(0.0);
}

std::vector<double> all_values(const Gradients& g) {
  std::vector<double> out;
  for (std::size_t i = 0; i < g.size(); ++i)
    for (double v : g.at(i).values()) out.push_back(v);
  return out;
}

}  // namespace

TEST_CASE("wake weights worked example") {
  Tensor log_w = Tensor::matrix(2, 2, {0.0, std::log(3.0), std::log(2.0), std::log(2.0)});
  const WakeWeights w = compute_wake_weights(log_w);
  CHECK(std::exp(w.log_p_hat[0]) == doctest::Approx(2.0));
  CHECK(std::exp(w.log_p_hat[1]) == doctest::Approx(2.0));
  CHECK(w.omega[0] == doctest::Approx(0.5));
  CHECK(w.w_bar.at(0, 0) == doctest::Approx(0.25));
  CHECK(w.w_bar.at(0, 1) == doctest::Approx(0.75));
  const double v[4] = {0.125, 0.375, 0.25, 0.25};
  for (int i = 0; i < 4; ++i) CHECK(w.v[i] == doctest::Approx(v[i]).epsilon(1e-14));
}

TEST_CASE("wake weight invariants") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 1 + trial % 4, k = 1 + trial % 7;
    Tensor log_w(Shape{m, k});
    for (auto& v : log_w.values()) v = 5 * standard_normal(rng);
    if (k > 1) log_w.at(0, 0) = -kInf;
    const WakeWeights w = compute_wake_weights(log_w);
    double s_omega = 0, s_v = 0;
    for (std::size_t i = 0; i < m; ++i) {
      s_omega += w.omega[i];
      double row = 0;
      for (std::size_t j = 0; j < k; ++j) {
        row += w.w_bar.at(i, j);
        s_v += w.v.at(i, j);
        CHECK(w.v.at(i, j) == doctest::Approx(w.w_bar.at(i, j) * w.omega[i]).epsilon(1e-12));
      }
      CHECK(std::abs(row - 1.0) < 1e-9);
    }
    CHECK(std::abs(s_omega - 1.0) < 1e-9);
    CHECK(std::abs(s_v - 1.0) < 1e-9);

    Tensor shifted = log_w;
    for (auto& v : shifted.values()) v += 123.4;
    const WakeWeights ws = compute_wake_weights(shifted);
    for (std::size_t i = 0; i < m; ++i) CHECK(ws.omega[i] == doctest::Approx(w.omega[i]).epsilon(1e-10));
    for (std::size_t i = 0; i < m * k; ++i) CHECK(ws.v[i] == doctest::Approx(w.v[i]).epsilon(1e-10));
  }
}

TEST_CASE("init_memory") {
  Rng rng(1);
  ConjugateTestbed tb4{{0.25, 0.25, 0.25, 0.25}, {0, 1, 2, 3}, 1.0, 1.0};
  TestbedModel model4(tb4);  // recognition starts uniform
  const Observation x = TestbedModel::observation(0.5);
  const Memory m3 = init_memory(model4, x, 3, rng);
  CHECK(m3.entries.size() == 3);
  CHECK(key_set(model4, m3).size() == 3);
  CHECK_FALSE(m3.degenerate);
  const Memory m1 = init_memory(model4, x, 1, rng);
  CHECK(m1.entries.size() == 1);
  CHECK_FALSE(m1.degenerate);

  TestbedModel model2(ConjugateTestbed{{0.5, 0.5}, {-1, 1}, 1.0, 1.0});
  const Memory m2 = init_memory(model2, x, 2, rng);
  CHECK(key_set(model2, m2) == std::set<std::string>{"0", "1"});
  const Memory too_many = init_memory(model2, x, 3, rng);
  CHECK(too_many.entries.size() == 3);
  CHECK(too_many.degenerate);
}

TEST_CASE("wake update keeps a unique memory of size M") {
  TestbedModel model(three_component());
  set_mismatched_q(model, 0.4);
  const Observation x = TestbedModel::observation(0.4);
  HmwsConfig cfg;
  cfg.memory_size = 2;
  cfg.proposals = 4;
  cfg.importance_samples = 3;
  Rng rng(5);
  Memory mem = init_memory(model, x, 2, rng);
  for (int i = 0; i < 50; ++i) {
    auto [next, wake] = wake_update(model, x, mem, cfg, rng);
    CHECK(next.entries.size() == 2);
    CHECK(key_set(model, next).size() == 2);
    CHECK(wake.log_p_hat[0] >= wake.log_p_hat[1]);
    mem = next;
  }
}

TEST_CASE("wake update is idempotent when proposals add nothing") {
  TestbedModel model(ConjugateTestbed{{0.4, 0.6}, {-1, 1}, 1.0, 0.5});
  const Observation x = TestbedModel::observation(0.2);
  HmwsConfig cfg;
  cfg.memory_size = 2;
  cfg.proposals = 3;
  Rng rng(8);
  const Memory mem = full_support(2);
  for (int i = 0; i < 20; ++i) CHECK(key_set(model, wake_update(model, x, mem, cfg, rng).first) == key_set(model, mem));

  // Exact scores make the ranking deterministic; the top M never move.
  TestbedModel model3(three_component());
  cfg.exact_scoring = true;
  const auto ex = testbed_exact(model3.current(), 0.2);
  std::vector<int> order = {0, 1, 2};
  std::sort(order.begin(), order.end(), [&](int a, int b) { return ex.log_joint[a] > ex.log_joint[b]; });
  Memory top{{{order[0]}, {order[1]}}};
  for (int i = 0; i < 20; ++i) {
    Memory next = wake_update(model3, x, top, cfg, rng).first;
    CHECK(key_set(model3, next) == key_set(model3, top));
    top = next;
  }
}

TEST_CASE("importance estimate of p(z_d, x) with many samples") {
  TestbedModel model(three_component());
  const double xv = 0.4;
  set_mismatched_q(model, xv);
  const Observation x = TestbedModel::observation(xv);
  HmwsConfig cfg;
  cfg.memory_size = 3;
  cfg.proposals = 1;
  cfg.importance_samples = 10000;
  Rng rng(21);
  const auto [mem, wake] = wake_update(model, x, full_support(3), cfg, rng);
  const auto ex = testbed_exact(model.current(), xv);
  for (std::size_t m = 0; m < 3; ++m) {
    const double exact = ex.log_joint[wake.selected[m][0]];
    CHECK(std::abs(wake.log_p_hat[m] - exact) < 0.01 * std::abs(exact));
  }
}

TEST_CASE("memory ELBO") {
  CHECK(memory_elbo(std::vector<double>{-3.5}, std::vector<double>{1.0}) == doctest::Approx(-3.5));
  CHECK(memory_elbo(std::vector<double>{-2.0, -2.0}, std::vector<double>{0.5, 0.5}) ==
        doctest::Approx(-2.0 + std::log(2.0)));
  CHECK(memory_elbo(std::vector<double>{-1.0, -kInf}, std::vector<double>{1.0, 0.0}) == doctest::Approx(-1.0));

  ConjugateTestbed tb;
  tb.prior = {0.1, 0.15, 0.2, 0.25, 0.2, 0.1};
  tb.means = {-3, -1.5, 0, 1, 2.5, 4};
  tb.prior_std = 0.8;
  tb.noise_std = 0.6;
  TestbedModel model(tb);
  const Observation x = TestbedModel::observation(0.7);
  HmwsConfig cfg;
  cfg.memory_size = 2;
  cfg.proposals = 1;
  cfg.importance_samples = 1;
  cfg.exact_scoring = true;
  Rng rng(99);
  Memory mem = init_memory(model, x, 2, rng);
  double prev = -kInf;
  int decreases = 0;
  for (int i = 0; i < 1000; ++i) {
    auto [next, wake] = wake_update(model, x, mem, cfg, rng);
    const double elbo = memory_elbo(wake.log_p_hat, wake.omega);
    if (elbo < prev - 1e-12) ++decreases;
    prev = elbo;
    mem = next;
  }
  CHECK(decreases == 0);
}

TEST_CASE("gen_grad") {
  TestbedModel model(three_component());
  const SlotId extra = model.params().add("extra", Role::kGenerative, Tensor::vector({1.0, 2.0}));
  set_mismatched_q(model, 0.4);
  const Observation x = TestbedModel::observation(0.4);

  SUBCASE("single sample is the negative log-joint gradient") {
    HmwsConfig cfg;
    cfg.memory_size = 1;
    cfg.proposals = 1;
    cfg.importance_samples = 1;
    Rng rng(4);
    const auto [mem, wake] = wake_update(model, x, full_support(1), cfg, rng);
    const Gradients g = gen_grad(model, wake);
    Tape tape(&model.params());
    const Gradients ref = tape.backward(
        model.log_joint(tape, wake.selected[0], tape.constant(Tensor::vector(wake.z_c[0][0])), x));
    const auto a = flatten(model.params(), g, Role::kGenerative);
    auto b = flatten(model.params(), ref, Role::kGenerative);
    for (auto& v : b) v = -v;
    CHECK(relative_error(a, b) < 1e-12);
    CHECK(g[extra].values()[0] == 0.0);
    CHECK(g[extra].values()[1] == 0.0);
    CHECK(flatten(model.params(), g, Role::kRecognition) == std::vector<double>(15, 0.0));
  }
}

TEST_CASE("gen_grad follows the Fisher identity") {
  TestbedModel model(three_component());
  const double xv = 0.4;
  set_mismatched_q(model, xv);
  const Observation x = TestbedModel::observation(xv);
  const auto exact = exact_theta_grad(model, xv);
  HmwsConfig cfg;
  cfg.memory_size = 3;
  cfg.proposals = 1;
  cfg.importance_samples = 1000;
  Rng rng(17);
  double total = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto [mem, wake] = wake_update(model, x, full_support(3), cfg, rng);
    auto g = flatten(model.params(), gen_grad(model, wake), Role::kGenerative);
    for (auto& v : g) v = -v;
    total += cosine(g, exact);
  }
  CHECK(total / 100 > 0.99);
}

TEST_CASE("discrete replay gradient") {
  const Observation x = TestbedModel::observation(0.3);

  SUBCASE("M=1 is the negative score") {
    TestbedModel model(three_component());
    set_mismatched_q(model, 0.3);
    HmwsConfig cfg;
    cfg.memory_size = 1;
    cfg.proposals = 1;
    cfg.importance_samples = 2;
    Rng rng(2);
    const auto [mem, wake] = wake_update(model, x, full_support(1), cfg, rng);
    const Gradients g = discrete_replay_grad(model, x, wake);
    Tape tape(&model.params());
    const Gradients ref = tape.backward(model.log_q_discrete(tape, x, wake.selected[0]));
    const auto a = flatten(model.params(), g, Role::kRecognition);
    auto b = flatten(model.params(), ref, Role::kRecognition);
    for (auto& v : b) v = -v;
    CHECK(relative_error(a, b) < 1e-12);
  }

  SUBCASE("matched uniform q is stationary") {
    TestbedModel model(ConjugateTestbed{{0.5, 0.5}, {-1, 1}, 1.0, 1.0});
    WakeResult wake;
    wake.tape = std::make_shared<Tape>(&model.params());
    wake.selected = {{0}, {1}};
    wake.omega = {0.5, 0.5};
    const Gradients g = discrete_replay_grad(model, x, wake);
    CHECK(g.squared_norm() < 1e-30);
  }

  SUBCASE("descent with exact omega recovers the posterior") {
    TestbedModel model(three_component());
    const double xv = 0.3;
    const auto ex = testbed_exact(model.current(), xv);
    const SlotId bias = model.params().id("testbed/q_logit_bias");
    for (int it = 0; it < 3000; ++it) {
      WakeResult wake;
      wake.tape = std::make_shared<Tape>(&model.params());
      wake.selected = {{0}, {1}, {2}};
      wake.omega = ex.posterior;
      Gradients g = discrete_replay_grad(model, x, wake);
      Tensor& b = model.params().mutable_value(bias);
      for (std::size_t i = 0; i < 3; ++i) b[i] -= 0.5 * g[bias][i];
    }
    Tape tape(&model.params());
    double tv = 0.0;
    for (int d = 0; d < 3; ++d) tv += std::abs(std::exp(model.log_q_discrete(tape, x, {d}).item()) - ex.posterior[d]);
    CHECK(0.5 * tv < 1e-3);
  }
}

TEST_CASE("continuous replay gradient") {
  SUBCASE("K=1 averages single-sample scores over memory") {
    TestbedModel model(three_component());
    set_mismatched_q(model, 0.3);
    const Observation x = TestbedModel::observation(0.3);
    HmwsConfig cfg;
    cfg.memory_size = 3;
    cfg.proposals = 1;
    cfg.importance_samples = 1;
    Rng rng(12);
    const auto [mem, wake] = wake_update(model, x, full_support(3), cfg, rng);
    const Gradients g = continuous_replay_grad(model, x, wake);
    Gradients ref(model.params());
    for (std::size_t m = 0; m < 3; ++m) {
      Tape tape(&model.params());
      const GaussianVar q = model.q_continuous_cached(tape, wake.selected[m], x);
      ref.add_scaled(tape.backward(q.log_prob(tape.constant(Tensor::vector(wake.z_c[m][0])))), -1.0 / 3.0);
    }
    CHECK(relative_error(flatten(model.params(), g, Role::kRecognition),
                         flatten(model.params(), ref, Role::kRecognition)) < 1e-12);
  }

  SUBCASE("equal weights give the plain average") {
    TestbedModel model(three_component());
    model.set_recognition_to_posterior();  // every weight equals p(x)
    const Observation x = TestbedModel::observation(0.3);
    HmwsConfig cfg;
    cfg.memory_size = 1;
    cfg.proposals = 1;
    cfg.importance_samples = 2;
    Rng rng(13);
    const auto [mem, wake] = wake_update(model, x, full_support(1), cfg, rng);
    CHECK(wake.w_bar[0] == doctest::Approx(0.5).epsilon(1e-10));
    const Gradients g = continuous_replay_grad(model, x, wake);
    Gradients ref(model.params());
    for (std::size_t k = 0; k < 2; ++k) {
      Tape tape(&model.params());
      const GaussianVar q = model.q_continuous_cached(tape, wake.selected[0], x);
      ref.add_scaled(tape.backward(q.log_prob(tape.constant(Tensor::vector(wake.z_c[0][k])))), -0.5);
    }
    CHECK(relative_error(all_values(g), all_values(ref)) < 1e-9);
  }

  SUBCASE("training recovers the conditional posterior") {
    TestbedModel model(three_component());
    const double xv = 2.0;
    const Observation x = TestbedModel::observation(xv);
    const auto ex = testbed_exact(model.current(), xv);
    model.set_recognition_tabular(std::vector<double>(3, 1.0 / 3), std::vector<double>(3, 0.0),
                                  std::vector<double>(3, 0.0));
    HmwsConfig cfg;
    cfg.memory_size = 3;
    cfg.proposals = 1;
    cfg.importance_samples = 200;
    AdamHyper h;
    h.lr = 0.02;
    AdamState adam(model.params(), h);
    Rng rng(31);
    const SlotId mean_id = model.params().id("testbed/q_mean_bias");
    const SlotId std_id = model.params().id("testbed/q_log_std");
    std::vector<double> mean_avg(3, 0.0), std_avg(3, 0.0);
    const int iters = 1500, burn = 1000;
    for (int it = 0; it < iters; ++it) {
      auto [mem, wake] = wake_update(model, x, full_support(3), cfg, rng);
      Gradients g = continuous_replay_grad(model, x, wake);
      zero_slopes(model.params(), g);
      adam_step(model.params(), g, adam);
      if (it >= burn) {
        for (std::size_t d = 0; d < 3; ++d) {
          mean_avg[d] += model.params().value(mean_id)[d] / (iters - burn);
          std_avg[d] += std::exp(model.params().value(std_id)[d]) / (iters - burn);
        }
      }
    }
    for (std::size_t d = 0; d < 3; ++d) {
      CAPTURE(d);
      CHECK(std::abs(mean_avg[d] / ex.cond_mean[d] - 1.0) < 0.02);
      CHECK(std::abs(std_avg[d] / ex.cond_std - 1.0) < 0.02);
    }
  }
}

TEST_CASE("fantasy gradient") {
  SUBCASE("single sample, recognition slots only") {
    TestbedModel model(three_component());
    set_mismatched_q(model, 0.0);
    Rng rng(40);
    Rng replay = rng;
    const Gradients g = fantasy_grad(model, 1, rng);
    const JointSample s = model.sample_joint(replay);
    Tape tape(&model.params());
    const GaussianVar q = model.q_continuous_cached(tape, s.z_d, s.x);
    const Gradients ref = tape.backward(
        ad::add(model.log_q_discrete(tape, s.x, s.z_d), q.log_prob(tape.constant(Tensor::vector(s.z_c)))));
    auto b = flatten(model.params(), ref, Role::kRecognition);
    for (auto& v : b) v = -v;
    CHECK(relative_error(flatten(model.params(), g, Role::kRecognition), b) < 1e-12);
    CHECK(flatten(model.params(), g, Role::kGenerative) == std::vector<double>(8, 0.0));
  }

  SUBCASE("tabular q trained by fantasy matches the averaged posterior") {
    // Averaged over p(x), p(z | x) is the prior, so a q that ignores x must
    // converge to p(z_d) and p(z_c | z_d).
    ConjugateTestbed tb{{0.3, 0.7}, {-1.0, 2.0}, 0.05, 0.5};
    TestbedModel model(tb);
    AdamHyper h;
    h.lr = 0.01;
    AdamState adam(model.params(), h);
    Rng rng(41);
    const SlotId bias = model.params().id("testbed/q_logit_bias");
    const SlotId mean_id = model.params().id("testbed/q_mean_bias");
    const SlotId std_id = model.params().id("testbed/q_log_std");
    const int iters = 4000, burn = 1000, batch = 500;
    std::vector<double> p_avg(2, 0.0), m_avg(2, 0.0), s_avg(2, 0.0);
    for (int it = 0; it < iters; ++it) {
      Gradients g = fantasy_grad(model, batch, rng);
      zero_slopes(model.params(), g);
      adam_step(model.params(), g, adam);
      if (it >= burn) {
        const auto probs = Categorical(model.params().value(bias).storage()).probs();
        for (std::size_t d = 0; d < 2; ++d) {
          p_avg[d] += probs[d] / (iters - burn);
          m_avg[d] += model.params().value(mean_id)[d] / (iters - burn);
          s_avg[d] += std::exp(model.params().value(std_id)[d]) / (iters - burn);
        }
      }
    }
    for (std::size_t d = 0; d < 2; ++d) {
      CAPTURE(d);
      CHECK(std::abs(p_avg[d] - tb.prior[d]) < 1e-3);
      CHECK(std::abs(m_avg[d] - tb.means[d]) < 1e-3);
      CHECK(std::abs(s_avg[d] - tb.prior_std) < 1e-3);
    }
  }
}

TEST_CASE("hmws_step") {
  TestbedModel model(three_component());
  set_mismatched_q(model, 0.4);
  const Observation x = TestbedModel::observation(0.4);
  HmwsConfig cfg;
  cfg.memory_size = 2;
  cfg.proposals = 8;
  cfg.importance_samples = 3;
  Rng seed_rng(50);
  const Memory mem = init_memory(model, x, 2, seed_rng);

  SUBCASE("lambda = 1 is replay only") {
    cfg.replay_factor = 1.0;
    Rng rng(51);
    const HmwsStep step = hmws_step(model, x, mem, cfg, rng);
    Gradients ref = discrete_replay_grad(model, x, step.wake);
    ref.add_scaled(continuous_replay_grad(model, x, step.wake), 1.0);
    CHECK(relative_error(all_values(step.phi), all_values(ref)) < 1e-12);
  }
  SUBCASE("lambda = 0 is fantasy only") {
    cfg.replay_factor = 0.0;
    Rng rng(52);
    Rng replay = rng;
    const HmwsStep step = hmws_step(model, x, mem, cfg, rng);
    wake_update(model, x, mem, cfg, replay);
    const Gradients ref = fantasy_grad(model, cfg.importance_samples, replay);
    CHECK(relative_error(all_values(step.phi), all_values(ref)) < 1e-12);
  }
  SUBCASE("likelihood budget") {
    for (auto [m, n, k] : {std::tuple{2, 8, 3}, std::tuple{5, 5, 5}}) {
      TestbedModel big(ConjugateTestbed{std::vector<double>(12, 1.0 / 12), std::vector<double>(12, 0.0), 1.0, 1.0});
      HmwsConfig c;
      c.memory_size = m;
      c.proposals = n;
      c.importance_samples = k;
      Rng rng(53);
      const Memory init = init_memory(big, x, m, rng);
      const HmwsStep step = hmws_step(big, x, init, c, rng);
      CHECK(step.likelihood_evals <= c.likelihood_budget());
      CHECK(step.discrete_prior_evals <= m + n);
    }
    CHECK(HmwsConfig{2, 8, 3}.likelihood_budget() == 30);
    CHECK(HmwsConfig{5, 5, 5}.likelihood_budget() == 50);
  }
  SUBCASE("degenerate datapoint is skipped") {
    ShiftedTestbed dead(three_component(), -kInf);
    Rng rng(54);
    const HmwsStep step = hmws_step(dead, x, mem, cfg, rng);
    CHECK(step.skipped);
    CHECK(step.theta.squared_norm() == 0.0);
    CHECK(step.phi.squared_norm() == 0.0);
    CHECK(key_set(dead, step.memory) == key_set(dead, mem));
  }
  SUBCASE("config validation") {
    HmwsConfig bad;
    bad.replay_factor = 1.5;
    Rng rng(1);
    CHECK_THROWS_AS(hmws_step(model, x, mem, bad, rng), ConfigError);
    bad = HmwsConfig{};
    bad.memory_size = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }
}

TEST_CASE("replay gradients are invariant to scaling the joint") {
  const auto tb = three_component();
  TestbedModel plain(tb);
  ShiftedTestbed shifted(tb, 250.0);
  set_mismatched_q(plain, 0.4);
  set_mismatched_q(shifted, 0.4);
  const Observation x = TestbedModel::observation(0.4);
  HmwsConfig cfg;
  cfg.memory_size = 3;
  cfg.proposals = 2;
  cfg.importance_samples = 5;
  Rng r1(60), r2(60);
  const auto [m1, w1] = wake_update(plain, x, full_support(3), cfg, r1);
  const auto [m2, w2] = wake_update(shifted, x, full_support(3), cfg, r2);
  for (std::size_t m = 0; m < 3; ++m) CHECK(w1.omega[m] == doctest::Approx(w2.omega[m]).epsilon(1e-10));
  CHECK(relative_error(all_values(gen_grad(plain, w1)), all_values(gen_grad(shifted, w2))) < 1e-9);
  CHECK(relative_error(all_values(discrete_replay_grad(plain, x, w1)),
                       all_values(discrete_replay_grad(shifted, x, w2))) < 1e-9);
  CHECK(relative_error(all_values(continuous_replay_grad(plain, x, w1)),
                       all_values(continuous_replay_grad(shifted, x, w2))) < 1e-9);
}

TEST_CASE("memory json round trip") {
  TestbedModel model(three_component());
  Memory mem{{{2}, {0}}, false};
  const Memory back = memory_from_json(model, memory_to_json(model, mem));
  CHECK(back.entries == mem.entries);
  CHECK(back.degenerate == mem.degenerate);
}
