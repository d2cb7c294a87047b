#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "doctest.h"
#include "gradcheck.hpp"
#include "hmws/adam.hpp"
#include "hmws/checkpoint.hpp"
#include "hmws/error.hpp"
#include "hmws/ops.hpp"

using namespace hmws;
using hmws::testing::central_difference;
using hmws::testing::relative_error;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using Builder = std::function<Var(Tape&, Var)>;

// Gradient of sum(out * proj) w.r.t. a leaf of the given shape, by the tape
// and by central differences. `proj` fixes a random scalarization.
double check_unary(const Builder& build, const Shape& shape, std::mt19937_64& rng, double lo = -1.5,
                   double hi = 1.5) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> x0(shape_size(shape));
  for (auto& v : x0) v = u(rng);

  std::vector<double> proj;
  auto eval = [&](const std::vector<double>& x) {
    Tape tape;
    Var out = build(tape, tape.leaf(Tensor(shape, x)));
    if (proj.empty()) {
      std::uniform_real_distribution<double> w(-1.0, 1.0);
      proj.resize(out.size());
      for (auto& p : proj) p = w(rng);
    }
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out.value()[i] * proj[i];
    return s;
  };
  eval(x0);

  Tape tape;
  Var in = tape.leaf(Tensor(shape, x0));
  Var out = build(tape, in);
  tape.backward(out, Tensor(out.shape(), proj));
  const auto analytic = tape.adjoint(in).storage();
  return relative_error(analytic, central_difference(eval, x0));
}

}  // namespace

TEST_CASE("forward examples") {
  Tape tape;
  Var x = tape.leaf(Tensor::scalar(3.0));
  Var y = ad::mul(x, x);
  CHECK(y.item() == doctest::Approx(9.0));
  tape.backward(y);
  CHECK(tape.adjoint(x).item() == doctest::Approx(6.0));

  Var s = ad::softmax(tape.constant(Tensor::vector({0, 0, 0})));
  for (double v : s.value().values()) CHECK(v == doctest::Approx(1.0 / 3.0));

  Var l = ad::logsumexp(tape.constant(Tensor::vector({-kInf, 0.0})));
  CHECK(l.item() == 0.0);
}

TEST_CASE("logsumexp gradient equals softmax") {
  Tape tape;
  Var x = tape.leaf(Tensor::vector({0.3, -1.2, 2.0, 0.0}));
  Var l = ad::logsumexp(x);
  tape.backward(l);
  const Tensor g = tape.adjoint(x);
  Tape t2;
  const Tensor sm = ad::softmax(t2.constant(x.value())).value();
  for (std::size_t i = 0; i < 4; ++i) CHECK(g[i] == doctest::Approx(sm[i]).epsilon(1e-14));
}

TEST_CASE("every primitive matches central differences") {
  std::mt19937_64 rng(7);
  std::vector<std::pair<const char*, Builder>> cases = {
      {"add", [](Tape& t, Var a) { return ad::add(a, t.constant(Tensor::vector({0.5, -0.2, 1.0}))); }},
      {"sub", [](Tape& t, Var a) { return ad::sub(t.constant(Tensor::vector({0.5, -0.2, 1.0})), a); }},
      {"mul", [](Tape&, Var a) { return ad::mul(a, a); }},
      {"div", [](Tape& t, Var a) { return ad::div(t.constant(Tensor::vector({0.5, -0.2, 1.0})), ad::add(a, 3.0)); }},
      {"row broadcast", [](Tape&, Var a) {
         return ad::mul(ad::reshape(a, Shape{1, 3}), ad::reshape(ad::concat({a, a}), Shape{2, 3}));
       }},
      {"matmul", [](Tape& t, Var a) {
         return ad::matmul(ad::reshape(a, Shape{1, 3}),
                           t.constant(Tensor::matrix(3, 2, {0.1, 0.2, -0.3, 0.4, 0.5, -0.6})));
       }},
      {"matmul rhs", [](Tape& t, Var a) {
         return ad::matmul(t.constant(Tensor::matrix(2, 1, {0.7, -1.1})), ad::reshape(a, Shape{1, 3}));
       }},
      {"exp", [](Tape&, Var a) { return ad::exp(a); }},
      {"log", [](Tape&, Var a) { return ad::log(ad::add(ad::square(a), 0.5)); }},
      {"tanh", [](Tape&, Var a) { return ad::tanh(a); }},
      {"sigmoid", [](Tape&, Var a) { return ad::sigmoid(a); }},
      {"softplus", [](Tape&, Var a) { return ad::softplus(a); }},
      {"softmax", [](Tape&, Var a) { return ad::softmax(a); }},
      {"softmax rows", [](Tape&, Var a) { return ad::softmax(ad::reshape(ad::concat({a, ad::neg(a)}), Shape{2, 3})); }},
      {"log_softmax", [](Tape&, Var a) { return ad::log_softmax(a); }},
      {"logsumexp", [](Tape&, Var a) { return ad::logsumexp(a); }},
      {"gather", [](Tape&, Var a) { return ad::gather(a, {2, 0, 2}); }},
      {"concat", [](Tape&, Var a) { return ad::concat({a, ad::index(a, 1)}); }},
      {"sum", [](Tape&, Var a) { return ad::sum(a); }},
      {"mean", [](Tape&, Var a) { return ad::mean(a); }},
  };
  for (const auto& [name, build] : cases) {
    CAPTURE(name);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) worst = std::max(worst, check_unary(build, Shape{3}, rng));
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("random five-node graphs match finite differences") {
  std::mt19937_64 rng(11);
  const std::vector<Builder> unary = {
      [](Tape&, Var a) { return ad::tanh(a); },
      [](Tape&, Var a) { return ad::sigmoid(a); },
      [](Tape&, Var a) { return ad::softmax(a); },
      [](Tape&, Var a) { return ad::mul(a, a); },
      [](Tape&, Var a) { return ad::exp(ad::mul(a, 0.5)); },
      [](Tape&, Var a) { return ad::softplus(a); },
      [](Tape& t, Var a) {
        return ad::matmul(ad::reshape(a, Shape{1, 4}), t.constant(Tensor::matrix(4, 4, {0.3, -0.1, 0.2, 0.5, -0.4, 0.6, 0.1, 0.0,
                                                                                       0.2, 0.2, -0.7, 0.3, 0.1, -0.5, 0.4, 0.9})));
      },
  };
  std::uniform_int_distribution<std::size_t> pick(0, unary.size() - 1);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::size_t> ops(5);
    for (auto& o : ops) o = pick(rng);
    Builder graph = [&, ops](Tape& t, Var a) {
      Var h = a;
      for (std::size_t o : ops) h = ad::reshape(unary[o](t, h), Shape{4});
      return ad::logsumexp(ad::add(h, a));
    };
    worst = std::max(worst, check_unary(graph, Shape{4}, rng));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("backward is linear and a zero seed gives zero gradients") {
  ParamStore store;
  store.add("w", Role::kGenerative, Tensor::vector({0.4, -0.3}));
  store.add("unused", Role::kGenerative, Tensor::vector({1.0}));
  auto f1 = [](Tape& t) { return ad::sum(ad::tanh(t.param("w"))); };
  auto f2 = [](Tape& t) { return ad::logsumexp(ad::mul(t.param("w"), 3.0)); };

  Tape a(&store), b(&store), c(&store);
  const Gradients g1 = a.backward(f1(a));
  const Gradients g2 = b.backward(f2(b));
  const Gradients g12 = c.backward(ad::add(f1(c), f2(c)));
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(g12.at(0)[i] == doctest::Approx(g1.at(0)[i] + g2.at(0)[i]).epsilon(1e-14));
  }
  CHECK(g12.at(1)[0] == 0.0);

  Tape z(&store);
  const Gradients g0 = z.backward(f1(z), Tensor::scalar(0.0));
  CHECK(g0.squared_norm() == 0.0);
}

TEST_CASE("errors name shapes and primitives") {
  Tape tape;
  Var a = tape.leaf(Tensor::vector({1, 2, 3}));
  Var b = tape.leaf(Tensor::vector({1, 2}));
  try {
    ad::add(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[3]") != std::string::npos);
    CHECK(msg.find("[2]") != std::string::npos);
  }
  try {
    ad::log(tape.leaf(Tensor::vector({-1.0})));
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("log") != std::string::npos);
  }
  CHECK_THROWS_AS(ad::exp(tape.leaf(Tensor::scalar(1000.0))), NumericalError);
  // -inf is legal where log-weights are produced.
  CHECK(std::isinf(ad::log(tape.leaf(Tensor::scalar(0.0))).item()));
}

TEST_CASE("tape is stale after parameter mutation") {
  ParamStore store;
  store.add("p", Role::kGenerative, Tensor::scalar(1.0));
  Tape tape(&store);
  Var y = ad::square(tape.param("p"));
  store.set("p", Tensor::scalar(2.0));
  CHECK_THROWS_AS(tape.backward(y), StaleTapeError);
}

TEST_CASE("adam") {
  ParamStore store;
  const SlotId p = store.add("p", Role::kGenerative, Tensor::scalar(0.0));

  SUBCASE("zero gradient is a fixed point") {
    AdamState st(store);
    Gradients g(store);
    adam_step(store, g, st);
    CHECK(store.value(p).item() == 0.0);
  }
  SUBCASE("first step has magnitude lr") {
    AdamState st(store);
    Gradients g(store);
    g[p][0] = 1.0;
    adam_step(store, g, st);
    CHECK(store.value(p).item() == doctest::Approx(-1e-3).epsilon(1e-6));
    CHECK(st.step == 1);
  }
  SUBCASE("converges on a convex quadratic") {
    AdamHyper h;
    h.lr = 0.1;
    AdamState st(store, h);
    for (int i = 0; i < 200; ++i) {
      Tape tape(&store);
      Gradients g = tape.backward(ad::square(ad::add(tape.param("p"), -2.0)));
      adam_step(store, g, st);
    }
    CHECK(std::abs(store.value(p).item() - 2.0) < 0.05);
  }
  SUBCASE("non-finite gradient skips the slot") {
    const SlotId q = store.add("q", Role::kRecognition, Tensor::scalar(5.0));
    AdamState st(store);
    Gradients g(store);
    g[p][0] = kInf;
    g[q][0] = 1.0;
    const AdamReport r = adam_step(store, g, st);
    REQUIRE(r.skipped.size() == 1);
    CHECK(r.skipped[0] == "p");
    CHECK(store.value(p).item() == 0.0);
    CHECK(store.value(q).item() < 5.0);
  }
}

namespace {
std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}
}  // namespace

TEST_CASE("checkpoint round trip is byte identical") {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "hmws_ckpt_test";
  fs::remove_all(root);
  ParamStore store;
  store.add("a", Role::kGenerative, Tensor::matrix(2, 2, {1.5, -2.25, 1e-300, 3.0}));
  store.add("b", Role::kRecognition, Tensor::vector({0.1, 0.2, 0.3}));
  AdamState st(store);
  Gradients g(store);
  g.at(0)[0] = 0.5;
  g.at(1)[2] = -1.0;
  adam_step(store, g, st);
  save_checkpoint(root / "one", store, st, {{"iteration", 7}});

  ParamStore loaded;
  loaded.add("a", Role::kGenerative, Tensor(Shape{2, 2}));
  loaded.add("b", Role::kRecognition, Tensor(Shape{3}));
  AdamState st2(loaded);
  const auto state = load_checkpoint(root / "one", loaded, st2);
  CHECK(state.at("iteration") == 7);
  CHECK(st2.step == 1);
  save_checkpoint(root / "two", loaded, st2, state);
  for (const char* f : {"manifest.json", "params.bin", "adam.bin"}) {
    CAPTURE(f);
    CHECK(slurp(root / "one" / f) == slurp(root / "two" / f));
  }

  ParamStore wrong;
  wrong.add("a", Role::kGenerative, Tensor(Shape{3}));
  wrong.add("c", Role::kRecognition, Tensor(Shape{3}));
  AdamState st3(wrong);
  try {
    load_checkpoint(root / "one", wrong, st3);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("'a' shape") != std::string::npos);
    CHECK(msg.find("name") != std::string::npos);
  }
  fs::remove_all(root);
}
