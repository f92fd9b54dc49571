#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "capra/adam.hpp"
#include "capra/autodiff.hpp"
#include "capra/numerics.hpp"
#include "capra/rng.hpp"

#include <cmath>
#include <cstring>

using namespace capra;

namespace {

Mat random_mat(Rng& rng, int rows, int cols, double scale = 1.0) {
  Mat m(rows, cols);
  for (int j = 0; j < cols; ++j) {
    for (int i = 0; i < rows; ++i) m(i, j) = scale * rng.gaussian();
  }
  return m;
}

bool bit_equal(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  return std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

}  // namespace

TEST_CASE("gradient of x^2 at x=3 is 6") {
  ParamMap params{{"x", Mat::Constant(1, 1, 3.0)}};
  auto f = [](Tape& t, const std::map<std::string, Var>& p) {
    Var x = p.at("x");
    return mul(x, x);
  };
  const ParamMap grads = loss_gradients(f, params);
  CHECK(grads.at("x")(0, 0) == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("gradient of sum(sigmoid(x)) at 0 is 1/4 per element") {
  ParamMap params{{"x", Mat::Zero(5, 1)}};
  auto f = [](Tape& t, const std::map<std::string, Var>& p) {
    return sum(sigmoid(p.at("x")));
  };
  const ParamMap grads = loss_gradients(f, params);
  for (int i = 0; i < 5; ++i) CHECK(grads.at("x")(i, 0) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("gradients rejects non-scalar and non-finite losses") {
  Tape tape;
  Var v = tape.parameter("v", Mat::Ones(2, 1));
  CHECK_THROWS_AS(tape.gradients(v), std::invalid_argument);

  Tape tape2;
  Var w = tape2.parameter("w", Mat::Constant(1, 1, 1e308));
  Var loss = mul(w, w);  // overflows to inf
  CHECK_THROWS_AS(tape2.gradients(loss), std::runtime_error);
}

TEST_CASE("untouched parameters get zero gradients") {
  ParamMap params{{"used", Mat::Constant(1, 1, 2.0)}, {"unused", Mat::Ones(3, 2)}};
  auto f = [](Tape& t, const std::map<std::string, Var>& p) {
    return mul(p.at("used"), p.at("used"));
  };
  const ParamMap grads = loss_gradients(f, params);
  CHECK(grads.at("unused").isZero(0.0));
  CHECK(grads.at("unused").rows() == 3);
  CHECK(grads.at("unused").cols() == 2);
}

TEST_CASE("three-layer composition matches central differences at h=1e-5") {
  Rng rng(7);
  ParamMap params{{"W1", random_mat(rng, 4, 3, 0.7)},
                  {"W2", random_mat(rng, 5, 4, 0.7)},
                  {"b", random_mat(rng, 5, 1, 0.5)},
                  {"x", random_mat(rng, 3, 1, 1.0)}};
  auto f = [](Tape& t, const std::map<std::string, Var>& p) {
    Var h = tanh(matmul(p.at("W1"), p.at("x")));
    Var logits = add(matmul(p.at("W2"), h), p.at("b"));
    return softmax_cross_entropy(logits, 2);
  };
  CHECK(finite_diff_check(f, params, 1e-5) < 1e-5);
}

TEST_CASE("finite_diff_error on an exact quadratic is tiny") {
  ParamMap params{{"x", Mat::Constant(1, 1, 1.5)}};
  ParamMap analytic{{"x", Mat::Constant(1, 1, 3.0)}};
  auto f = [](const ParamMap& p) { return p.at("x")(0, 0) * p.at("x")(0, 0); };
  CHECK(finite_diff_error(f, params, analytic, 1e-5) < 1e-9);
}

TEST_CASE("finite_diff_error flags a doubled analytic gradient as ~0.5") {
  ParamMap params{{"x", Mat::Constant(1, 1, 1.5)}};
  ParamMap doubled{{"x", Mat::Constant(1, 1, 6.0)}};
  auto f = [](const ParamMap& p) { return p.at("x")(0, 0) * p.at("x")(0, 0); };
  CHECK(finite_diff_error(f, params, doubled, 1e-5) == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("finite_diff_error rejects nondeterministic functions") {
  ParamMap params{{"x", Mat::Constant(1, 1, 1.0)}};
  ParamMap analytic{{"x", Mat::Constant(1, 1, 1.0)}};
  int calls = 0;
  auto f = [&calls](const ParamMap& p) { return p.at("x")(0, 0) + (calls++ * 0.1); };
  CHECK_THROWS_AS(finite_diff_error(f, params, analytic, 1e-5), std::runtime_error);
}

TEST_CASE("property: random primitive compositions pass the gradient check") {
  // 100 random graphs mixing matmul, add, mul, tanh, sigmoid, exp, log,
  // slicing, concatenation, softmax and the fused cross-entropy.
  Rng rng(1234);
  for (int graph = 0; graph < 100; ++graph) {
    const int dim = 2 + rng.uniform_int(3);
    ParamMap params{{"A", random_mat(rng, dim, dim, 0.6)},
                    {"x", random_mat(rng, dim, 1, 0.8)},
                    {"y", random_mat(rng, dim, 1, 0.8)}};
    const int flavor = rng.uniform_int(5);
    auto f = [flavor, dim](Tape& t, const std::map<std::string, Var>& p) {
      Var h = matmul(p.at("A"), p.at("x"));
      switch (flavor) {
        case 0: h = tanh(h); break;
        case 1: h = sigmoid(h); break;
        case 2: h = mul(h, p.at("y")); break;
        case 3: h = exp(scale(h, 0.3)); break;
        default: h = log(add(sigmoid(h), t.constant(Mat::Constant(dim, 1, 0.1)))); break;
      }
      Var both = concat_rows({h, p.at("y")});
      Var sliced = rows(both, 1, dim);
      Var probs = softmax(sliced);
      Var mixed = add(mul(probs, p.at("y")), sliced);
      return add(sum(mixed), softmax_cross_entropy(sliced, dim / 2));
    };
    CAPTURE(graph);
    CHECK(finite_diff_check(f, params, 1e-5) < 1e-5);
  }
}

TEST_CASE("tape determinism: identical inputs give bit-identical gradients") {
  Rng rng(99);
  ParamMap params{{"W", random_mat(rng, 6, 6)}, {"x", random_mat(rng, 6, 1)}};
  auto f = [](Tape& t, const std::map<std::string, Var>& p) {
    return sum(tanh(matmul(p.at("W"), p.at("x"))));
  };
  const ParamMap g1 = loss_gradients(f, params);
  const ParamMap g2 = loss_gradients(f, params);
  CHECK(bit_equal(g1.at("W"), g2.at("W")));
  CHECK(bit_equal(g1.at("x"), g2.at("x")));
}

TEST_CASE("softmax basics") {
  Vec z = Vec::Zero(3);
  const Vec p = softmax(z);
  for (int i = 0; i < 3; ++i) CHECK(p(i) == doctest::Approx(1.0 / 3).epsilon(1e-15));

  Vec big(2);
  big << 1000.0, 0.0;
  const Vec q = softmax(big);
  CHECK(q.allFinite());
  CHECK(q(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(q(1) == doctest::Approx(0.0).epsilon(1e-12));

  CHECK_THROWS_AS(softmax(Vec()), std::invalid_argument);
}

TEST_CASE("softmax is shift invariant and always a probability vector") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Vec x(4);
    for (int i = 0; i < 4; ++i) x(i) = 10.0 * rng.gaussian();
    const Vec p = softmax(x);
    CHECK(p.minCoeff() >= 0.0);
    CHECK(std::abs(p.sum() - 1.0) <= 1e-12);
    const Vec shifted = softmax(Vec(x.array() + 123.4));
    for (int i = 0; i < 4; ++i) CHECK(shifted(i) == doctest::Approx(p(i)).epsilon(1e-12));
  }
}

TEST_CASE("adam first step with unit gradient moves by ~-lr") {
  ParamMap params{{"theta", Mat::Zero(1, 1)}};
  ParamMap grads{{"theta", Mat::Ones(1, 1)}};
  AdamState state;
  adam_step(params, grads, state);
  CHECK(std::abs(params.at("theta")(0, 0) + state.cfg.lr) < 1e-9);
  CHECK(state.step == 1);
}

TEST_CASE("adam with zero gradients is the identity on parameters") {
  Rng rng(3);
  ParamMap params{{"theta", random_mat(rng, 3, 2)}};
  const Mat before = params.at("theta");
  ParamMap grads{{"theta", Mat::Zero(3, 2)}};
  AdamState state;
  for (int i = 0; i < 10; ++i) adam_step(params, grads, state);
  CHECK(bit_equal(params.at("theta"), before));
  CHECK(state.step == 10);
}

TEST_CASE("adam drives a 1-D quadratic to its minimum") {
  ParamMap params{{"theta", Mat::Zero(1, 1)}};
  AdamState state;
  state.cfg.lr = 0.05;
  for (int i = 0; i < 5000; ++i) {
    ParamMap grads{{"theta", Mat::Constant(1, 1, 2.0 * (params.at("theta")(0, 0) - 5.0))}};
    adam_step(params, grads, state);
  }
  CHECK(std::abs(params.at("theta")(0, 0) - 5.0) < 1e-3);
}

TEST_CASE("adam rejects shape mismatches and non-finite gradients") {
  ParamMap params{{"theta", Mat::Zero(2, 2)}};
  AdamState state;
  ParamMap bad_shape{{"theta", Mat::Zero(3, 2)}};
  CHECK_THROWS_AS(adam_step(params, bad_shape, state), std::invalid_argument);
  ParamMap bad_value{{"theta", Mat::Constant(2, 2, std::nan(""))}};
  CHECK_THROWS_AS(adam_step(params, bad_value, state), std::runtime_error);
}
