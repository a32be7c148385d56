#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "seqpred/autodiff.hpp"
#include "seqpred/rng.hpp"

using namespace seqpred;

namespace {

Tensor random_tensor(Rng& rng, std::vector<int> shape, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

} // namespace

TEST_CASE("forward values of simple ops") {
  Tape tape;
  Var w = tape.input(Tensor::from_matrix(2, 2, {1, 2, 3, 4}));
  Var x = tape.input(Tensor::from_vector({5, 6}));
  Var y = tape.matvec(w, x);
  CHECK(tape.value(y).data == std::vector<double>{17, 39});

  Var a = tape.input(Tensor::from_vector({1, -2}));
  CHECK(tape.value(tape.relu(a)).data == std::vector<double>{1, 0});
  CHECK(tape.value(tape.concat(a, x)).data == std::vector<double>{1, -2, 5, 6});
  CHECK(tape.value(tape.slice(x, 1, 1)).data == std::vector<double>{6});
  CHECK(tape.value(tape.sum_all(w)).data == std::vector<double>{10});
  CHECK(tape.value(tape.scale(a, -3.0)).data == std::vector<double>{-3, 6});
  CHECK(tape.value(tape.add_scalar(a, 1.5)).data == std::vector<double>{2.5, -0.5});
  CHECK(tape.value(tape.clamp_min(a, 0.5)).data == std::vector<double>{1, 0.5});
}

TEST_CASE("softmax output sums to one per row") {
  Tape tape;
  Var x = tape.input(Tensor::from_matrix(2, 3, {0.3, -1.2, 2.0, 5.0, 5.0, 5.0}));
  const Tensor& y = tape.value(tape.softmax(x));
  for (int r = 0; r < 2; ++r) {
    double total = 0.0;
    for (int c = 0; c < 3; ++c) total += y.at(r, c);
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
  CHECK(y.at(1, 0) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("shape mismatch errors carry both shapes") {
  Tape tape;
  Var a = tape.input(Tensor::from_vector({1, 2, 3}));
  Var b = tape.input(Tensor::from_vector({1, 2}));
  CHECK_THROWS_WITH_AS(tape.add(a, b), doctest::Contains("{3}"), std::runtime_error);
  CHECK_THROWS_WITH_AS(tape.add(a, b), doctest::Contains("{2}"), std::runtime_error);
  Var w = tape.input(Tensor::from_matrix(2, 2, {1, 2, 3, 4}));
  CHECK_THROWS_AS(tape.matvec(w, a), std::runtime_error);
}

TEST_CASE("non-finite inputs are rejected at op boundaries") {
  Tape tape;
  CHECK_THROWS_AS(tape.input(Tensor::from_vector({1.0, std::nan("")})), std::runtime_error);
  Var big = tape.input(Tensor::from_vector({1e308}));
  CHECK_THROWS_AS(tape.exp(big), std::runtime_error); // overflow to inf is caught on the result
  Var z = tape.input(Tensor::from_vector({0.0}));
  CHECK_THROWS_AS(tape.log(z), std::runtime_error);
}

TEST_CASE("backward requires a scalar loss") {
  Tape tape;
  Var x = tape.input(Tensor::from_vector({1, 2}));
  CHECK_THROWS_AS(tape.backward(x), std::runtime_error);
}

TEST_CASE("vars are rejected on a foreign tape") {
  Tape t1, t2;
  Var x = t1.input(Tensor::from_vector({1}));
  (void)x;
  CHECK_THROWS_AS(t2.value(Var{5}), std::runtime_error);
}

TEST_CASE("gradient accumulates when a value is reused") {
  // f = sum(x*x) + sum(x)  ->  df/dx = 2x + 1
  Tape tape;
  Tensor xv = Tensor::from_vector({1.5, -0.5, 2.0});
  Var x = tape.leaf(xv, 0);
  Var loss = tape.add(tape.sum_all(tape.mul(x, x)), tape.sum_all(x));
  tape.backward(loss);
  const Tensor& g = tape.gradient(x);
  CHECK(g[0] == doctest::Approx(4.0));
  CHECK(g[1] == doctest::Approx(0.0));
  CHECK(g[2] == doctest::Approx(5.0));
}

TEST_CASE("two leaves with the same parameter index sum their gradients") {
  Tape tape;
  Tensor v = Tensor::from_vector({2.0});
  Var a = tape.leaf(v, 0);
  Var b = tape.leaf(v, 0);
  Var loss = tape.add(tape.scale(a, 3.0), tape.scale(b, 4.0));
  tape.backward(loss);
  Gradient g = tape.parameter_gradients(1);
  CHECK(g[0][0] == doctest::Approx(7.0));
}

TEST_CASE("relu subgradient is zero at the kink") {
  Tape tape;
  Var x = tape.leaf(Tensor::from_vector({0.0, -1.0, 1.0}), 0);
  tape.backward(tape.sum_all(tape.relu(x)));
  const Tensor& g = tape.gradient(x);
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 0.0);
  CHECK(g[2] == 1.0);
}

TEST_CASE("concat and slice route gradients to the right coordinates") {
  Tape tape;
  Var a = tape.leaf(Tensor::from_vector({1, 2}), 0);
  Var b = tape.leaf(Tensor::from_vector({3, 4, 5}), 1);
  Var cat = tape.concat(a, b);
  // pick two coordinates, one from each side: loss = cat[1] + 2*cat[3]
  Var loss = tape.add(tape.pick(cat, 1), tape.scale(tape.pick(cat, 3), 2.0));
  tape.backward(loss);
  CHECK(tape.gradient(a).data == std::vector<double>{0, 1});
  CHECK(tape.gradient(b).data == std::vector<double>{0, 2, 0});
}

// Finite-difference checks per primitive. Each builds a small scalar scoring
// function around the op so the chain rule through it is exercised.
namespace {

double fd_check_unary(Var (Tape::*op)(Var), double lo, double hi, std::uint64_t seed) {
  Rng rng(seed);
  Tensor x = random_tensor(rng, {7}, lo, hi);
  Tensor probe = random_tensor(rng, {7});

  auto build = [&](Tape& t) {
    Var xv = t.leaf(x, 0);
    Var y = (t.*op)(xv);
    return t.sum_all(t.mul(y, t.input(probe)));
  };

  Tape tape;
  Var loss = build(tape);
  tape.backward(loss);
  Gradient analytic = tape.parameter_gradients(1);

  std::vector<Tensor*> params{&x};
  return finite_difference_check(params, analytic, [&] {
    Tape t;
    Var l = build(t);
    return t.value(l)[0];
  }, 1e-5);
}

} // namespace

TEST_CASE("unary op gradients match finite differences") {
  CHECK(fd_check_unary(&Tape::sigmoid, -2.0, 2.0, 101) < 1e-6);
  CHECK(fd_check_unary(&Tape::tanh, -2.0, 2.0, 102) < 1e-6);
  CHECK(fd_check_unary(&Tape::exp, -1.0, 1.0, 103) < 1e-6);
  CHECK(fd_check_unary(&Tape::log, 0.5, 3.0, 104) < 1e-6);
  CHECK(fd_check_unary(&Tape::softmax, -2.0, 2.0, 105) < 1e-6);
  CHECK(fd_check_unary(&Tape::relu, 0.5, 3.0, 106) < 1e-6);   // away from the kink
  CHECK(fd_check_unary(&Tape::relu, -3.0, -0.5, 107) < 1e-6); // all clipped
}

TEST_CASE("matmul and matvec gradients match finite differences") {
  Rng rng(110);
  Tensor a = random_tensor(rng, {3, 4});
  Tensor b = random_tensor(rng, {4, 2});
  Tensor x = random_tensor(rng, {4});
  Tensor probe_m = random_tensor(rng, {3, 2});
  Tensor probe_v = random_tensor(rng, {3});

  auto build = [&](Tape& t) {
    Var av = t.leaf(a, 0);
    Var bv = t.leaf(b, 1);
    Var xv = t.leaf(x, 2);
    Var mm = t.sum_all(t.mul(t.matmul(av, bv), t.input(probe_m)));
    Var mv = t.sum_all(t.mul(t.matvec(av, xv), t.input(probe_v)));
    return t.add(mm, mv);
  };

  Tape tape;
  Var loss = build(tape);
  tape.backward(loss);
  Gradient analytic = tape.parameter_gradients(3);

  std::vector<Tensor*> params{&a, &b, &x};
  double err = finite_difference_check(params, analytic, [&] {
    Tape t;
    return t.value(build(t))[0];
  }, 1e-5);
  CHECK(err < 1e-7);
}

TEST_CASE("two-layer tanh network gradient matches finite differences") {
  // tanh MLP into softmax cross-entropy, checked over every coordinate
  Rng rng(120);
  Tensor w1 = random_tensor(rng, {5, 4});
  Tensor b1 = random_tensor(rng, {5});
  Tensor w2 = random_tensor(rng, {3, 5});
  Tensor b2 = random_tensor(rng, {3});
  Tensor x = random_tensor(rng, {4});
  const int target = 1;

  auto build = [&](Tape& t) {
    Var h = t.tanh(t.add(t.matvec(t.leaf(w1, 0), t.input(x)), t.leaf(b1, 1)));
    Var logits = t.add(t.matvec(t.leaf(w2, 2), h), t.leaf(b2, 3));
    Var pi = t.softmax(logits);
    return t.scale(t.log(t.pick(pi, target)), -1.0);
  };

  Tape tape;
  Var loss = build(tape);
  tape.backward(loss);
  Gradient analytic = tape.parameter_gradients(4);

  std::vector<Tensor*> params{&w1, &b1, &w2, &b2};
  double err = finite_difference_check(params, analytic, [&] {
    Tape t;
    return t.value(build(t))[0];
  }, 1e-5);
  CHECK(err < 1e-4);
}

TEST_CASE("finite_difference_check flags a wrong gradient") {
  Tensor x = Tensor::from_vector({1.0, 2.0});
  Gradient wrong(1);
  wrong[0] = Tensor::from_vector({1.0, 1.0}); // true gradient of sum(x*x) is {2,4}
  std::vector<Tensor*> params{&x};
  double err = finite_difference_check(params, wrong, [&] {
    return x[0] * x[0] + x[1] * x[1];
  }, 1e-5);
  CHECK(err > 0.3);
}

TEST_CASE("clamp_min blocks gradient below the floor and passes it above") {
  Tape tape;
  Var x = tape.leaf(Tensor::from_vector({0.5, 1e-13}), 0);
  tape.backward(tape.sum_all(tape.clamp_min(x, 1e-12)));
  CHECK(tape.gradient(x)[0] == 1.0);
  CHECK(tape.gradient(x)[1] == 0.0);
}

TEST_CASE("squared_error composition") {
  Tape tape;
  Var a = tape.leaf(Tensor::scalar(1.0), 0);
  Var b = tape.input_scalar(3.0);
  Var loss = tape.squared_error(a, b);
  CHECK(tape.value(loss)[0] == doctest::Approx(4.0));
  tape.backward(loss);
  CHECK(tape.gradient(a)[0] == doctest::Approx(-4.0));
}
