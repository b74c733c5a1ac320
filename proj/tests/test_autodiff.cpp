#include <cmath>
#include <cstring>
#include <random>

#include "doctest.h"
#include "genparse/grad_check.hpp"
#include "genparse/graph.hpp"
#include "genparse/kernels.hpp"

using namespace genparse;

namespace {

ParameterStore<double> small_store() {
  ParameterStore<double> s;
  s.add("A", 3, 4);
  s.add("B", 4, 2);
  s.add("x", 4, 1);
  s.add("y", 3, 1);
  s.initialize(5);
  // Move weights away from zero so every primitive sees generic inputs.
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (double& v : s[i].value.values()) v *= 5;
  }
  return s;
}

}  // namespace

TEST_CASE("forward values of basic primitives") {
  Graph<double> g;
  const Var a = g.constant(Tensor<double>(2, 2, {1, 2, 3, 4}));
  const Var b = g.constant(Tensor<double>(2, 1, {5, 6}));
  const Var m = g.matmul(a, b);
  CHECK(g.value(m)[0] == 17);
  CHECK(g.value(m)[1] == 39);
  const Var bc = g.add(a, b);  // column broadcast
  CHECK(g.value(bc)(0, 1) == 7);
  CHECK(g.value(bc)(1, 0) == 9);
  CHECK(g.scalar_value(g.sum(a)) == 10);
  CHECK(g.scalar_value(g.pick(b, 1)) == 6);
  const std::vector<int> rows{0, 1, 1};
  CHECK(g.scalar_value(g.gather_sum(b, rows)) == 17);
  const Var cat = g.concat_rows({b, b});
  CHECK(g.value(cat).rows() == 4);
  CHECK(g.value(g.slice_rows(cat, 1, 2))[0] == 6);
  CHECK(g.value(g.column(a, 1))[1] == 4);
  CHECK(g.value(g.reshape(a, 4, 1))[2] == 3);
  CHECK(g.scalar_value(g.one_minus(g.scalar(0.25))) == 0.75);
}

TEST_CASE("softmax columns sum to one and log_softmax agrees") {
  Graph<double> g;
  const Var x = g.constant(Tensor<double>(3, 2, {1000, -3, 1001, 0, 999, 4}));
  const auto& p = g.value(g.softmax(x));
  const auto& lp = g.value(g.log_softmax(x));
  for (int c = 0; c < 2; ++c) {
    double s = 0;
    for (int r = 0; r < 3; ++r) {
      s += p(r, c);
      CHECK(std::log(p(r, c)) == doctest::Approx(lp(r, c)).epsilon(1e-12));
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("sigmoid is stable for large inputs") {
  Graph<double> g;
  const auto& v = g.value(g.sigmoid(g.constant(Tensor<double>::column({-800, 0, 800}))));
  CHECK(v[0] >= 0);
  CHECK(v[1] == 0.5);
  CHECK(v[2] == 1.0);
}

TEST_CASE("shape and domain errors") {
  Graph<double> g;
  const Var a = g.constant(Tensor<double>(2, 3));
  const Var b = g.constant(Tensor<double>(2, 3));
  CHECK_THROWS_AS(g.matmul(a, b), ShapeError);
  CHECK_THROWS_AS(g.add(a, g.constant(Tensor<double>(3, 1))), ShapeError);
  CHECK_THROWS_AS(g.log(g.scalar(0)), Error);
  CHECK_THROWS_AS(g.backward(a), ShapeError);
  CHECK_THROWS_WITH_AS(g.constant(Tensor<double>::column({NAN})),
                       doctest::Contains("non-finite"), Error);
}

TEST_CASE("parameter nodes are shared within a graph") {
  ParameterStore<double> s;
  auto& p = s.add("p", 2, 1);
  p.value[0] = 3;
  p.value[1] = 4;
  Graph<double> g;
  const Var a = g.param(p);
  CHECK(g.param(p) == a);
  // d/dp sum(p * p) = 2p, accumulated once through the shared node.
  g.backward(g.sum(g.cmul(a, g.param(p))));
  CHECK(p.grad[0] == 6);
  CHECK(p.grad[1] == 8);
}

TEST_CASE("gradients of every primitive match finite differences") {
  ParameterStore<double> s = small_store();
  auto& A = s.get("A");
  auto& B = s.get("B");
  auto& x = s.get("x");
  auto& y = s.get("y");
  auto loss = [&](Graph<double>& g) {
    const Var a = g.param(A), b = g.param(B), xv = g.param(x), yv = g.param(y);
    const Var h = g.tanh(g.add(g.matmul(a, xv), yv));                  // 3x1
    const Var m = g.sigmoid(g.add(g.matmul(a, b), h));                 // 3x2 broadcast
    const Var c0 = g.column(m, 0), c1 = g.column(m, 1);
    const Var mix = g.add(g.cmul(c0, h), g.sub(c1, yv));
    const Var cat = g.concat_rows({mix, g.slice_rows(xv, 1, 2)});      // 5x1
    const Var cols = g.concat_cols(std::vector<Var>{c0, c1, h});      // 3x3
    const Var sm = g.softmax(cols);
    const Var lsm = g.log_softmax(g.reshape(cat, 5, 1));
    const std::vector<int> rows{0, 2, 2};
    const Var p = g.gather_sum(g.column(sm, 2), rows);
    const Var lam = g.sigmoid(g.pick(h, 1));
    const Var mixp = g.add(g.scale(lam, p), g.scale(g.one_minus(lam), g.pick(g.column(sm, 0), 1)));
    const std::vector<Var> parts{g.log(mixp), g.pick(lsm, 3), g.sum(sm)};
    return g.mean(parts);
  };
  const GradCheckResult r = grad_check(s, loss, 1e-4);
  CHECK(r.checked == s.num_values());
  INFO("worst coordinate " << r.worst);
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("lstm step gradients match finite differences") {
  ParameterStore<double> s;
  const LstmCell<double> cell = LstmCell<double>::create(s, "cell", 3, 4);
  auto& x1 = s.add("x1", 3, 1);
  auto& x2 = s.add("x2", 3, 1);
  auto& h0 = s.add("h0", 4, 1);
  auto& c0 = s.add("c0", 4, 1);
  s.initialize(9);
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (double& v : s[i].value.values()) v = v * 5 + 0.01;
  }
  auto loss = [&](Graph<double>& g) {
    LstmState<double> st{g.param(h0), g.param(c0)};
    st = lstm_step(g, cell, g.param(x1), st);
    st = lstm_step(g, cell, g.param(x2), st);
    return g.sum(g.cmul(st.h, st.c));
  };
  const GradCheckResult r = grad_check(s, loss, 1e-4);
  INFO("worst coordinate " << r.worst);
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("lstm step matches a hand-written cell") {
  ParameterStore<double> s;
  const LstmCell<double> cell = LstmCell<double>::create(s, "cell", 2, 1);
  s.initialize(4);
  const auto& W = cell.weight->value;  // 4 x 3, rows [i f g o]
  const auto& b = cell.bias->value;
  const double x[3] = {0.3, -0.7, 0.2};  // input then previous h
  const double c_prev = 0.5;
  double z[4];
  for (int r = 0; r < 4; ++r) z[r] = W(r, 0) * x[0] + W(r, 1) * x[1] + W(r, 2) * x[2] + b[r];
  auto sig = [](double v) { return 1 / (1 + std::exp(-v)); };
  const double c = sig(z[1]) * c_prev + sig(z[0]) * std::tanh(z[2]);
  const double h = sig(z[3]) * std::tanh(c);

  Graph<double> g;
  const auto st = lstm_step(
      g, cell, g.constant(Tensor<double>::column({x[0], x[1]})),
      {g.constant(Tensor<double>::column({x[2]})), g.constant(Tensor<double>::column({c_prev}))});
  CHECK(g.scalar_value(st.c) == doctest::Approx(c).epsilon(1e-12));
  CHECK(g.scalar_value(st.h) == doctest::Approx(h).epsilon(1e-12));
}

TEST_CASE("forward-only graphs refuse backward") {
  Graph<float> g(false);
  CHECK_THROWS_AS(g.backward(g.scalar(1.0f)), Error);
}

TEST_CASE("repeated evaluation is bitwise deterministic") {
  ParameterStore<float> s;
  const LstmCell<float> cell = LstmCell<float>::create(s, "cell", 64, 64);
  auto& x = s.add("x", 64, 1);
  s.initialize(2);
  auto run = [&] {
    s.zero_grad();
    Graph<float> g;
    LstmState<float> st{g.param(x), g.param(x)};
    for (int i = 0; i < 5; ++i) st = lstm_step(g, cell, g.param(x), st);
    g.backward(g.sum(st.h));
    return std::vector<float>(cell.weight->grad.values().begin(), cell.weight->grad.values().end());
  };
  const auto a = run();
  const auto b = run();
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
}

TEST_CASE("parallel kernels equal the serial reference bitwise") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<float> u(-1, 1);
  for (auto [m, k, n] : std::vector<std::array<int, 3>>{{3, 5, 2}, {256, 512, 1}, {128, 96, 80}}) {
    std::vector<float> a(m * k), b(k * n), dc(m * n);
    for (auto* v : {&a, &b, &dc}) {
      for (float& e : *v) e = u(rng);
    }
    std::vector<float> c1(m * n), c2(m * n), da1(m * k, 0.5f), da2(m * k, 0.5f),
        db1(k * n, -0.25f), db2(k * n, -0.25f);
    kernels::matmul<float>(a, b, c1, m, k, n);
    kernels::serial::matmul<float>(a, b, c2, m, k, n);
    kernels::matmul_grad_a<float>(dc, b, da1, m, k, n);
    kernels::serial::matmul_grad_a<float>(dc, b, da2, m, k, n);
    kernels::matmul_grad_b<float>(a, dc, db1, m, k, n);
    kernels::serial::matmul_grad_b<float>(a, dc, db2, m, k, n);
    CHECK(std::memcmp(c1.data(), c2.data(), c1.size() * sizeof(float)) == 0);
    CHECK(std::memcmp(da1.data(), da2.data(), da1.size() * sizeof(float)) == 0);
    CHECK(std::memcmp(db1.data(), db2.data(), db1.size() * sizeof(float)) == 0);
  }
}

TEST_CASE("matmul matches a naive triple loop") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  const int m = 7, k = 5, n = 3;
  std::vector<double> a(m * k), b(k * n), c(m * n);
  for (double& e : a) e = u(rng);
  for (double& e : b) e = u(rng);
  kernels::matmul<double>(a, b, c, m, k, n);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double s = 0;
      for (int t = 0; t < k; ++t) s += a[i * k + t] * b[t * n + j];
      CHECK(c[i * n + j] == doctest::Approx(s).epsilon(1e-14));
    }
  }
}
