#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "emb2emb/adam.hpp"
#include "emb2emb/graph.hpp"
#include "emb2emb/rng.hpp"
#include "emb2emb/types.hpp"
#include "grad_check.hpp"

using namespace emb2emb;
using emb2emb::testing::grad_check;
using emb2emb::testing::random_mat;
using emb2emb::testing::random_mat_off_zero;

namespace {

// Reduces an arbitrary op output to a scalar through a fixed random linear
// functional, so backward sees a non-uniform upstream gradient.
Var project_to_scalar(Graph& g, Var out, const Mat& coeffs) {
  return sum_all(out * g.constant(coeffs));
}

}  // namespace

TEST_CASE("matmul matches a hand-rolled triple loop") {
  RngHub hub(7);
  auto rng = hub.stream("matmul");
  const Mat a = random_mat(rng, 3, 4);
  const Mat b = random_mat(rng, 4, 5);
  Mat expect = Mat::Zero(3, 5);
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 5; ++j)
      for (Index k = 0; k < 4; ++k) expect(i, j) += a(i, k) * b(k, j);

  Graph g;
  const Mat got = g.value(matmul(g.constant(a), g.constant(b)));
  CHECK(((got - expect).cwiseAbs().maxCoeff()) < 1e-12);

  const Mat eye = Mat::Identity(4, 4);
  const Mat same = g.value(matmul(g.constant(a), g.constant(eye)));
  CHECK(((same - a).cwiseAbs().maxCoeff()) == 0.0);
}

TEST_CASE("elementwise identities hold exactly") {
  RngHub hub(8);
  auto rng = hub.stream("elem");
  const Mat a = random_mat(rng, 4, 3);
  Graph g;
  Var va = g.constant(a);
  CHECK((g.value(va + g.constant(Mat::Zero(4, 3))) - a).cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.value(va - va).cwiseAbs().maxCoeff() == 0.0);
  CHECK((g.value(va * g.constant(Mat::Ones(4, 3))) - a).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("activation values at fixed points") {
  Graph g;
  Mat zero = Mat::Zero(1, 1);
  CHECK(g.value(tanh(g.constant(zero)))(0, 0) == 0.0);
  CHECK(g.value(selu(g.constant(zero)))(0, 0) == 0.0);
  CHECK(g.value(relu(g.constant(zero)))(0, 0) == 0.0);
  CHECK(g.value(sigmoid(g.constant(zero)))(0, 0) == doctest::Approx(0.5).epsilon(1e-15));

  Mat neg = Mat::Constant(1, 1, -3.5);
  CHECK(g.value(relu(g.constant(neg)))(0, 0) == 0.0);
  // selu(1) = lambda * 1
  Mat one = Mat::Ones(1, 1);
  CHECK(g.value(selu(g.constant(one)))(0, 0) ==
        doctest::Approx(1.0507009873554805).epsilon(1e-12));
}

TEST_CASE("uniform logits give cross entropy of log V") {
  Graph g;
  const Index V = 7;
  Mat logits = Mat::Constant(3, V, 0.42);
  Var loss = softmax_cross_entropy(g.constant(logits), {0, 3, 6});
  CHECK(g.value(loss)(0, 0) == doctest::Approx(std::log(double(V))).epsilon(1e-12));
}

TEST_CASE("cosine distance endpoints") {
  RngHub hub(9);
  auto rng = hub.stream("cos");
  const Mat a = random_mat(rng, 5, 8);
  Graph g;
  Var va = g.constant(a);
  const Mat self = g.value(cosine_distance(va, va));
  CHECK(self.cwiseAbs().maxCoeff() < 1e-12);
  const Mat anti = g.value(cosine_distance(va, affine(va, -1, 0)));
  CHECK((anti.array() - 2.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("broadcast add/sub/mul match explicit replication") {
  RngHub hub(10);
  auto rng = hub.stream("bcast");
  const Mat a = random_mat(rng, 4, 3);
  const Mat row = random_mat(rng, 1, 3);
  const Mat col = random_mat(rng, 4, 1);
  const Mat scl = random_mat(rng, 1, 1);

  Graph g;
  Var va = g.constant(a);
  auto check_same = [&](Var got, const Mat& want) {
    CHECK((g.value(got) - want).cwiseAbs().maxCoeff() == 0.0);
  };
  check_same(va + g.constant(row), a + row.replicate(4, 1));
  check_same(va - g.constant(col), a - col.replicate(1, 3));
  check_same(va * g.constant(scl), a * scl(0, 0));
  check_same(g.constant(row) + va, a + row.replicate(4, 1));
  check_same(g.constant(scl) - va, (scl.replicate(4, 3) - a));
  check_same(g.constant(col) * va, a.cwiseProduct(col.replicate(1, 3)));
}

TEST_CASE("gradient check covers every op") {
  RngHub hub(11);
  auto rng = hub.stream("gradcheck");
  int total_points = 0;
  double worst = 0.0;
  auto run = [&](auto&& build, const std::vector<Mat>& inputs) {
    auto res = grad_check(build, inputs);
    CHECK(res.max_rel < 1e-4);
    total_points += res.points;
    if (res.max_rel > worst) worst = res.max_rel;
  };

  const Mat c35 = random_mat(rng, 3, 5);
  run([&](Graph& g, std::vector<Var>& v) {
    return project_to_scalar(g, matmul(v[0], v[1]), c35);
  }, {random_mat(rng, 3, 4), random_mat(rng, 4, 5)});

  const Mat c43 = random_mat(rng, 4, 3);
  run([&](Graph& g, std::vector<Var>& v) {
    return project_to_scalar(g, v[0] + v[1], c43);
  }, {random_mat(rng, 4, 3), random_mat(rng, 4, 3)});
  run([&](Graph& g, std::vector<Var>& v) {
    return project_to_scalar(g, v[0] - v[1], c43);
  }, {random_mat(rng, 4, 3), random_mat(rng, 1, 3)});
  run([&](Graph& g, std::vector<Var>& v) {
    return project_to_scalar(g, v[0] * v[1], c43);
  }, {random_mat(rng, 4, 3), random_mat(rng, 4, 1)});
  run([&](Graph& g, std::vector<Var>& v) {
    return project_to_scalar(g, v[0] * v[1], c43);
  }, {random_mat(rng, 1, 1), random_mat(rng, 4, 3)});

  run([&](Graph& g, std::vector<Var>& v) {
    return project_to_scalar(g, affine(v[0], -1.7, 0.3), c43);
  }, {random_mat(rng, 4, 3)});

  for (auto maker : {&tanh, &sigmoid}) {
    run([&](Graph& g, std::vector<Var>& v) {
      return project_to_scalar(g, maker(v[0]), c43);
    }, {random_mat(rng, 4, 3)});
  }
  run([&](Graph& g, std::vector<Var>& v) {
    return project_to_scalar(g, relu(v[0]), c43);
  }, {random_mat_off_zero(rng, 4, 3)});
  run([&](Graph& g, std::vector<Var>& v) {
    return project_to_scalar(g, selu(v[0]), c43);
  }, {random_mat_off_zero(rng, 4, 3)});

  run([&](Graph& g, std::vector<Var>& v) {
    return project_to_scalar(g, log_clamped(v[0]), c43);
  }, {random_mat(rng, 4, 3, 0.2, 3.0)});

  run([&](Graph& g, std::vector<Var>& v) {
    return softmax_cross_entropy(v[0], {2, 0, 4, 1});
  }, {random_mat(rng, 4, 5)});
  run([&](Graph& g, std::vector<Var>& v) {
    return softmax_cross_entropy(v[0], {2, 0, 4, 1}, {0.5, 0.0, 2.0, 1.0});
  }, {random_mat(rng, 4, 5)});

  const Mat c41 = random_mat(rng, 4, 1);
  run([&](Graph& g, std::vector<Var>& v) {
    return project_to_scalar(g, cosine_distance(v[0], v[1]), c41);
  }, {random_mat_off_zero(rng, 4, 6, 0.3), random_mat_off_zero(rng, 4, 6, 0.3)});

  const Mat c33 = random_mat(rng, 3, 3);
  run([&](Graph& g, std::vector<Var>& v) {
    return project_to_scalar(g, embedding_lookup(v[0], {1, 4, 1}), c33);
  }, {random_mat(rng, 5, 3)});

  const Mat c42 = random_mat(rng, 4, 2);
  run([&](Graph& g, std::vector<Var>& v) {
    return project_to_scalar(g, slice_cols(v[0], 1, 2), c42);
  }, {random_mat(rng, 4, 5)});

  run([&](Graph& g, std::vector<Var>& v) { return mean_all(v[0]); },
      {random_mat(rng, 3, 4)});
  run([&](Graph& g, std::vector<Var>& v) { return sum_all(v[0]); },
      {random_mat(rng, 3, 4)});

  run([&](Graph& g, std::vector<Var>& v) {
    std::mt19937_64 fixed(99);  // identical mask on every evaluation
    return project_to_scalar(g, dropout(v[0], 0.4, fixed), c43);
  }, {random_mat(rng, 4, 3)});

  // composite: a small recurrent-style chain touching several ops at once
  const Mat c1 = random_mat(rng, 1, 1);
  run([&](Graph& g, std::vector<Var>& v) {
    Var h = tanh(matmul(v[0], v[1]));
    Var gate = sigmoid(matmul(v[0], v[2]));
    Var mix = gate * h + (Scalar(1) - gate) * tanh(v[0]);
    return mean_all(cosine_distance(mix, v[3]));
  }, {random_mat(rng, 3, 4), random_mat(rng, 4, 4), random_mat(rng, 4, 4),
      random_mat_off_zero(rng, 3, 4, 0.3)});

  CHECK(total_points >= 20);
  MESSAGE("gradient points checked: " << total_points << ", worst rel err: " << worst);
}

TEST_CASE("zero-weight rows are invisible to the weighted cross entropy") {
  RngHub hub(12);
  auto rng = hub.stream("pad");
  const Mat logits = random_mat(rng, 3, 6);
  Mat padded(5, 6);
  padded.topRows(3) = logits;
  padded.bottomRows(2) = random_mat(rng, 2, 6);  // garbage that must not matter

  Graph g1;
  Var l1 = softmax_cross_entropy(g1.leaf(logits, true), {1, 2, 3}, {1.0, 0.5, 2.0});
  g1.backward(l1);

  Graph g2;
  Var in2 = g2.leaf(padded, true);
  Var l2 = softmax_cross_entropy(in2, {1, 2, 3, 0, 0}, {1.0, 0.5, 2.0, 0.0, 0.0});
  g2.backward(l2);

  CHECK(g1.value(l1)(0, 0) == g2.value(l2)(0, 0));
  const Mat grad_small = g1.grad(Var{&g1, 0});
  const Mat grad_big = g2.grad(in2);
  CHECK((grad_big.topRows(3) - grad_small).cwiseAbs().maxCoeff() == 0.0);
  CHECK(grad_big.bottomRows(2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("embedding rows used twice accumulate both contributions") {
  Graph g;
  Mat table = Mat::Zero(3, 2);
  table << 1, 2, 3, 4, 5, 6;
  Var vt = g.leaf(table, true);
  Var out = embedding_lookup(vt, {0, 0, 2});
  g.backward(sum_all(out));
  const Mat grad = g.grad(vt);
  CHECK(grad(0, 0) == 2.0);
  CHECK(grad(0, 1) == 2.0);
  CHECK(grad(1, 0) == 0.0);
  CHECK(grad(2, 0) == 1.0);
}

TEST_CASE("parameter binding dedups and accumulates over reuse") {
  ParamSet ps;
  Parameter& w = ps.add("w", 2, 2);
  w.value << 1, 2, 3, 4;

  Graph g;
  Var v1 = g.param(w);
  Var v2 = g.param(w);
  CHECK(v1.id == v2.id);

  Mat a(2, 2), b(2, 2);
  a << 1, 0, 0, 1;
  b << 2, 2, 2, 2;
  Var loss = sum_all(v1 * g.constant(a)) + sum_all(v2 * g.constant(b));
  g.backward(loss);
  CHECK((w.grad - (a + b)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("frozen parameters pass gradient through but never accumulate it") {
  ParamSet ps;
  Parameter& w = ps.add("w", 2, 2);
  w.value << 2, 0, 0, 2;
  ParamSet ps2;
  Parameter& x = ps2.add("x", 2, 2);
  x.value << 1, 1, 1, 1;

  Graph g;
  Var loss = sum_all(matmul(g.frozen(w), g.param(x)));
  g.backward(loss);
  CHECK(w.grad.cwiseAbs().maxCoeff() == 0.0);        // frozen stays untouched
  CHECK((x.grad - Mat::Constant(2, 2, 2.0)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("adam with a constant gradient matches the closed form") {
  ParamSet ps;
  Parameter& p = ps.add("p", 1, 2);
  p.value << 10.0, -5.0;
  Mat g(1, 2);
  g << 3.0, -0.5;

  AdamConfig cfg;
  cfg.lr = 0.1;
  AdamOptimizer opt(cfg);
  Mat expect = p.value;
  for (int t = 1; t <= 3; ++t) {
    ps.zero_grads();
    p.grad = g;
    opt.step(ps);
    // with constant gradient, bias correction cancels exactly:
    // step = lr * g / (|g| + eps) every iteration
    for (Index j = 0; j < 2; ++j)
      expect(0, j) -= cfg.lr * g(0, j) / (std::abs(g(0, j)) + cfg.eps);
    CHECK((p.value - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
  CHECK(opt.steps_taken() == 3);
}

TEST_CASE("adam refuses non-finite gradients") {
  ParamSet ps;
  Parameter& p = ps.add("bad", 1, 1);
  p.grad(0, 0) = std::numeric_limits<Scalar>::quiet_NaN();
  AdamOptimizer opt;
  CHECK_THROWS_AS(opt.step(ps), std::runtime_error);
}

TEST_CASE("shape and usage errors are rejected") {
  Graph g;
  Var a = g.constant(Mat::Zero(2, 3));
  Var b = g.constant(Mat::Zero(3, 2));
  CHECK_THROWS_AS(a + b, std::invalid_argument);
  CHECK_THROWS_AS(matmul(a, g.constant(Mat::Zero(2, 2))), std::invalid_argument);
  CHECK_THROWS_AS(g.backward(a), std::invalid_argument);  // loss not 1x1
  CHECK_THROWS_AS(softmax_cross_entropy(a, {0, 5}), std::out_of_range);
  CHECK_THROWS_AS(softmax_cross_entropy(a, {0}), std::invalid_argument);
  CHECK_THROWS_AS(cosine_distance(a, b), std::invalid_argument);
  Var z = g.constant(Mat::Zero(1, 3));
  CHECK_THROWS_AS(cosine_distance(z, z), std::runtime_error);  // zero norm
  CHECK_THROWS_AS(slice_cols(a, 2, 2), std::invalid_argument);
  CHECK_THROWS_AS(embedding_lookup(a, {2}), std::out_of_range);

  Graph other;
  Var foreign = other.constant(Mat::Zero(2, 3));
  CHECK_THROWS_AS(g.value(foreign), std::logic_error);
  CHECK_THROWS_AS(a + foreign, std::logic_error);

  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(dropout(a, 1.0, rng), std::invalid_argument);
  CHECK_THROWS_AS(dropout(a, -0.1, rng), std::invalid_argument);
}

TEST_CASE("dropout keeps expectations and leaves rng untouched at p=0") {
  std::mt19937_64 rng(123);
  const std::uint64_t before = rng();
  std::mt19937_64 replay(123);

  Graph g;
  Mat x = Mat::Ones(10, 10);
  Var v = dropout(g.constant(x), 0.0, replay);
  CHECK((g.value(v) - x).cwiseAbs().maxCoeff() == 0.0);
  CHECK(replay() == before);  // p=0 consumed nothing

  std::mt19937_64 rng2(321);
  Var d = dropout(g.constant(x), 0.5, rng2);
  const Mat& dv = g.value(d);
  int kept = 0;
  for (Index i = 0; i < dv.rows(); ++i)
    for (Index j = 0; j < dv.cols(); ++j) {
      CHECK((dv(i, j) == 0.0 || dv(i, j) == 2.0));
      if (dv(i, j) != 0.0) ++kept;
    }
  CHECK(kept > 20);
  CHECK(kept < 80);
}

TEST_CASE("rng streams are independent and reproducible") {
  RngHub h1(2024), h2(2024), h3(777);
  auto a1 = h1.stream("alpha");
  auto a2 = h2.stream("alpha");
  CHECK(a1() == a2());
  auto b1 = h1.stream("beta");
  CHECK(h1.stream("alpha")() == h2.stream("alpha")());  // beta creation didn't shift alpha
  auto c = h3.stream("alpha");
  CHECK(a1() != c());  // different root seed
  CHECK(h1.stream("alpha", 1)() != h1.stream("alpha", 2)());
}
