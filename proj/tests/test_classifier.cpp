#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "emb2emb/classifier.hpp"
#include "emb2emb/rng.hpp"
#include "grad_check.hpp"

using namespace emb2emb;
using emb2emb::testing::random_mat;

namespace {

MlpBinaryClassifier make(ClassifierConfig cfg, std::uint64_t seed) {
  RngHub hub(seed);
  auto rng = hub.stream("clf-init");
  return MlpBinaryClassifier(std::move(cfg), rng);
}

}  // namespace

TEST_CASE("presets carry the documented shapes and rates") {
  const ClassifierConfig sty = style_classifier_config(64);
  CHECK(sty.hidden == std::vector<Index>{512});
  CHECK(sty.dropout == doctest::Approx(0.5));
  CHECK(sty.input_noise_sigma == doctest::Approx(0.5));
  CHECK(sty.lr == doctest::Approx(1e-4));

  const ClassifierConfig disc = discriminator_config(64);
  CHECK(disc.hidden == std::vector<Index>({300, 300}));
  CHECK(disc.dropout == 0.0);
  CHECK(disc.input_noise_sigma == 0.0);
  CHECK(disc.lr == doctest::Approx(1e-5));

  ClassifierConfig cfg;
  cfg.input_dim = 8;
  cfg.hidden = {16};
  const auto n = make(cfg, 1).params().scalar_count();
  CHECK(n == static_cast<std::size_t>(8 * 16 + 16 + 16 + 1));
}

TEST_CASE("plain probability matches a hand-composed single-layer oracle") {
  ClassifierConfig cfg;
  cfg.input_dim = 4;
  cfg.hidden = {3};
  MlpBinaryClassifier clf = make(cfg, 2);

  RngHub hub(3);
  auto rng = hub.stream("x");
  const Mat x = random_mat(rng, 5, 4);

  const Mat& W = clf.params().find("W1")->value;
  const Mat& b = clf.params().find("b1")->value;
  const Mat& oW = clf.params().find("out_W")->value;
  const Mat& ob = clf.params().find("out_b")->value;

  Mat h = x * W;
  h.rowwise() += b.row(0);
  h = h.cwiseMax(0.0);
  Mat logit = h * oW;
  logit.array() += ob(0, 0);
  const Mat expect = logit.unaryExpr(
      [](Scalar v) { return Scalar(1) / (Scalar(1) + std::exp(-v)); });

  CHECK((clf.prob(x) - expect).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((clf.prob(x) - clf.prob(x)).cwiseAbs().maxCoeff() == 0.0);  // deterministic

  // graph path without training flags equals the plain path
  Graph g;
  Var p = clf.prob_in_graph(g, g.constant(x));
  CHECK((g.value(p) - clf.prob(x)).cwiseAbs().maxCoeff() < 1e-12);

  // all-zero weights pin the output at exactly one half
  for (Parameter* prm : clf.params().all()) prm->value.setZero();
  CHECK(clf.prob(x).maxCoeff() == 0.5);
  CHECK(clf.prob(x).minCoeff() == 0.5);

  CHECK(clf.prob(x).rows() == 5);
  CHECK(clf.prob(x).cols() == 1);
  CHECK_THROWS_AS(clf.prob(Mat::Zero(2, 7)), std::invalid_argument);
}

TEST_CASE("a linear classifier (no hidden layers) is supported") {
  ClassifierConfig cfg;
  cfg.input_dim = 2;
  cfg.hidden = {};
  MlpBinaryClassifier clf = make(cfg, 4);
  clf.params().find("out_W")->value << 3, -2;
  clf.params().find("out_b")->value << 0.5;
  Mat x(1, 2);
  x << 1, 1;  // logit = 3 - 2 + 0.5
  const Scalar expect = Scalar(1) / (Scalar(1) + std::exp(Scalar(-1.5)));
  CHECK(clf.prob(x)(0, 0) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("graph gradients match finite differences of the plain path") {
  ClassifierConfig cfg;
  cfg.input_dim = 5;
  cfg.hidden = {4, 3};
  MlpBinaryClassifier clf = make(cfg, 5);

  RngHub hub(6);
  auto rng = hub.stream("x");
  const Mat x = random_mat(rng, 3, 5);
  const Mat C = random_mat(rng, 3, 1);

  Graph g;
  Var vx = g.leaf(x, true);
  Var p = clf.prob_in_graph(g, vx);
  Var loss = sum_all(p * g.constant(C));
  clf.params().zero_grads();
  g.backward(loss);

  auto plain_loss = [&]() { return (clf.prob(x).cwiseProduct(C)).sum(); };
  const double h = 1e-5;
  double worst = 0;
  for (Parameter* prm : clf.params().all()) {
    for (Index r = 0; r < prm->value.rows(); ++r)
      for (Index c = 0; c < prm->value.cols(); ++c) {
        const Scalar orig = prm->value(r, c);
        prm->value(r, c) = orig + h;
        const double fp = plain_loss();
        prm->value(r, c) = orig - h;
        const double fm = plain_loss();
        prm->value(r, c) = orig;
        const double num = (fp - fm) / (2 * h);
        worst = std::max(worst, std::abs(num - prm->grad(r, c)) /
                                    std::max({std::abs(num),
                                              std::abs(prm->grad(r, c)), 1e-3}));
      }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("noise and dropout act only on the training path") {
  ClassifierConfig cfg;
  cfg.input_dim = 6;
  cfg.hidden = {8};
  cfg.dropout = Scalar(0.5);
  cfg.input_noise_sigma = Scalar(0.5);
  MlpBinaryClassifier clf = make(cfg, 7);

  RngHub hub(8);
  auto rng = hub.stream("x");
  const Mat x = random_mat(rng, 4, 6);

  // inference path ignores the regularizers entirely
  Graph g;
  Var p = clf.prob_in_graph(g, g.constant(x), false, nullptr);
  CHECK((g.value(p) - clf.prob(x)).cwiseAbs().maxCoeff() < 1e-12);

  // training path perturbs the output (and needs an rng)
  auto noise1 = hub.stream("n", 1);
  auto noise2 = hub.stream("n", 2);
  Graph g1, g2;
  const Mat p1 = g1.value(clf.prob_in_graph(g1, g1.constant(x), true, &noise1));
  const Mat p2 = g2.value(clf.prob_in_graph(g2, g2.constant(x), true, &noise2));
  CHECK((p1 - p2).cwiseAbs().maxCoeff() > 0);
  CHECK((p1 - clf.prob(x)).cwiseAbs().maxCoeff() > 0);
  Graph g3;
  CHECK_THROWS_AS(clf.prob_in_graph(g3, g3.constant(x), true, nullptr),
                  std::invalid_argument);

  // identical streams give identical training passes (seeded reproducibility)
  auto noise3 = hub.stream("n", 1);
  Graph g4;
  const Mat p3 = g4.value(clf.prob_in_graph(g4, g4.constant(x), true, &noise3));
  CHECK((p1 - p3).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("detached path sends gradient to the input but not the weights") {
  ClassifierConfig cfg;
  cfg.input_dim = 4;
  cfg.hidden = {5};
  MlpBinaryClassifier clf = make(cfg, 9);
  const std::string before = clf.hash();

  RngHub hub(10);
  auto rng = hub.stream("x");
  const Mat x = random_mat(rng, 2, 4);

  Graph g;
  Var vx = g.leaf(x, true);
  Var loss = mean_all(clf.prob_in_graph_detached(g, vx));
  clf.params().zero_grads();
  g.backward(loss);

  CHECK(g.grad(vx).cwiseAbs().maxCoeff() > 0);
  for (const Parameter* p : clf.params().all())
    CHECK(p->grad.cwiseAbs().maxCoeff() == 0.0);
  CHECK(clf.hash() == before);

  // a frozen model binds detached even on the trainable entry point
  clf.freeze();
  Graph g2;
  Var vx2 = g2.leaf(x, true);
  Var loss2 = mean_all(clf.prob_in_graph(g2, vx2));
  clf.params().zero_grads();
  g2.backward(loss2);
  for (const Parameter* p : clf.params().all())
    CHECK(p->grad.cwiseAbs().maxCoeff() == 0.0);
  CHECK(clf.hash() == before);
}

TEST_CASE("classifier save/load round trip") {
  ClassifierConfig cfg;
  cfg.input_dim = 6;
  cfg.hidden = {3, 2};
  cfg.dropout = Scalar(0.25);
  cfg.input_noise_sigma = Scalar(0.1);
  MlpBinaryClassifier clf = make(cfg, 11);
  clf.freeze();

  const std::string path =
      (std::filesystem::temp_directory_path() / "emb2emb_clf_test.bin").string();
  clf.save(path, {{"held_out_accuracy", "0.875"}});
  MlpBinaryClassifier loaded = MlpBinaryClassifier::load(path);

  CHECK(loaded.hash() == clf.hash());
  CHECK(loaded.frozen());
  CHECK(loaded.config().hidden == cfg.hidden);
  CHECK(loaded.config().dropout == doctest::Approx(0.25));
  RngHub hub(12);
  auto rng = hub.stream("x");
  const Mat x = random_mat(rng, 3, 6);
  CHECK((loaded.prob(x) - clf.prob(x)).cwiseAbs().maxCoeff() == 0.0);
  std::remove(path.c_str());
}

TEST_CASE("constructor rejects bad configurations") {
  ClassifierConfig cfg;
  cfg.input_dim = 0;
  CHECK_THROWS_AS(make(cfg, 13), std::invalid_argument);
  cfg.input_dim = 4;
  cfg.dropout = 1;
  CHECK_THROWS_AS(make(cfg, 13), std::invalid_argument);
  cfg.dropout = Scalar(0.5);
  cfg.hidden = {0};
  CHECK_THROWS_AS(make(cfg, 13), std::invalid_argument);
}
