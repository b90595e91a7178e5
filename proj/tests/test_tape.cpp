#include <cmath>
#include <random>

#include "doctest.h"
#include "exgc/error.hpp"
#include "exgc/tape.hpp"
#include "oracles.hpp"

using namespace exgc;
using namespace exgc::ad;

TEST_CASE("relu clamps negatives") {
  Tape t;
  Var x = t.constant(Tensor::from_rows({{-1.0, 2.0}}));
  CHECK(relu(x).value() == Tensor::from_rows({{0.0, 2.0}}));
}

TEST_CASE("saturated cross-entropy is near zero") {
  Tape t;
  auto mask = std::make_shared<LabelMask>(LabelMask{{0}, {0}});
  Var z = t.constant(Tensor::from_rows({{10.0, -10.0}}));
  CHECK(softmax_cross_entropy(z, mask).value().item() < 1e-4);
}

TEST_CASE("masked cross-entropy rejects an empty mask") {
  Tape t;
  auto mask = std::make_shared<LabelMask>(LabelMask{{0}, {}});
  Var z = t.constant(Tensor::from_rows({{1.0, 0.0}}));
  CHECK_THROWS_AS(softmax_cross_entropy(z, mask), Error);
}

TEST_CASE("cosine of a matrix with itself counts every column") {
  std::mt19937_64 rng(3);
  Tape t;
  Var g = t.constant(oracle::random_tensor(rng, 5, 4));
  CHECK(cosine_sum(g, g).value().item() == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("shape mismatch is reported") {
  Tape t;
  Var a = t.constant(Tensor(2, 3));
  Var b = t.constant(Tensor(2, 3));
  CHECK_THROWS_AS(matmul(a, b), ShapeError);
  CHECK_THROWS_AS(a + t.constant(Tensor(3, 2)), ShapeError);
}

TEST_CASE("product rule on scalars") {
  Tape t;
  Var x = t.leaf(Tensor::scalar(3.0));
  Var y = t.leaf(Tensor::scalar(4.0));
  Var xy = hadamard(x, y);
  auto g = grad(xy, std::vector<Var>{x, y});
  CHECK(g[0].item() == 4.0);
  CHECK(g[1].item() == 3.0);
}

TEST_CASE("unused leaf gets a zero gradient") {
  Tape t;
  Var x = t.leaf(Tensor::scalar(2.0));
  Var unused = t.leaf(Tensor(2, 3, 1.0));
  auto g = grad(hadamard(x, x), std::vector<Var>{x, unused});
  CHECK(g[0].item() == 4.0);
  CHECK(g[1] == Tensor(2, 3));
}

TEST_CASE("leaf from another tape is rejected") {
  Tape t1, t2;
  Var x = t1.leaf(Tensor::scalar(1.0));
  Var other = t2.leaf(Tensor::scalar(1.0));
  Var y = hadamard(x, x);
  CHECK_THROWS_AS(grad(y, std::vector<Var>{other}), Error);
  Var not_leaf = scale(x, 2.0);
  CHECK_THROWS_AS(grad(y, std::vector<Var>{not_leaf}), Error);
}

TEST_CASE("grad leaves the tape as it found it") {
  Tape t;
  Var x = t.leaf(Tensor::scalar(2.0));
  Var y = hadamard(x, x);
  const auto before = t.size();
  (void)grad(y, std::vector<Var>{x});
  CHECK(t.size() == before);
}

TEST_CASE("second derivative through a recorded gradient") {
  // f = x^2, g = (df/dx)^2 = 4x^2, dg/dx = 8x
  Tape t;
  Var x = t.leaf(Tensor::scalar(1.0));
  Var f = hadamard(x, x);
  auto df = grad_graph(f, std::vector<Var>{x});
  Var g = hadamard(df[0], df[0]);
  CHECK(g.value().item() == doctest::Approx(4.0));
  auto dg = grad2(g, std::vector<Var>{x});
  CHECK(dg[0].item() == doctest::Approx(8.0).epsilon(1e-14));
}

TEST_CASE("missing second-order rule is an error") {
  std::mt19937_64 rng(5);
  Tape t;
  Var a = t.leaf(oracle::random_tensor(rng, 3, 2));
  Var b = t.constant(oracle::random_tensor(rng, 3, 2));
  auto g = grad_graph(cosine_sum(a, b), std::vector<Var>{a});
  Var s = sum_all(hadamard(g[0], g[0]));
  CHECK_THROWS_WITH_AS(grad2(s, std::vector<Var>{a}),
                       doctest::Contains("no registered second-order rule"), Error);
}

TEST_CASE("GCN weight gradients match central differences") {
  std::mt19937_64 rng(11);
  const std::size_t n = 10, d = 4, h = 6, c = 3;
  Tensor adj(n, n);
  std::bernoulli_distribution edge(0.3);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (edge(rng)) adj(i, j) = adj(j, i) = 1.0;
  const Tensor adj_hat = oracle::dense_normalize(adj);
  const Tensor x = oracle::random_tensor(rng, n, d);
  const Tensor w1 = oracle::random_tensor(rng, d, h);
  const Tensor w2 = oracle::random_tensor(rng, h, c);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % c);
  const std::vector<std::size_t> rows{0, 2, 3, 5, 7, 8};

  Tape t;
  Var a = t.constant(adj_hat);
  Var vw1 = t.leaf(w1);
  Var vw2 = t.leaf(w2);
  Var z = matmul(a, matmul(relu(matmul(a, matmul(t.constant(x), vw1))), vw2));
  auto mask = std::make_shared<LabelMask>(LabelMask{labels, rows});
  auto g = grad(softmax_cross_entropy(z, mask), std::vector<Var>{vw1, vw2});

  auto loss_w1 = [&](const Tensor& w) {
    return oracle::masked_cross_entropy(oracle::dense_gcn(adj_hat, x, w, w2), labels, rows);
  };
  auto loss_w2 = [&](const Tensor& w) {
    return oracle::masked_cross_entropy(oracle::dense_gcn(adj_hat, x, w1, w), labels, rows);
  };
  CHECK(oracle::relative_error(g[0], oracle::central_difference(loss_w1, w1, 1e-5)) < 1e-5);
  CHECK(oracle::relative_error(g[1], oracle::central_difference(loss_w2, w2, 1e-5)) < 1e-5);
}

TEST_CASE("gradient is linear in the output") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    Tape t;
    Var x = t.leaf(oracle::random_tensor(rng, 4, 3));
    Var w = t.constant(oracle::random_tensor(rng, 3, 2));
    Var f = sum_all(sigmoid(matmul(x, w)));
    Var g = sum_all(hadamard(relu(x), x));
    const double a = 1.7, b = -0.4;
    auto gf = grad(f, std::vector<Var>{x});
    auto gg = grad(g, std::vector<Var>{x});
    auto gc = grad(scale(f, a) + scale(g, b), std::vector<Var>{x});
    for (std::size_t i = 0; i < gc[0].size(); ++i) {
      CHECK(std::abs(gc[0].values()[i] - (a * gf[0].values()[i] + b * gg[0].values()[i])) < 1e-12);
    }
  }
}

TEST_CASE("replay reproduces every intermediate bit-exactly") {
  std::mt19937_64 rng(23);
  Tape t;
  Var x = t.leaf(oracle::random_tensor(rng, 5, 3));
  Var w = t.leaf(oracle::random_tensor(rng, 3, 2));
  auto mask = std::make_shared<LabelMask>(LabelMask{{0, 1, 0, 1, 1}, {0, 1, 4}});
  Var loss = softmax_cross_entropy(matmul(relu(x), w), mask);
  auto g = grad_graph(loss, std::vector<Var>{w});
  (void)sum_all(hadamard(g[0], g[0]));
  const auto replayed = t.replay();
  REQUIRE(replayed.size() == t.size());
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(replayed[i] == t.node(static_cast<int>(i)).value);
  CHECK(t.replay() == replayed);
}

TEST_CASE("every primitive passes the finite-difference self-check") {
  for (const auto& r : selfcheck(7)) {
    INFO(r.name << " rel error " << r.rel_error);
    CHECK(r.passed);
  }
}
