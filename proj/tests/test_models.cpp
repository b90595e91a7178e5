#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "exgc/error.hpp"
#include "exgc/graph.hpp"
#include "exgc/models.hpp"
#include "oracles.hpp"

using namespace exgc;
using namespace exgc::models;

namespace {

struct Instance {
  Tensor adj;  // raw symmetric 0/1
  std::vector<std::pair<std::size_t, std::size_t>> edges;
};

Instance random_graph(std::mt19937_64& rng, std::size_t n, double p) {
  std::bernoulli_distribution edge(p);
  Instance g{Tensor(n, n), {}};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (edge(rng)) {
        g.adj(i, j) = g.adj(j, i) = 1.0;
        g.edges.emplace_back(i, j);
      }
  return g;
}

}  // namespace

TEST_CASE("zero weights give zero logits") {
  std::mt19937_64 rng(1);
  const auto g = random_graph(rng, 5, 0.5);
  GcnParams theta{Tensor(3, 4), Tensor(4, 2), {}, {}, false};
  const Tensor z = gcn_forward(normalize_adjacency(5, g.edges), oracle::random_tensor(rng, 5, 3), theta);
  CHECK(z == Tensor(5, 2));
}

TEST_CASE("single node GCN by hand") {
  // A_hat = [[1]], x = [2], W1 = [[1, -1]], W2 = [[3], [5]]: relu([2, -2]) = [2, 0] -> 6
  GcnParams theta{Tensor::from_rows({{1.0, -1.0}}), Tensor::from_rows({{3.0}, {5.0}}), {}, {}, false};
  const Tensor z = gcn_forward(normalize_adjacency(1, {}), Tensor::from_rows({{2.0}}), theta);
  CHECK(z == Tensor::from_rows({{6.0}}));
}

TEST_CASE("GCN logits match the dense oracle") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    const auto g = random_graph(rng, 9, 0.3);
    const Tensor x = oracle::random_tensor(rng, 9, 4);
    GcnParams theta = sample_theta({InitKind::GlorotUniform, 10u + static_cast<unsigned>(trial)}, 4, 6, 3);
    const Tensor expected = oracle::dense_gcn(oracle::dense_normalize(g.adj), x, theta.w1, theta.w2);
    CHECK(oracle::relative_error(gcn_forward(normalize_adjacency(9, g.edges), x, theta), expected) < 1e-13);
  }
}

TEST_CASE("GCN is permutation equivariant") {
  std::mt19937_64 rng(3);
  const std::size_t n = 7;
  const auto g = random_graph(rng, n, 0.4);
  const Tensor x = oracle::random_tensor(rng, n, 3);
  const GcnParams theta = sample_theta({InitKind::GlorotUniform, 4}, 3, 5, 2);
  const Tensor z = gcn_forward(normalize_adjacency(n, g.edges), x, theta);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);  // new index i holds old node perm[i]
    std::vector<std::size_t> inv(n);
    for (std::size_t i = 0; i < n; ++i) inv[perm[i]] = i;
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (auto [u, v] : g.edges) edges.emplace_back(std::min(inv[u], inv[v]), std::max(inv[u], inv[v]));
    Tensor xp(n, 3);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < 3; ++j) xp(i, j) = x(perm[i], j);
    const Tensor zp = gcn_forward(normalize_adjacency(n, edges), xp, theta);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < 2; ++k) CHECK(zp(i, k) == doctest::Approx(z(perm[i], k)).epsilon(1e-12));
  }
}

TEST_CASE("SGC propagation") {
  std::mt19937_64 rng(4);
  const auto g = random_graph(rng, 6, 0.4);
  const SparseMatrix a = normalize_adjacency(6, g.edges);
  const Tensor x = oracle::random_tensor(rng, 6, 3);
  SUBCASE("one hop with identity weights is A_hat X") {
    const Tensor z = sgc_forward(a, x, SgcParams{Tensor::identity(3), 1});
    CHECK(oracle::relative_error(z, a.multiply(x)) < 1e-15);
  }
  SUBCASE("two hops equal two sparse products") {
    const Tensor w = oracle::random_tensor(rng, 3, 2);
    const Tensor z = sgc_forward(a, x, SgcParams{w, 2});
    CHECK(oracle::relative_error(z, matmul(a.multiply(a.multiply(x)), w)) < 1e-14);
    const Tensor ad = oracle::dense_normalize(g.adj);
    CHECK(oracle::relative_error(z, oracle::dense_matmul(ad, oracle::dense_matmul(ad, oracle::dense_matmul(x, w)))) < 1e-13);
  }
  SUBCASE("zero hops are rejected") {
    CHECK_THROWS_AS(sgc_forward(a, x, SgcParams{Tensor::identity(3), 0}), Error);
  }
}

TEST_CASE("generator with zero weights") {
  std::mt19937_64 rng(5);
  AdjGenParams phi{Tensor(6, 4), Tensor(1, 4), Tensor(4, 1), Tensor(1, 1)};
  const Tensor a = adjgen_forward(oracle::random_tensor(rng, 4, 3), phi);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(a(i, j) == (i == j ? 1.0 : 0.5));
}

TEST_CASE("generator output is exactly symmetric") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor x = oracle::random_tensor(rng, 8, 5);
    const AdjGenParams phi = sample_adjgen({InitKind::GlorotUniform, 20u + static_cast<unsigned>(trial)}, 5, 16);
    const Tensor a = adjgen_forward(x, phi);
    for (std::size_t i = 0; i < 8; ++i) {
      CHECK(a(i, i) == 1.0);
      for (std::size_t j = 0; j < 8; ++j) {
        CHECK(a(i, j) == a(j, i));
        CHECK(a(i, j) >= 0.0);
        CHECK(a(i, j) <= 1.0);
      }
    }
  }
}

TEST_CASE("generator on one node") {
  const AdjGenParams phi = sample_adjgen({InitKind::GlorotUniform, 1}, 3, 8);
  CHECK(adjgen_forward(Tensor::from_rows({{0.1, 0.2, 0.3}}), phi) == Tensor::from_rows({{1.0}}));
}

TEST_CASE("generator matches a straight-line pair loop") {
  std::mt19937_64 rng(7);
  const Tensor x = oracle::random_tensor(rng, 5, 3);
  const AdjGenParams phi = sample_adjgen({InitKind::GlorotUniform, 2}, 3, 6);
  auto m = [&](std::size_t i, std::size_t j) {
    double out = phi.b2(0, 0);
    for (std::size_t h = 0; h < 6; ++h) {
      double pre = phi.b1(0, h);
      for (std::size_t k = 0; k < 3; ++k) pre += x(i, k) * phi.w1(k, h) + x(j, k) * phi.w1(3 + k, h);
      out += std::max(pre, 0.0) * phi.w2(h, 0);
    }
    return out;
  };
  const Tensor a = adjgen_forward(x, phi);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      if (i == j) continue;
      const double expected = 1.0 / (1.0 + std::exp(-(m(i, j) + m(j, i)) / 2.0));
      CHECK(a(i, j) == doctest::Approx(expected).epsilon(1e-13));
    }
}

TEST_CASE("parameter draws") {
  const InitDistribution dist{InitKind::GlorotUniform, 77};
  const GcnParams a = sample_theta(dist, 5, 8, 3);
  const GcnParams b = sample_theta(dist, 5, 8, 3);
  CHECK(a.w1 == b.w1);
  CHECK(a.w2 == b.w2);
  CHECK(a.w1.max_abs() <= glorot_bound(5, 8));
  CHECK(a.w2.max_abs() <= glorot_bound(8, 3));

  // mean of one entry over 10^4 draws is within 3 standard errors of 0
  const double bound = glorot_bound(2, 2);
  const double se = bound / std::sqrt(3.0) / std::sqrt(1e4);
  double mean = 0.0;
  for (std::uint64_t s = 0; s < 10000; ++s) mean += sample_theta({InitKind::GlorotUniform, s}, 2, 2, 2).w1(0, 0);
  mean /= 1e4;
  CHECK(std::abs(mean) < 3.0 * se);
}

TEST_CASE("sparsify drops entries below the threshold") {
  const Tensor a = Tensor::from_rows({{1.0, 0.49}, {0.5, 0.7}});
  CHECK(sparsify(a, 0.5) == Tensor::from_rows({{1.0, 0.0}, {0.5, 0.7}}));
}
