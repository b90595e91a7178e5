#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "doctest.h"
#include "exgc/coreset.hpp"
#include "exgc/error.hpp"
#include "coreset_oracles.hpp"
#include "oracles.hpp"

using namespace exgc;

namespace {

LabeledGraph small_sbm(std::uint64_t seed = 2) {
  SbmParams p;
  p.nodes_per_class = 30;
  p.feature_dim = 5;
  return generate_sbm(p, seed);
}

}  // namespace

TEST_CASE("herding and k-center match exhaustive oracles for n <= 8, k <= 3") {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> grid(0, 3);
  for (std::size_t n = 1; n <= 8; ++n) {
    for (std::size_t k = 1; k <= std::min<std::size_t>(3, n); ++k) {
      for (int trial = 0; trial < 6; ++trial) {
        // even trials use integer grids so distance ties occur
        Tensor x = oracle::random_tensor(rng, n + 2, 2);
        if (trial % 2 == 0)
          for (double& v : x.values()) v = grid(rng);
        std::vector<std::size_t> pool(n);
        std::iota(pool.begin(), pool.end(), 2);
        std::shuffle(pool.begin(), pool.end(), rng);
        CHECK(herding(x, pool, k) == *oracle::exhaustive_herding(x, pool, k));
        for (std::size_t first = 0; first < n; ++first) {
          const auto centers = kcenter(x, pool, k, pool[first]);
          CHECK(centers == *oracle::exhaustive_kcenter(x, pool, k, first));
          CHECK(covering_radius(x, pool, centers) <= 2.0 * oracle::optimal_radius(x, pool, k) + 1e-12);
        }
      }
    }
  }
}

TEST_CASE("k-center on the corners of a square") {
  const Tensor x = Tensor::from_rows({{0, 0}, {1, 0}, {0, 1}, {1, 1}, {0.5, 0.5}});
  const std::vector<std::size_t> pool{0, 1, 2, 3, 4};
  CHECK(kcenter(x, pool, 2, 0) == std::vector<std::size_t>{0, 3});
  CHECK(kcenter(x, pool, 3, 0) == std::vector<std::size_t>{0, 3, 1});
  CHECK(covering_radius(x, pool, {0, 3}) == doctest::Approx(1.0));
  CHECK(kcenter(x, pool, 0, 0).empty());
  CHECK_THROWS_AS(kcenter(x, {0, 1}, 3, 0), ConfigError);
  CHECK_THROWS_AS(kcenter(x, {0, 1}, 1, 4), ConfigError);
}

TEST_CASE("herding on five points on a line") {
  // mean 2: first pick is 2; then the best pair mean is 2 again with 1 or 3 -> the earlier entry 1
  const Tensor x = Tensor::from_rows({{0}, {1}, {2}, {3}, {4}});
  const std::vector<std::size_t> pool{0, 1, 2, 3, 4};
  CHECK(herding(x, pool, 1) == std::vector<std::size_t>{2});
  CHECK(herding(x, pool, 3) == std::vector<std::size_t>{2, 1, 3});
  CHECK(herding(x, pool, 5).size() == 5);
  CHECK_THROWS_AS(herding(x, pool, 6), ConfigError);
}

TEST_CASE("selection baselines pick train nodes per class") {
  const LabeledGraph g = small_sbm();
  const auto counts = coreset_counts(g, 0.1);
  for (const CoresetResult& r : {random_select(g, 0.1, 4), herding_select(g, 0.1), kcenter_select(g, 0.1, 4)}) {
    REQUIRE(r.per_class.size() == g.num_classes);
    for (std::size_t c = 0; c < g.num_classes; ++c) {
      CHECK(r.per_class[c].size() == counts[c]);
      for (std::size_t i : r.per_class[c]) {
        CHECK(static_cast<std::size_t>(g.labels[i]) == c);
        CHECK(std::find(g.split.train.begin(), g.split.train.end(), i) != g.split.train.end());
      }
    }
    auto nodes = r.nodes();
    std::sort(nodes.begin(), nodes.end());
    CHECK(std::adjacent_find(nodes.begin(), nodes.end()) == nodes.end());
    const LabeledGraph sub = coreset_graph(g, r);
    CHECK(sub.num_nodes == nodes.size());
  }
}

TEST_CASE("random and k-center selection are deterministic per seed") {
  const LabeledGraph g = small_sbm();
  CHECK(random_select(g, 0.1, 4).nodes() == random_select(g, 0.1, 4).nodes());
  CHECK(random_select(g, 0.1, 4).nodes() != random_select(g, 0.1, 5).nodes());
  CHECK(kcenter_select(g, 0.1, 4).nodes() == kcenter_select(g, 0.1, 4).nodes());
  CHECK(herding_select(g, 0.1).nodes() == herding_select(g, 0.1).nodes());
}

TEST_CASE("coreset counts follow the proportional rule") {
  const LabeledGraph g = small_sbm();  // 90 nodes, 27 train
  const auto counts = coreset_counts(g, 0.1);
  CHECK(std::accumulate(counts.begin(), counts.end(), std::size_t{0}) == 9);
  CHECK_THROWS_AS(coreset_counts(g, 0.0), ConfigError);
}
