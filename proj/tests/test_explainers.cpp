#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "doctest.h"
#include "exgc/error.hpp"
#include "exgc/explainers.hpp"
#include "oracles.hpp"

using namespace exgc;
using namespace exgc::explain;

namespace {

SyntheticState random_state(std::mt19937_64& rng, std::size_t n, std::size_t d, std::size_t classes,
                            std::uint64_t seed) {
  SyntheticState s;
  s.features = oracle::random_tensor(rng, n, d);
  s.num_classes = classes;
  for (std::size_t i = 0; i < n; ++i) s.labels.push_back(static_cast<int>(i % classes));
  s.phi = models::sample_adjgen({models::InitKind::GlorotUniform, seed}, d, 8);
  return s;
}

models::GcnParams theta_for(std::size_t d, std::size_t classes, std::uint64_t seed) {
  return models::sample_theta({models::InitKind::GlorotUniform, seed}, d, 6, classes);
}

/// Mean cross-entropy of the synthetic GCN, by dense loops on a generated adjacency.
double dense_synthetic_loss(const SyntheticState& s, const Tensor& x, const models::GcnParams& theta) {
  const Tensor adj = oracle::dense_normalize(models::adjgen_forward(x, s.phi));
  const Tensor z = oracle::dense_gcn(adj, x, theta.w1, theta.w2);
  std::vector<std::size_t> rows(s.size());
  std::iota(rows.begin(), rows.end(), 0);
  return oracle::masked_cross_entropy(z, s.labels, rows);
}

std::vector<std::size_t> ranking(const std::vector<double>& p) {
  std::vector<std::size_t> idx(p.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
  return idx;
}

}  // namespace

TEST_CASE("saliency of two mirror nodes is uniform") {
  SyntheticState s;
  s.features = Tensor::from_rows({{0.3, -0.2}, {0.3, -0.2}});
  s.labels = {0, 0};
  s.num_classes = 2;
  s.phi = models::sample_adjgen({models::InitKind::GlorotUniform, 1}, 2, 4);
  const auto p = sa_scores(s, theta_for(2, 2, 2)).p;
  CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("saliency scores lie on the simplex") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const SyntheticState s = random_state(rng, 7, 4, 3, 10u + static_cast<unsigned>(trial));
    const auto p = sa_scores(s, theta_for(4, 3, static_cast<unsigned>(trial))).p;
    double sum = 0.0;
    for (double v : p) {
      CHECK(v > 0.0);
      sum += v;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("saliency matches a softmax of finite-difference gradients") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    const SyntheticState s = random_state(rng, 6, 3, 2, 30u + static_cast<unsigned>(trial));
    const models::GcnParams theta = theta_for(3, 2, 40u + static_cast<unsigned>(trial));
    const Tensor fd = oracle::central_difference(
        [&](const Tensor& x) { return dense_synthetic_loss(s, x, theta); }, s.features, 1e-6);
    std::vector<double> expected(s.size(), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      for (std::size_t j = 0; j < fd.cols(); ++j) expected[i] += std::abs(fd(i, j));
      total += (expected[i] = std::exp(expected[i]));
    }
    const auto p = sa_scores(s, theta).p;
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(p[i] == doctest::Approx(expected[i] / total).epsilon(1e-7));
  }
}

TEST_CASE("saliency ranking is invariant to loss scaling") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const SyntheticState s = random_state(rng, 8, 4, 3, 50u + static_cast<unsigned>(trial));
    const models::GcnParams theta = theta_for(4, 3, 60u + static_cast<unsigned>(trial));
    CHECK(ranking(sa_scores(s, theta).p) == ranking(sa_scores(s, theta, 2.0).p));
  }
}

TEST_CASE("non-finite features are reported with the node index") {
  std::mt19937_64 rng(6);
  SyntheticState s = random_state(rng, 4, 3, 2, 1);
  s.features(2, 1) = std::nan("");
  CHECK_THROWS_AS(sa_scores(s, theta_for(3, 2, 1)), NumericError);
}

TEST_CASE("local mask without a penalty stays at one") {
  std::mt19937_64 rng(7);
  const SyntheticState s = random_state(rng, 6, 3, 2, 2);
  const auto out = local_mask_scores(s, theta_for(3, 2, 3), 0.0, 50, 0.1, MaskDistance::Mse, 1.0);
  for (double v : out.p) CHECK(v == 1.0);
  CHECK(out.final_objective == 0.0);
  CHECK(out.iterations == 50);
}

TEST_CASE("local mask with a huge penalty collapses to zero") {
  std::mt19937_64 rng(8);
  const SyntheticState s = random_state(rng, 6, 3, 2, 2);
  for (MaskDistance d : {MaskDistance::Mse, MaskDistance::SoftmaxKl}) {
    const auto out = local_mask_scores(s, theta_for(3, 2, 3), 1e6, 20, 0.01, d);
    for (double v : out.p) CHECK(v == 0.0);
  }
}

TEST_CASE("local mask scores stay in the unit interval") {
  std::mt19937_64 rng(9);
  const SyntheticState s = random_state(rng, 8, 4, 2, 4);
  const auto out = local_mask_scores(s, theta_for(4, 2, 5), 0.01, 100, 0.5);
  for (double v : out.p) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("global mask with a dominant constraint approaches the rate") {
  std::mt19937_64 rng(10);
  const SyntheticState s = random_state(rng, 8, 4, 2, 6);
  for (double r : {0.2, 0.7}) {
    const auto out = global_mask_scores(s, theta_for(4, 2, 7), 1e4, r, 400, 0.01, 11);
    for (double v : out.p) CHECK(std::abs(v - r) < 0.05);
  }
}

TEST_CASE("global mask is deterministic per seed") {
  std::mt19937_64 rng(11);
  const SyntheticState s = random_state(rng, 6, 3, 2, 8);
  const auto a = global_mask_scores(s, theta_for(3, 2, 9), 0.1, 0.5, 20, 0.01, 3);
  const auto b = global_mask_scores(s, theta_for(3, 2, 9), 0.1, 0.5, 20, 0.01, 3);
  CHECK(a.p == b.p);
  CHECK_THROWS_AS(global_mask_scores(s, theta_for(3, 2, 9), 0.1, 1.0, 20, 0.01, 3), ConfigError);
}

TEST_CASE("information constraint identities") {
  CHECK(info_constraint({0.3, 0.3, 0.3}, 0.3) == 0.0);
  CHECK(info_constraint({1.0}, 0.5) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(info_constraint({0.0}, 0.5) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK_THROWS_AS(info_constraint({0.5}, 0.0), ConfigError);
}

TEST_CASE("information constraint is non-negative") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_real_distribution<double> ur(1e-6, 1.0 - 1e-6);
  for (int trial = 0; trial < 10000; ++trial) {
    const double r = ur(rng);
    CHECK(info_constraint({u(rng), u(rng), u(rng)}, r) >= 0.0);
  }
}

TEST_CASE("small rate collapses to the weighted log penalty") {
  std::mt19937_64 rng(13);
  const double r = 1e-6;
  for (int trial = 0; trial < 100; ++trial) {
    SUBCASE("exact difference for any p") {
      std::uniform_real_distribution<double> u(0.01, 0.99);
      std::vector<double> p(10);
      double head = 0.0, tail = 0.0;
      for (double& v : p) {
        v = u(rng);
        head += v * std::log(v / r);
        tail += (1.0 - v) * std::log((1.0 - v) / (1.0 - r));
      }
      CHECK(info_constraint(p, r) == doctest::Approx(head + tail).epsilon(1e-12));
    }
    SUBCASE("within one percent for scores near one") {
      std::uniform_real_distribution<double> u(0.95, 1.0);
      std::vector<double> p(10);
      double head = 0.0;
      for (double& v : p) head += (v = u(rng)) * std::log(v / r);
      CHECK(std::abs(info_constraint(p, r) - head) < 0.01 * head);
    }
  }
}

TEST_CASE("random scores are a normalized permutation") {
  const auto a = random_scores(6, 3);
  CHECK(a.p == random_scores(6, 3).p);
  std::vector<double> sorted = a.p;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t k = 0; k < 6; ++k) CHECK(sorted[k] == doctest::Approx((k + 1) / 21.0).epsilon(1e-15));
}

TEST_CASE("random scores pick each node first equally often") {
  const std::size_t n = 5, trials = 5000;
  std::vector<std::size_t> top(n, 0);
  for (std::uint64_t s = 0; s < trials; ++s) ++top[ranking(random_scores(n, s).p)[0]];
  const double expected = static_cast<double>(trials) / n;
  const double sd = std::sqrt(trials * (1.0 / n) * (1.0 - 1.0 / n));
  for (std::size_t c : top) CHECK(std::abs(static_cast<double>(c) - expected) < 4.0 * sd);
}

TEST_CASE("top-k breaks ties toward the lower index") {
  const std::vector<double> p{0.1, 0.4, 0.4, 0.05, 0.4};
  CHECK(top_k(p, {0, 1, 2, 3, 4}, 2) == std::vector<std::size_t>{1, 2});
  CHECK(top_k(p, {4, 3, 0}, 2) == std::vector<std::size_t>{4, 0});
  CHECK(top_k(p, {3}, 5) == std::vector<std::size_t>{3});
}

TEST_CASE("score dispatch follows the configured explainer") {
  std::mt19937_64 rng(14);
  const SyntheticState s = random_state(rng, 5, 3, 2, 9);
  CondenseConfig cfg;
  cfg.explainer_steps = 5;
  for (ExplainerKind k : {ExplainerKind::Sa, ExplainerKind::LocalMask, ExplainerKind::GlobalMask,
                          ExplainerKind::Random}) {
    cfg.explainer = k;
    const auto out = score_nodes(s, theta_for(3, 2, 1), cfg, 2);
    CHECK(out.kind == k);
    CHECK(out.p.size() == 5);
  }
}

TEST_CASE("score file lists index, score and rank") {
  ImportanceScores s;
  s.p = {0.2, 0.5, 0.3};
  const auto file = std::filesystem::temp_directory_path() / "exgc_test_scores.tsv";
  save_scores(s, file);
  std::ifstream in(file);
  std::string text((std::istreambuf_iterator<char>(in)), {});
  CHECK(text == "0\t0.2\t3\n1\t0.5\t1\n2\t0.3\t2\n");
}
