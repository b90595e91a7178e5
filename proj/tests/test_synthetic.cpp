#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "exgc/error.hpp"
#include "exgc/matching.hpp"
#include "exgc/synthetic.hpp"
#include "oracles.hpp"

using namespace exgc;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("exgc_test_synthetic_" + name);
  fs::remove_all(p);
  return p;
}

std::vector<int> labels_with_counts(const std::vector<std::size_t>& counts) {
  std::vector<int> out;
  for (std::size_t c = 0; c < counts.size(); ++c) out.insert(out.end(), counts[c], static_cast<int>(c));
  return out;
}

LabeledGraph small_sbm(std::uint64_t seed = 1) {
  SbmParams p;
  p.nodes_per_class = 40;
  p.feature_dim = 6;
  return generate_sbm(p, seed);
}

}  // namespace

TEST_CASE("proportional counts use the largest remainder") {
  // exact shares 2.5, 1.5, 1.0: floors 2, 1, 1 and the tie on .5 goes to class 0
  CHECK(proportional_counts(labels_with_counts({5, 3, 2}), 3, 5) == std::vector<std::size_t>{3, 1, 1});
  // shares 4, 3, 3 are exact
  CHECK(proportional_counts(labels_with_counts({40, 30, 30}), 3, 10) ==
        std::vector<std::size_t>{4, 3, 3});
}

TEST_CASE("proportional counts give every class at least one node") {
  // shares 2.94, 0.03, 0.03 round to 3, 0, 0; each empty class takes one from the largest
  CHECK(proportional_counts(labels_with_counts({98, 1, 1}), 3, 3) == std::vector<std::size_t>{1, 1, 1});
  CHECK_THROWS_AS(proportional_counts(labels_with_counts({5, 5, 5}), 3, 2), ConfigError);
}

TEST_CASE("proportional counts sum to the total") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> size(1, 50);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::size_t> counts(1 + trial % 6);
    std::size_t n = 0;
    for (auto& c : counts) n += (c = size(rng));
    const std::size_t total = counts.size() + static_cast<std::size_t>(trial) % (n - counts.size() + 1);
    const auto out = proportional_counts(labels_with_counts(counts), counts.size(), total);
    std::size_t sum = 0;
    for (std::size_t c : out) {
      CHECK(c >= 1);
      sum += c;
    }
    CHECK(sum == total);
  }
}

TEST_CASE("synthetic size is floor(ratio N) capped at the train count") {
  const LabeledGraph g = small_sbm();  // 120 nodes, 36 train
  CHECK(synthetic_size(g, 0.05) == 6);
  CHECK(synthetic_size(g, 0.1) == 12);
  CHECK(synthetic_size(g, 0.5) == g.split.train.size());
}

TEST_CASE("derived seeds differ across streams and indices") {
  CHECK(derive_seed(0, 1, 0) != derive_seed(0, 2, 0));
  CHECK(derive_seed(0, 1, 0) != derive_seed(0, 1, 1));
  CHECK(derive_seed(0, 1, 0) != derive_seed(1, 1, 0));
  CHECK(derive_seed(7, 3, 9) == derive_seed(7, 3, 9));
}

TEST_CASE("config validation rejects bad values") {
  CondenseConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  SUBCASE("ratio") {
    cfg.ratio = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SUBCASE("kappa") {
    cfg.kappa = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SUBCASE("period") {
    cfg.selection_period = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SUBCASE("names") {
    CHECK_THROWS_AS(parse_mode("fast"), ConfigError);
    CHECK(parse_mode("exgc") == Mode::Exgc);
    CHECK(parse_explainer("global_mask") == ExplainerKind::GlobalMask);
  }
}

TEST_CASE("condensed directory round-trips bit-exactly") {
  const LabeledGraph g = small_sbm();
  CondenseConfig cfg;
  cfg.ratio = 0.1;
  SyntheticState s = init_synthetic(g, cfg);
  std::mt19937_64 rng(4);
  s.features = s.features + oracle::random_tensor(rng, s.size(), s.features.cols(), -1e-3, 1e-3);
  const fs::path dir = scratch("roundtrip");
  save_condensed(s, 0.5, dir);

  const SyntheticState back = load_condensed_state(dir);
  CHECK(back.features == s.features);
  CHECK(back.labels == s.labels);
  CHECK(back.phi.w1 == s.phi.w1);
  CHECK(back.phi.b1 == s.phi.b1);
  CHECK(back.phi.w2 == s.phi.w2);
  CHECK(back.phi.b2 == s.phi.b2);

  const CondensedGraph expected = condensed_from_state(s, 0.5);
  const CondensedGraph loaded = load_condensed(dir);
  CHECK(loaded.adjacency == expected.adjacency);
  CHECK(loaded.threshold == 0.5);
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(loaded.adjacency(i, i) == 1.0);
}

TEST_CASE("entries below the threshold are not stored") {
  CondensedGraph g;
  g.features = Tensor::from_rows({{1.0}, {2.0}, {3.0}});
  g.labels = {0, 1, 0};
  g.num_classes = 2;
  g.adjacency = Tensor::from_rows({{1.0, 0.7, 0.2}, {0.7, 1.0, 0.5}, {0.2, 0.5, 1.0}});
  g.threshold = 0.5;
  const fs::path dir = scratch("threshold");
  save_condensed(g, dir);
  std::ifstream in(dir / "adj.tsv");
  std::string text((std::istreambuf_iterator<char>(in)), {});
  CHECK(text == "0\t1\t0.7\n1\t2\t0.5\n");
  const CondensedGraph back = load_condensed(dir);
  CHECK(back.adjacency(0, 2) == 0.0);
  CHECK(back.adjacency(2, 0) == 0.0);
  CHECK(back.adjacency(1, 2) == 0.5);
  CHECK(back.adjacency(1, 1) == 1.0);
  CHECK(!back.phi.has_value());
}

TEST_CASE("coreset graphs keep a zero diagonal on disk") {
  CondensedGraph g;
  g.features = Tensor::from_rows({{1.0}, {2.0}});
  g.labels = {0, 1};
  g.num_classes = 2;
  g.adjacency = Tensor::from_rows({{0.0, 1.0}, {1.0, 0.0}});
  const fs::path dir = scratch("coreset");
  save_condensed(g, dir);
  CHECK(load_condensed(dir).adjacency == g.adjacency);
}

TEST_CASE("damaged condensed directories are rejected") {
  const LabeledGraph g = small_sbm();
  CondenseConfig cfg;
  cfg.ratio = 0.1;
  const fs::path dir = scratch("damaged");
  save_condensed(init_synthetic(g, cfg), 0.5, dir);
  SUBCASE("truncated feature row") {
    std::ofstream(dir / "features.tsv", std::ios::app) << "1\n";
    CHECK_THROWS_AS(load_condensed(dir), FormatError);
  }
  SUBCASE("short feature row") {
    std::ifstream in(dir / "features.tsv");
    std::string first;
    std::getline(in, first);
    std::string rest((std::istreambuf_iterator<char>(in)), {});
    in.close();
    std::ofstream(dir / "features.tsv") << first.substr(0, first.find('\t')) << "\n" << rest;
    CHECK_THROWS_WITH_AS(load_condensed(dir), doctest::Contains("features.tsv:1"), FormatError);
  }
  SUBCASE("bad edge line") {
    std::ofstream(dir / "adj.tsv", std::ios::app) << "0\t1\n";
    CHECK_THROWS_AS(load_condensed(dir), FormatError);
  }
  SUBCASE("state needs phi") {
    fs::remove(dir / "phi.json");
    CHECK_THROWS_AS(load_condensed_state(dir), FormatError);
  }
}
