#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "exgc/error.hpp"
#include "exgc/graph.hpp"
#include "oracles.hpp"

using namespace exgc;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("exgc_test_graph_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write(const fs::path& file, const std::string& text) { std::ofstream(file) << text; }

fs::path path_graph(const std::string& name) {
  const fs::path dir = scratch(name);
  write(dir / "meta.json", R"({"num_nodes":3,"num_features":2,"num_classes":3,"format_version":1})");
  write(dir / "edges.tsv", "0\t1\n1\t2\n");
  write(dir / "features.tsv", "0.5\t1\n-1\t2\n3\t0.25\n");
  write(dir / "labels.tsv", "0\n1\n0\n");
  write(dir / "splits.json", R"({"train":[0],"val":[1],"test":[2]})");
  return dir;
}

}  // namespace

TEST_CASE("three-node path graph loads") {
  const auto loaded = load_graph(path_graph("path"));
  CHECK(loaded.graph.num_nodes == 3);
  CHECK(loaded.graph.edges.size() == 2);
  CHECK(loaded.graph.features(2, 1) == 0.25);
  CHECK(loaded.report.duplicate_edges == 0);
}

TEST_CASE("reversed duplicate edge line is deduplicated") {
  const fs::path dir = path_graph("dup");
  write(dir / "edges.tsv", "0\t1\n1\t2\n1\t0\n2\t2\n");
  const auto loaded = load_graph(dir);
  CHECK(loaded.graph.edges.size() == 2);
  CHECK(loaded.report.duplicate_edges == 1);
  CHECK(loaded.report.self_loops == 1);
}

TEST_CASE("loader errors are distinct and name the file") {
  SUBCASE("label out of range") {
    const fs::path dir = path_graph("label");
    write(dir / "labels.tsv", "0\n5\n0\n");
    CHECK_THROWS_WITH_AS(load_graph(dir), doctest::Contains("label out of range"), FormatError);
    CHECK_THROWS_WITH_AS(load_graph(dir), doctest::Contains("labels.tsv:2"), FormatError);
  }
  SUBCASE("missing file") {
    const fs::path dir = path_graph("missing");
    fs::remove(dir / "edges.tsv");
    CHECK_THROWS_WITH_AS(load_graph(dir), doctest::Contains("missing file"), FormatError);
  }
  SUBCASE("truncated feature row") {
    const fs::path dir = path_graph("trunc");
    write(dir / "features.tsv", "0.5\t1\n-1\n3\t0.25\n");
    CHECK_THROWS_WITH_AS(load_graph(dir), doctest::Contains("dimension mismatch"), FormatError);
  }
  SUBCASE("non-finite feature") {
    const fs::path dir = path_graph("nan");
    write(dir / "features.tsv", "0.5\t1\n-1\tnan\n3\t0.25\n");
    CHECK_THROWS_WITH_AS(load_graph(dir), doctest::Contains("non-finite"), FormatError);
  }
}

TEST_CASE("normalization of tiny graphs") {
  CHECK(normalize_adjacency(Tensor(1, 1)) == Tensor::from_rows({{1.0}}));
  const Tensor two = normalize_adjacency(Tensor::from_rows({{0, 1}, {1, 0}}));
  for (double v : two.values()) CHECK(v == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(normalize_adjacency(1, {}).to_dense() == Tensor::from_rows({{1.0}}));
}

TEST_CASE("normalization rejects asymmetric and negative input") {
  CHECK_THROWS_AS(normalize_adjacency(Tensor::from_rows({{0, 1}, {0, 0}})), Error);
  CHECK_THROWS_AS(normalize_adjacency(Tensor::from_rows({{0, -1}, {-1, 0}})), Error);
}

TEST_CASE("sparse normalization matches the dense oracle") {
  std::mt19937_64 rng(5);
  std::bernoulli_distribution edge(0.4);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 6;
    Tensor a(n, n);
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (edge(rng)) {
          a(i, j) = a(j, i) = 1.0;
          edges.emplace_back(i, j);
        }
    const Tensor expected = oracle::dense_normalize(a);
    const Tensor sparse = normalize_adjacency(n, edges).to_dense();
    CHECK(oracle::relative_error(sparse, expected) < 1e-14);
    CHECK(oracle::relative_error(normalize_adjacency(a), expected) < 1e-14);
    for (std::size_t i = 0; i < n; ++i) {
      double deg = 0.0;
      for (std::size_t j = 0; j < n; ++j) deg += a(i, j);
      CHECK(sparse(i, i) == doctest::Approx(1.0 / (deg + 1.0)).epsilon(1e-14));
      for (std::size_t j = 0; j < n; ++j) CHECK(std::abs(sparse(i, j) - sparse(j, i)) < 1e-12);
    }
  }
}

TEST_CASE("differentiable normalization equals the value form") {
  std::mt19937_64 rng(9);
  Tensor a = oracle::random_tensor(rng, 5, 5, 0.0, 1.0);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < i; ++j) a(i, j) = a(j, i);
  ad::Tape t;
  CHECK(oracle::relative_error(normalize_adjacency(t.constant(a)).value(), oracle::dense_normalize(a)) <
        1e-14);
}

TEST_CASE("extreme SBM probabilities give disjoint triangles") {
  SbmParams p;
  p.num_classes = 2;
  p.nodes_per_class = 3;
  p.p_in = 1.0;
  p.p_out = 0.0;
  p.feature_dim = 2;
  p.split_fractions = {0.5, 0.0, 0.5};
  const LabeledGraph g = generate_sbm(p, 1);
  REQUIRE(g.edges.size() == 6);
  for (auto [u, v] : g.edges) CHECK(g.labels[u] == g.labels[v]);
}

TEST_CASE("SBM is deterministic per seed and saves byte-identically") {
  SbmParams p;
  p.nodes_per_class = 20;
  const LabeledGraph a = generate_sbm(p, 42);
  const LabeledGraph b = generate_sbm(p, 42);
  CHECK(a.edges == b.edges);
  CHECK(a.features == b.features);
  CHECK(a.split.train == b.split.train);
  const fs::path da = scratch("sbm_a"), db = scratch("sbm_b");
  save_graph(a, da);
  save_graph(b, db);
  for (const char* f : {"meta.json", "edges.tsv", "features.tsv", "labels.tsv", "splits.json"}) {
    std::ifstream fa(da / f), fb(db / f);
    std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
    CHECK(sa == sb);
  }
  const auto back = load_graph(da).graph;
  CHECK(back.features == a.features);
  CHECK(back.edges == a.edges);
  CHECK(back.split.test == a.split.test);
}

TEST_CASE("SBM within-class density is near p_in") {
  SbmParams p;  // 3 x 200, p_in 0.3, p_out 0.02
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const LabeledGraph g = generate_sbm(p, seed);
    std::vector<std::size_t> per_class(p.num_classes, 0);
    for (int y : g.labels) ++per_class[static_cast<std::size_t>(y)];
    for (std::size_t c : per_class) CHECK(c == p.nodes_per_class);
    std::size_t within = 0;
    for (auto [u, v] : g.edges) within += g.labels[u] == g.labels[v];
    const double pairs = p.num_classes * p.nodes_per_class * (p.nodes_per_class - 1) / 2.0;
    const double density = static_cast<double>(within) / pairs;
    CHECK(density > 0.3 * 0.8);
    CHECK(density < 0.3 * 1.2);
  }
}

TEST_CASE("SBM parameter validation") {
  SbmParams p;
  p.p_out = 0.5;
  p.p_in = 0.3;
  CHECK_THROWS_AS(generate_sbm(p, 0), ConfigError);
}

TEST_CASE("induced subgraph keeps mutual edges only") {
  SbmParams p;
  p.nodes_per_class = 10;
  const LabeledGraph g = generate_sbm(p, 3);
  const std::vector<std::size_t> nodes{0, 1, 2, 15, 25};
  const LabeledGraph s = induced_subgraph(g, nodes);
  CHECK(s.num_nodes == 5);
  CHECK(s.split.train.size() == 5);
  for (auto [u, v] : s.edges) {
    const auto key = std::minmax(nodes[u], nodes[v]);
    CHECK(std::find(g.edges.begin(), g.edges.end(), std::pair{key.first, key.second}) != g.edges.end());
  }
}
