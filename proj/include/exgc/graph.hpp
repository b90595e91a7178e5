#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <utility>
#include <vector>

#include "exgc/tape.hpp"
#include "exgc/tensor.hpp"

namespace exgc {

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Undirected node-labeled graph. Edges are stored once with u < v and never
/// include self-loops; those are added during normalization.
struct LabeledGraph {
  std::size_t num_nodes = 0;
  std::size_t num_features = 0;
  std::size_t num_classes = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  Tensor features;  // num_nodes x num_features
  std::vector<int> labels;
  Split split;

  /// Throws ConfigError naming the first violated invariant.
  void validate() const;
};

struct LoadReport {
  std::size_t duplicate_edges = 0;
  std::size_t self_loops = 0;
};

struct LoadedGraph {
  LabeledGraph graph;
  LoadReport report;
};

/// Reads a dataset directory (meta.json, edges.tsv, features.tsv, labels.tsv,
/// splits.json). Errors are FormatError with file and line in the message.
LoadedGraph load_graph(const std::filesystem::path& dir);
void save_graph(const LabeledGraph& g, const std::filesystem::path& dir);

/// D^{-1/2} (A + I) D^{-1/2} with D the degree matrix of A + I.
SparseMatrix normalize_adjacency(const LabeledGraph& g);
SparseMatrix normalize_adjacency(std::size_t num_nodes,
                                 const std::vector<std::pair<std::size_t, std::size_t>>& edges);
/// Dense variant for weighted synthetic adjacencies; rejects asymmetric or
/// negative input.
Tensor normalize_adjacency(const Tensor& dense);
/// Differentiable dense variant.
ad::Var normalize_adjacency(ad::Var dense);

/// Sparse normalized adjacency of a thresholded dense weight matrix.
SparseMatrix normalize_weighted(const Tensor& dense);

struct SbmParams {
  std::size_t nodes_per_class = 200;
  std::size_t num_classes = 3;
  double p_in = 0.3;
  double p_out = 0.02;
  std::size_t feature_dim = 16;
  double class_mean_separation = 1.0;
  double feature_noise = 1.0;
  std::array<double, 3> split_fractions{0.3, 0.2, 0.5};

  void validate() const;
};

/// Planted-partition graph. Class c has mean separation * u_c for a random
/// orthonormal set {u_c}, plus isotropic Gaussian noise. Split is stratified.
LabeledGraph generate_sbm(const SbmParams& params, std::uint64_t seed);

/// Subgraph induced by `nodes` (in the given order). Every induced node goes
/// into the train split.
LabeledGraph induced_subgraph(const LabeledGraph& g, const std::vector<std::size_t>& nodes);

}  // namespace exgc
