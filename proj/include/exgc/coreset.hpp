#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "exgc/graph.hpp"
#include "exgc/tensor.hpp"

namespace exgc {

/// Real train nodes chosen per class by a selection baseline.
struct CoresetResult {
  std::vector<std::vector<std::size_t>> per_class;
  std::string method;

  /// Selected node indices, class by class.
  std::vector<std::size_t> nodes() const;
};

/// Per-class selection sizes for a ratio: the proportional rule used for
/// synthetic graphs, capped at each class's train-node count.
std::vector<std::size_t> coreset_counts(const LabeledGraph& g, double ratio);

CoresetResult random_select(const LabeledGraph& g, double ratio, std::uint64_t seed);
CoresetResult herding_select(const LabeledGraph& g, double ratio);
CoresetResult kcenter_select(const LabeledGraph& g, double ratio, std::uint64_t seed);

/// Greedy herding over rows `pool` of `points`: each step adds the point that
/// brings the running mean closest to the pool mean. Ties go to the earlier
/// pool entry.
std::vector<std::size_t> herding(const Tensor& points, const std::vector<std::size_t>& pool,
                                 std::size_t k);

/// Farthest-point traversal starting from `first`. Ties go to the earlier
/// pool entry.
std::vector<std::size_t> kcenter(const Tensor& points, const std::vector<std::size_t>& pool,
                                 std::size_t k, std::size_t first);

/// Largest distance from a pool point to its nearest center.
double covering_radius(const Tensor& points, const std::vector<std::size_t>& pool,
                       const std::vector<std::size_t>& centers);

/// Subgraph induced by the selected nodes.
LabeledGraph coreset_graph(const LabeledGraph& g, const CoresetResult& r);

}  // namespace exgc
