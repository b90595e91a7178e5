#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "exgc/models.hpp"
#include "exgc/synthetic.hpp"

namespace exgc::explain {

/// Per-node importance over the synthetic graph.
struct ImportanceScores {
  std::vector<double> p;
  ExplainerKind kind = ExplainerKind::Sa;
  std::size_t iterations = 0;
  double final_objective = 0.0;
};

/// Perceptron d -> hidden -> 1 with a sigmoid output.
struct GlobalMaskParams {
  Tensor w1, b1, w2, b2;
};

/// Softmax over nodes of the summed absolute saliency of the synthetic
/// cross-entropy. `loss_scale` multiplies the loss before differentiation.
ImportanceScores sa_scores(const SyntheticState& state, const models::GcnParams& theta,
                           double loss_scale = 1.0);

/// Feature mask p (started at `init`) trained by projected gradient descent on
/// D(y, y_p) + lambda * sum(p).
ImportanceScores local_mask_scores(const SyntheticState& state, const models::GcnParams& theta,
                                   double lambda, std::size_t steps, double lr,
                                   MaskDistance distance = MaskDistance::Mse, double init = 0.9);

/// Mask produced by a perceptron over node features, trained with Adam on
/// D(y, y_mlp) + lambda * info_constraint(p, r).
ImportanceScores global_mask_scores(const SyntheticState& state, const models::GcnParams& theta,
                                    double lambda, double r, std::size_t steps, double lr,
                                    std::uint64_t seed, MaskDistance distance = MaskDistance::Mse,
                                    std::size_t hidden = 32);

/// sum_i p_i log(p_i / r) + (1 - p_i) log((1 - p_i) / (1 - r)), 0 log 0 = 0.
double info_constraint(const std::vector<double>& p, double r);

/// Scores from a uniformly random ranking, normalized to sum to 1.
ImportanceScores random_scores(std::size_t n, std::uint64_t seed);

/// Runs the explainer configured in `cfg`.
ImportanceScores score_nodes(const SyntheticState& state, const models::GcnParams& theta,
                             const CondenseConfig& cfg, std::uint64_t seed);

/// The `k` entries of `among` with the highest score; ties go to the lower index.
std::vector<std::size_t> top_k(const std::vector<double>& p, const std::vector<std::size_t>& among,
                               std::size_t k);

/// node_index<TAB>score<TAB>rank, rank 1 is the most important node.
void save_scores(const ImportanceScores& s, const std::filesystem::path& file);

}  // namespace exgc::explain
