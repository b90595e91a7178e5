#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "exgc/tape.hpp"
#include "exgc/tensor.hpp"

namespace exgc::models {

/// Two-layer GCN weights. Biases are only present when `use_bias` is set.
struct GcnParams {
  Tensor w1;  // d x h
  Tensor w2;  // h x C
  Tensor b1;  // 1 x h
  Tensor b2;  // 1 x C
  bool use_bias = false;

  std::size_t hidden() const { return w1.cols(); }
  /// Matched parameter tensors in a fixed order: w1, w2[, b1, b2].
  std::vector<Tensor> tensors() const;
};

struct SgcParams {
  Tensor w;  // d x C
  std::size_t hops = 2;
};

/// Plain two-layer perceptron classifier (no propagation).
struct MlpParams {
  Tensor w1;
  Tensor w2;
};

/// Edge-weight generator: a perceptron over concatenated feature pairs,
/// (2d) -> hidden -> 1.
struct AdjGenParams {
  Tensor w1;  // 2d x h
  Tensor b1;  // 1 x h
  Tensor w2;  // h x 1
  Tensor b2;  // 1 x 1

  std::vector<Tensor> tensors() const { return {w1, b1, w2, b2}; }
  void assign(std::vector<Tensor> t);
};

enum class InitKind { GlorotUniform, KaimingNormal };

/// The parameter-initialization distribution. Draws are deterministic per
/// (kind, seed); `stream` selects an independent substream.
struct InitDistribution {
  InitKind kind = InitKind::GlorotUniform;
  std::uint64_t seed = 0;
};

double glorot_bound(std::size_t fan_in, std::size_t fan_out);
Tensor sample_weight(InitKind kind, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);

GcnParams sample_theta(const InitDistribution& dist, std::size_t in, std::size_t hidden,
                       std::size_t classes, bool use_bias = false);
AdjGenParams sample_adjgen(const InitDistribution& dist, std::size_t feature_dim,
                           std::size_t hidden);

// ---- differentiable forms ----

struct GcnVars {
  ad::Var w1, w2, b1, b2;
  bool use_bias = false;
  std::vector<ad::Var> list() const;
};
GcnVars bind(ad::Tape& tape, const GcnParams& p, bool requires_grad);

struct AdjGenVars {
  ad::Var w1, b1, w2, b2;
  std::vector<ad::Var> list() const { return {w1, b1, w2, b2}; }
};
AdjGenVars bind(ad::Tape& tape, const AdjGenParams& p, bool requires_grad);

/// A_hat relu(A_hat X W1 [+ b1]) W2 [+ b2] with a constant sparse A_hat.
ad::Var gcn_forward(const std::shared_ptr<const SparseMatrix>& adj, ad::Var x, const GcnVars& theta);
/// Same with a dense (possibly differentiable) normalized adjacency.
ad::Var gcn_forward(ad::Var adj, ad::Var x, const GcnVars& theta);

ad::Var sgc_forward(const std::shared_ptr<const SparseMatrix>& adj, ad::Var x, ad::Var w,
                    std::size_t hops);
ad::Var mlp_forward(ad::Var x, ad::Var w1, ad::Var w2);

/// a_ij = sigmoid((m([x_i; x_j]) + m([x_j; x_i])) / 2), diagonal fixed at 1.
ad::Var adjgen_forward(ad::Var x, const AdjGenVars& phi);

// ---- value forms ----

Tensor gcn_forward(const SparseMatrix& adj, const Tensor& x, const GcnParams& theta);
Tensor sgc_forward(const SparseMatrix& adj, const Tensor& x, const SgcParams& theta);
Tensor mlp_forward(const Tensor& x, const MlpParams& theta);
Tensor adjgen_forward(const Tensor& x, const AdjGenParams& phi);

/// Zeroes entries below `threshold`.
Tensor sparsify(const Tensor& adj, double threshold);

}  // namespace exgc::models
