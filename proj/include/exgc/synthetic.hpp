#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "exgc/graph.hpp"
#include "exgc/models.hpp"
#include "exgc/tensor.hpp"

namespace exgc {

enum class Mode { GCond, MGCond, Exgc };
enum class BackboneLoop { InnerLoop, OneStep };
enum class ExplainerKind { Sa, LocalMask, GlobalMask, Random };
enum class MaskDistance { Mse, SoftmaxKl };
enum class OptimizerKind { Sgd, Adam };

std::string to_string(Mode m);
std::string to_string(BackboneLoop b);
std::string to_string(ExplainerKind e);
Mode parse_mode(const std::string& s);
BackboneLoop parse_backbone_loop(const std::string& s);
ExplainerKind parse_explainer(const std::string& s);
MaskDistance parse_mask_distance(const std::string& s);
OptimizerKind parse_optimizer(const std::string& s);

/// Full configuration of one condensation run.
struct CondenseConfig {
  double ratio = 0.05;  // N' = floor(ratio * N), capped at the train-set size
  Mode mode = Mode::GCond;
  BackboneLoop backbone_loop = BackboneLoop::OneStep;

  std::size_t blocks = 4;              // K, mgcond
  double kappa = 0.05;                 // activation fraction per selection round, exgc
  std::size_t selection_period = 50;   // epochs between selection rounds, exgc
  ExplainerKind explainer = ExplainerKind::Sa;
  bool literal_mset = false;           // train the unselected pool instead of the selected nodes

  // explainer settings
  double lambda = 0.01;        // regularization weight of the mask objectives
  double info_rate = 0.5;      // r of the information constraint
  double beta = 1.0;           // carried for documentation only, never used
  std::size_t explainer_steps = 100;
  double explainer_lr = 0.01;
  MaskDistance mask_distance = MaskDistance::Mse;

  // optimization
  OptimizerKind optimizer = OptimizerKind::Adam;
  double lr_features = 1e-2;   // eta_x
  double lr_adjgen = 1e-3;     // eta_phi
  double lr_theta = 1e-2;      // eta_theta
  std::size_t theta_steps = 5;     // tau_theta, inner-loop mode
  std::size_t feature_steps = 1;   // e_x
  std::size_t adjgen_steps = 1;    // e_phi
  std::size_t theta_draws = 1;     // fresh draws per epoch (one-step mode)
  std::size_t refresh_period = 10; // epochs between fresh persistent draws (inner-loop mode)
  std::size_t monitor_draws = 4;   // fixed draws for the loss trace; 0 uses the epoch draws

  std::size_t max_epochs = 1000;
  std::size_t patience = 4;
  double min_delta = 0.0;  // relative improvement that counts as a decrease

  std::size_t hidden = 64;          // GCN width
  std::size_t adjgen_hidden = 128;  // generator width
  bool use_bias = false;
  models::InitKind init = models::InitKind::GlorotUniform;
  double threshold = 0.5;  // delta, sparsification at save/eval time

  std::uint64_t seed = 0;

  void validate() const;
};

/// First and second moment estimates with a step count per row, so rows
/// that are frozen for a while resume with their own bias correction.
struct AdamMoments {
  Tensor m;
  Tensor v;
  std::vector<std::size_t> steps;
};

/// The condensed graph under optimization.
struct SyntheticState {
  Tensor features;          // X', N' x d
  std::vector<int> labels;  // Y', fixed
  std::size_t num_classes = 0;
  models::AdjGenParams phi;

  std::vector<std::vector<std::size_t>> blocks;  // mgcond partition
  std::vector<std::size_t> candidates;           // M, exgc
  std::vector<std::size_t> active;               // complement of M, exgc
  std::size_t epoch = 0;

  // optimizer moments; the feature moments are per row so frozen rows keep theirs
  AdamMoments feature_moments;
  std::vector<AdamMoments> phi_moments;

  std::size_t size() const { return features.rows(); }
  /// Throws Error naming the first violated invariant.
  void validate() const;
};

/// Per-class counts proportional to `train_labels` (largest remainder, ties
/// to the lower class), then topped up so every class has at least one.
std::vector<std::size_t> proportional_counts(const std::vector<int>& train_labels,
                                             std::size_t num_classes, std::size_t total);

/// Number of synthetic nodes for a graph and ratio.
std::size_t synthetic_size(const LabeledGraph& g, double ratio);

/// Logits of the GCN on the generated synthetic graph:
/// f_theta(normalize(g_phi(X')), X').
ad::Var synthetic_logits(ad::Var x, const models::AdjGenVars& phi, const models::GcnVars& theta);

/// Independent deterministic seed for a named substream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0);

// ---- condensed-graph directory ----

/// A condensed (or coreset) graph as stored on disk.
struct CondensedGraph {
  Tensor features;
  std::vector<int> labels;
  std::size_t num_classes = 0;
  Tensor adjacency;  // dense weights, thresholded; diagonal holds self-affinity
  std::optional<models::AdjGenParams> phi;
  double threshold = 0.5;
};

CondensedGraph condensed_from_state(const SyntheticState& state, double threshold);
CondensedGraph condensed_from_subgraph(const LabeledGraph& sub);

void save_condensed(const CondensedGraph& g, const std::filesystem::path& dir);
void save_condensed(const SyntheticState& state, double threshold, const std::filesystem::path& dir);
CondensedGraph load_condensed(const std::filesystem::path& dir);
/// Rebuilds the optimizable state (features, labels, phi) from a directory
/// written from a SyntheticState.
SyntheticState load_condensed_state(const std::filesystem::path& dir);

/// Bytes on disk of every regular file in `dir`.
std::uintmax_t directory_bytes(const std::filesystem::path& dir);

}  // namespace exgc
