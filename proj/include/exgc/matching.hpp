#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <vector>

#include "exgc/graph.hpp"
#include "exgc/models.hpp"
#include "exgc/synthetic.hpp"

namespace exgc {

/// Gradient side of the real graph. Holds the normalized adjacency, the
/// propagated features A_hat X and one train mask per class.
class RealGraph {
 public:
  explicit RealGraph(const LabeledGraph& g);

  const LabeledGraph& graph() const { return *graph_; }
  std::size_t num_classes() const { return masks_.size(); }

  /// Per-layer gradient of the cross-entropy over train nodes of class c.
  std::vector<Tensor> gradient(const models::GcnParams& theta, std::size_t c) const;
  /// Same for every class, sharing one forward pass. Indexed [class][layer].
  std::vector<std::vector<Tensor>> gradients(const models::GcnParams& theta) const;

 private:
  const LabeledGraph* graph_;
  std::shared_ptr<const SparseMatrix> adj_;
  Tensor propagated_;
  std::vector<std::shared_ptr<const ad::LabelMask>> masks_;
};

/// Sum over layers and columns of (1 - cos). Columns that are both zero add
/// 0, columns where exactly one side is zero add 1.
double grad_match_distance(const std::vector<Tensor>& synthetic, const std::vector<Tensor>& real);

std::vector<Tensor> real_gradient(const LabeledGraph& g, const models::GcnParams& theta,
                                  std::size_t c);
std::vector<Tensor> synthetic_gradient(const SyntheticState& state, const models::GcnParams& theta,
                                       std::size_t c);

SyntheticState init_synthetic(const LabeledGraph& g, const CondenseConfig& cfg);

/// Parameter draws of one epoch and their real gradients, [draw][class][layer].
struct MatchTargets {
  std::vector<models::GcnParams> draws;
  std::vector<std::vector<std::vector<Tensor>>> real;
};
MatchTargets make_targets(const RealGraph& real, std::vector<models::GcnParams> draws);

/// Sum over classes of the gradient distance, averaged over the draws.
double matching_loss(const SyntheticState& state, const MatchTargets& targets);

/// e_x descent steps on the rows `update_rows` of X'. Every other row and phi
/// are left bit-identical; an empty row set is a no-op.
void estep(SyntheticState& state, const MatchTargets& targets,
           const std::vector<std::size_t>& update_rows, const CondenseConfig& cfg);

/// e_phi descent steps on phi with X' frozen.
void mstep(SyntheticState& state, const MatchTargets& targets, const CondenseConfig& cfg);

/// Rows to update at epoch t. For exgc this runs a selection round when due
/// and moves the chosen nodes from the candidate set to the active set.
std::vector<std::size_t> select_rows(SyntheticState& state, const CondenseConfig& cfg,
                                     std::size_t t, const models::GcnParams& theta);

/// One fresh parameter draw for the given stream index.
models::GcnParams draw_theta(const CondenseConfig& cfg, std::size_t in, std::size_t classes,
                             std::uint64_t stream, std::uint64_t index);

struct TraceRow {
  std::size_t epoch = 0;
  double loss = 0.0;
  double active_frac = 0.0;
  double seconds = 0.0;
};

struct MatchReport {
  std::vector<TraceRow> trace;
  SyntheticState state;
  std::size_t convergence_epoch = 0;  // epochs run when the stopping rule fired
  std::size_t best_epoch = 0;
  double final_loss = 0.0;
  bool stopped_by_patience = false;
};

using ProgressFn = std::function<void(const TraceRow&)>;

MatchReport condense(const LabeledGraph& g, const CondenseConfig& cfg,
                     const ProgressFn& progress = {});

void save_trace(const std::vector<TraceRow>& trace, const std::filesystem::path& file);
std::vector<TraceRow> load_trace(const std::filesystem::path& file);

}  // namespace exgc
