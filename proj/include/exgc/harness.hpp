#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "exgc/graph.hpp"
#include "exgc/models.hpp"
#include "exgc/synthetic.hpp"

namespace exgc {

enum class Arch { Gcn, Sgc, Mlp };
enum class EvalMode { WithStructure, FeaturesOnly };

std::string to_string(Arch a);
std::string to_string(EvalMode m);
Arch parse_arch(const std::string& s);

struct TrainHyper {
  std::size_t epochs = 300;
  double lr = 0.01;
  double weight_decay = 5e-4;
  std::size_t hidden = 64;
  std::size_t sgc_hops = 2;
};

/// Graph a classifier is fitted on: propagation matrix, features, labels
/// and the rows that carry a training signal.
struct TrainGraph {
  std::shared_ptr<const SparseMatrix> adj;
  Tensor features;
  std::vector<int> labels;
  std::vector<std::size_t> rows;
  std::size_t num_classes = 0;
};

TrainGraph train_graph(const LabeledGraph& g);
TrainGraph train_graph(const CondensedGraph& g, EvalMode mode);

struct Classifier {
  Arch arch = Arch::Gcn;
  models::GcnParams gcn;
  models::SgcParams sgc;
  models::MlpParams mlp;

  Tensor logits(const SparseMatrix& adj, const Tensor& x) const;
};

struct TrainResult {
  Classifier model;
  std::vector<double> loss_trace;
  std::size_t best_epoch = 0;
};

/// Full-batch Adam on the masked cross-entropy. When `validation` is given
/// the parameters with the best validation accuracy are returned.
TrainResult train_classifier(const TrainGraph& g, Arch arch, const TrainHyper& hyper,
                             std::uint64_t seed, const TrainGraph* validation = nullptr);

double accuracy(const Tensor& logits, const std::vector<int>& labels,
                const std::vector<std::size_t>& rows);

struct EvalReport {
  std::vector<double> accuracies;
  double mean = 0.0;
  double stddev = 0.0;
  double train_seconds = 0.0;
  std::uintmax_t bytes = 0;
  Arch arch = Arch::Gcn;
  EvalMode mode = EvalMode::WithStructure;
  std::vector<std::string> warnings;
};

/// Trains on the condensed graph, tests on the real test nodes propagating
/// over the full real graph. Repeat k uses seed derive_seed(seed, k).
EvalReport evaluate_condensed(const CondensedGraph& condensed, const LabeledGraph& real, Arch arch,
                              std::size_t repeats, EvalMode mode, const TrainHyper& hyper,
                              std::uint64_t seed);
EvalReport evaluate_condensed(const std::filesystem::path& dir, const LabeledGraph& real, Arch arch,
                              std::size_t repeats, EvalMode mode, const TrainHyper& hyper,
                              std::uint64_t seed);

/// Reference run: the same classifier trained on the real train split.
EvalReport evaluate_full(const LabeledGraph& real, Arch arch, std::size_t repeats,
                         const TrainHyper& hyper, std::uint64_t seed);

std::vector<EvalReport> transfer_eval(const CondensedGraph& condensed, const LabeledGraph& real,
                                      const std::vector<Arch>& archs, std::size_t repeats,
                                      const TrainHyper& hyper, std::uint64_t seed);

std::string to_json(const EvalReport& r);

// ---- benchmark grid ----

struct BenchmarkCell {
  std::string dataset;  // dataset directory
  std::string method;   // gcond | mgcond | exgc | random | herding | kcenter
  CondenseConfig config;
  Arch arch = Arch::Gcn;
  EvalMode mode = EvalMode::WithStructure;
  std::size_t repeats = 3;
};

struct BenchmarkRow {
  std::string dataset;
  std::string method;
  double ratio = 0.0;
  Arch arch = Arch::Gcn;
  EvalMode mode = EvalMode::WithStructure;
  EvalReport eval;
  std::size_t epochs = 0;
  double seconds = 0.0;  // condensation wall time
  std::uintmax_t bytes = 0;
  std::optional<double> speedup;  // gcond seconds / this row's seconds
};

/// Reads a grid file: {"defaults": {...}, "cells": [{...}, ...]}.
std::vector<BenchmarkCell> load_grid(const std::filesystem::path& file);

/// Runs every cell (up to `jobs` at once) and writes report.csv and
/// report.json into `out`. Rows come back in grid order.
std::vector<BenchmarkRow> run_benchmark(const std::vector<BenchmarkCell>& cells,
                                        const std::filesystem::path& out, std::size_t jobs = 1);

void write_report(const std::vector<BenchmarkRow>& rows, const std::filesystem::path& out);

/// Applies JSON fields onto a config; unknown keys raise ConfigError.
void apply_config_json(CondenseConfig& cfg, const std::string& json_text);

}  // namespace exgc
