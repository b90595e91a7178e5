#include "exgc/matching.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "exgc/error.hpp"
#include "exgc/explainers.hpp"
#include "text_io.hpp"

namespace exgc {

namespace {

enum Stream : std::uint64_t {
  kInitFeatures = 1,
  kInitBlocks = 2,
  kInitPhi = 3,
  kEpochDraw = 4,
  kMonitorDraw = 5,
  kExplainer = 6,
  kPersistentDraw = 7,
};

std::vector<std::shared_ptr<const ad::LabelMask>> class_masks(const std::vector<int>& labels,
                                                              const std::vector<std::size_t>& rows,
                                                              std::size_t num_classes) {
  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t r : rows) by_class[static_cast<std::size_t>(labels[r])].push_back(r);
  std::vector<std::shared_ptr<const ad::LabelMask>> masks;
  for (auto& rs : by_class) {
    masks.push_back(std::make_shared<ad::LabelMask>(ad::LabelMask{labels, std::move(rs)}));
  }
  return masks;
}

std::vector<std::shared_ptr<const ad::LabelMask>> synthetic_masks(const SyntheticState& s) {
  std::vector<std::size_t> all(s.size());
  std::iota(all.begin(), all.end(), 0);
  return class_masks(s.labels, all, s.num_classes);
}

/// Matching objective with X' and phi bound to `x` and `phi` on one tape.
/// `epoch` is only used for diagnostics.
ad::Var objective(ad::Var x, const models::AdjGenVars& phi, const SyntheticState& s,
                  const MatchTargets& targets, std::size_t epoch) {
  ad::Tape& tape = *x.tape();
  const auto masks = synthetic_masks(s);
  ad::Var adj = normalize_adjacency(models::adjgen_forward(x, phi));
  ad::Var total;
  for (std::size_t k = 0; k < targets.draws.size(); ++k) {
    const models::GcnVars theta = models::bind(tape, targets.draws[k], true);
    const auto leaves = theta.list();
    ad::Var z = models::gcn_forward(adj, x, theta);
    for (std::size_t c = 0; c < s.num_classes; ++c) {
      const auto gs = ad::grad_graph(ad::softmax_cross_entropy(z, masks[c]), leaves);
      const auto& gr = targets.real[k][c];
      for (std::size_t l = 0; l < gs.size(); ++l) {
        ad::Var term = ad::add_scalar(ad::scale(ad::cosine_sum(gs[l], tape.constant(gr[l])), -1.0),
                                      static_cast<double>(gr[l].cols()));
        if (!std::isfinite(term.value().item())) {
          throw NumericError("matching loss became non-finite at epoch " + std::to_string(epoch) +
                             ", class " + std::to_string(c));
        }
        total = total.valid() ? total + term : term;
      }
    }
  }
  return ad::scale(total, 1.0 / static_cast<double>(targets.draws.size()));
}

void descend(Tensor& w, const Tensor& g, AdamMoments& mom, const std::vector<std::size_t>& rows,
             const CondenseConfig& cfg, double lr) {
  if (cfg.optimizer == OptimizerKind::Sgd) {
    for (std::size_t r : rows) {
      auto wr = w.row(r);
      auto gr = g.row(r);
      for (std::size_t j = 0; j < wr.size(); ++j) wr[j] -= lr * gr[j];
    }
    return;
  }
  if (mom.m.rows() != w.rows() || mom.m.cols() != w.cols()) {
    mom.m = Tensor(w.rows(), w.cols());
    mom.v = Tensor(w.rows(), w.cols());
    mom.steps.assign(w.rows(), 0);
  }
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (std::size_t r : rows) {
    const double step = static_cast<double>(++mom.steps[r]);
    const double c1 = 1.0 - std::pow(b1, step);
    const double c2 = 1.0 - std::pow(b2, step);
    for (std::size_t j = 0; j < w.cols(); ++j) {
      const double gj = g(r, j);
      double& m = mom.m(r, j);
      double& v = mom.v(r, j);
      m = b1 * m + (1.0 - b1) * gj;
      v = b2 * v + (1.0 - b2) * gj * gj;
      w(r, j) -= lr * (m / c1) / (std::sqrt(v / c2) + eps);
    }
  }
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> r(n);
  std::iota(r.begin(), r.end(), 0);
  return r;
}

void check_gradient(const Tensor& g, const char* what, std::size_t epoch) {
  if (!g.all_finite()) {
    throw NumericError(std::string(what) + " gradient became non-finite at epoch " +
                       std::to_string(epoch));
  }
}

/// tau_theta plain descent steps of the synthetic cross-entropy on theta.
void train_theta(models::GcnParams& theta, const SyntheticState& s, const CondenseConfig& cfg) {
  const auto mask = std::make_shared<ad::LabelMask>(ad::LabelMask{s.labels, all_rows(s.size())});
  for (std::size_t step = 0; step < cfg.theta_steps; ++step) {
    ad::Tape t;
    const models::GcnVars v = models::bind(t, theta, true);
    ad::Var z = synthetic_logits(t.constant(s.features), models::bind(t, s.phi, false), v);
    const auto g = ad::grad(ad::softmax_cross_entropy(z, mask), v.list());
    theta.w1 = theta.w1 - cfg.lr_theta * g[0];
    theta.w2 = theta.w2 - cfg.lr_theta * g[1];
    if (theta.use_bias) {
      theta.b1 = theta.b1 - cfg.lr_theta * g[2];
      theta.b2 = theta.b2 - cfg.lr_theta * g[3];
    }
  }
}

}  // namespace

// ---- real graph ----

RealGraph::RealGraph(const LabeledGraph& g) : graph_(&g) {
  adj_ = std::make_shared<SparseMatrix>(normalize_adjacency(g));
  propagated_ = adj_->multiply(g.features);
  masks_ = class_masks(g.labels, g.split.train, g.num_classes);
}

std::vector<std::vector<Tensor>> RealGraph::gradients(const models::GcnParams& theta) const {
  ad::Tape t;
  const models::GcnVars v = models::bind(t, theta, true);
  ad::Var h = ad::matmul(t.constant(propagated_), v.w1);
  if (v.use_bias) h = ad::add_row_vector(h, v.b1);
  ad::Var z = ad::spmm(adj_, ad::matmul(ad::relu(h), v.w2));
  if (v.use_bias) z = ad::add_row_vector(z, v.b2);
  std::vector<std::vector<Tensor>> out;
  for (std::size_t c = 0; c < masks_.size(); ++c) {
    if (masks_[c]->rows.empty()) {
      throw ConfigError("class " + std::to_string(c) + " has no train nodes");
    }
    out.push_back(ad::grad(ad::softmax_cross_entropy(z, masks_[c]), v.list()));
  }
  return out;
}

std::vector<Tensor> RealGraph::gradient(const models::GcnParams& theta, std::size_t c) const {
  if (c >= masks_.size()) throw ConfigError("class index out of range");
  if (masks_[c]->rows.empty()) throw ConfigError("class " + std::to_string(c) + " has no train nodes");
  ad::Tape t;
  const models::GcnVars v = models::bind(t, theta, true);
  ad::Var h = ad::matmul(t.constant(propagated_), v.w1);
  if (v.use_bias) h = ad::add_row_vector(h, v.b1);
  ad::Var z = ad::spmm(adj_, ad::matmul(ad::relu(h), v.w2));
  if (v.use_bias) z = ad::add_row_vector(z, v.b2);
  return ad::grad(ad::softmax_cross_entropy(z, masks_[c]), v.list());
}

double grad_match_distance(const std::vector<Tensor>& synthetic, const std::vector<Tensor>& real) {
  if (synthetic.size() != real.size()) throw ShapeError("gradient distance: layer count differs");
  ad::Tape t;
  double total = 0.0;
  for (std::size_t l = 0; l < real.size(); ++l) {
    const double cos = ad::cosine_sum(t.constant(synthetic[l]), t.constant(real[l])).value().item();
    total += static_cast<double>(real[l].cols()) - cos;
  }
  return total;
}

std::vector<Tensor> real_gradient(const LabeledGraph& g, const models::GcnParams& theta,
                                  std::size_t c) {
  return RealGraph(g).gradient(theta, c);
}

std::vector<Tensor> synthetic_gradient(const SyntheticState& state, const models::GcnParams& theta,
                                       std::size_t c) {
  if (c >= state.num_classes) throw ConfigError("class index out of range");
  const auto masks = synthetic_masks(state);
  if (masks[c]->rows.empty()) throw ConfigError("class " + std::to_string(c) + " has no synthetic nodes");
  ad::Tape t;
  const models::GcnVars v = models::bind(t, theta, true);
  ad::Var z = synthetic_logits(t.constant(state.features), models::bind(t, state.phi, false), v);
  return ad::grad(ad::softmax_cross_entropy(z, masks[c]), v.list());
}

// ---- state ----

SyntheticState init_synthetic(const LabeledGraph& g, const CondenseConfig& cfg) {
  cfg.validate();
  g.validate();
  const std::size_t n = synthetic_size(g, cfg.ratio);
  if (n < g.num_classes) {
    throw ConfigError("ratio " + text::format_double(cfg.ratio) + " gives " + std::to_string(n) +
                      " synthetic nodes, fewer than the " + std::to_string(g.num_classes) +
                      " classes");
  }
  std::vector<int> train_labels;
  std::vector<std::vector<std::size_t>> train_by_class(g.num_classes);
  for (std::size_t i : g.split.train) {
    train_labels.push_back(g.labels[i]);
    train_by_class[static_cast<std::size_t>(g.labels[i])].push_back(i);
  }
  const auto counts = proportional_counts(train_labels, g.num_classes, n);

  SyntheticState s;
  s.num_classes = g.num_classes;
  s.features = Tensor(n, g.num_features);
  std::mt19937_64 rng(derive_seed(cfg.seed, kInitFeatures));
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.num_classes; ++c) {
    auto pool = train_by_class[c];
    if (pool.empty() && counts[c] > 0) {
      throw ConfigError("class " + std::to_string(c) + " has no train nodes to initialize from");
    }
    std::shuffle(pool.begin(), pool.end(), rng);
    for (std::size_t k = 0; k < counts[c]; ++k, ++row) {
      const std::size_t src = pool[k % pool.size()];
      std::copy(g.features.row(src).begin(), g.features.row(src).end(), s.features.row(row).begin());
      s.labels.push_back(static_cast<int>(c));
    }
  }

  s.phi = models::sample_adjgen({cfg.init, derive_seed(cfg.seed, kInitPhi)}, g.num_features,
                                cfg.adjgen_hidden);

  if (cfg.mode == Mode::MGCond) {
    if (cfg.blocks > n) {
      throw ConfigError("block count K=" + std::to_string(cfg.blocks) + " exceeds the " +
                        std::to_string(n) + " synthetic nodes");
    }
    auto perm = all_rows(n);
    std::mt19937_64 brng(derive_seed(cfg.seed, kInitBlocks));
    std::shuffle(perm.begin(), perm.end(), brng);
    for (std::size_t k = 0; k < cfg.blocks; ++k) {
      const std::size_t lo = k * n / cfg.blocks, hi = (k + 1) * n / cfg.blocks;
      s.blocks.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(lo),
                            perm.begin() + static_cast<std::ptrdiff_t>(hi));
    }
  }
  if (cfg.mode == Mode::Exgc) s.candidates = all_rows(n);
  return s;
}

models::GcnParams draw_theta(const CondenseConfig& cfg, std::size_t in, std::size_t classes,
                             std::uint64_t stream, std::uint64_t index) {
  return models::sample_theta({cfg.init, derive_seed(cfg.seed, stream, index)}, in, cfg.hidden,
                              classes, cfg.use_bias);
}

MatchTargets make_targets(const RealGraph& real, std::vector<models::GcnParams> draws) {
  MatchTargets t;
  for (const auto& d : draws) t.real.push_back(real.gradients(d));
  t.draws = std::move(draws);
  return t;
}

double matching_loss(const SyntheticState& state, const MatchTargets& targets) {
  ad::Tape t;
  return objective(t.constant(state.features), models::bind(t, state.phi, false), state, targets,
                   state.epoch)
      .value()
      .item();
}

void estep(SyntheticState& state, const MatchTargets& targets,
           const std::vector<std::size_t>& update_rows, const CondenseConfig& cfg) {
  if (update_rows.empty()) return;
  for (std::size_t r : update_rows) {
    if (r >= state.size()) throw ConfigError("estep: row index out of range");
  }
  for (std::size_t step = 0; step < cfg.feature_steps; ++step) {
    ad::Tape t;
    ad::Var x = t.leaf(state.features);
    ad::Var loss = objective(x, models::bind(t, state.phi, false), state, targets, state.epoch);
    const Tensor g = ad::grad2(loss, std::vector<ad::Var>{x})[0];
    check_gradient(g, "feature", state.epoch);
    descend(state.features, g, state.feature_moments, update_rows, cfg, cfg.lr_features);
  }
}

void mstep(SyntheticState& state, const MatchTargets& targets, const CondenseConfig& cfg) {
  for (std::size_t step = 0; step < cfg.adjgen_steps; ++step) {
    ad::Tape t;
    const models::AdjGenVars phi = models::bind(t, state.phi, true);
    ad::Var loss = objective(t.constant(state.features), phi, state, targets, state.epoch);
    const auto g = ad::grad2(loss, phi.list());
    auto params = state.phi.tensors();
    if (state.phi_moments.size() != params.size()) state.phi_moments.assign(params.size(), {});
    for (std::size_t k = 0; k < params.size(); ++k) {
      check_gradient(g[k], "generator", state.epoch);
      descend(params[k], g[k], state.phi_moments[k], all_rows(params[k].rows()), cfg, cfg.lr_adjgen);
    }
    state.phi.assign(std::move(params));
  }
}

std::vector<std::size_t> select_rows(SyntheticState& state, const CondenseConfig& cfg,
                                     std::size_t t, const models::GcnParams& theta) {
  switch (cfg.mode) {
    case Mode::GCond: return all_rows(state.size());
    case Mode::MGCond:
      if (state.blocks.empty()) throw ConfigError("mgcond state has no blocks");
      return state.blocks[t % state.blocks.size()];
    case Mode::Exgc: break;
  }
  if (t % cfg.selection_period == 0 && !state.candidates.empty()) {
    const auto scores = explain::score_nodes(state, theta, cfg, derive_seed(cfg.seed, kExplainer, t));
    const auto floor_k = static_cast<std::size_t>(
        std::floor(cfg.kappa * static_cast<double>(state.size())));
    const auto chosen = explain::top_k(scores.p, state.candidates, std::max<std::size_t>(1, floor_k));
    std::vector<char> picked(state.size(), 0);
    for (std::size_t i : chosen) picked[i] = 1;
    std::vector<std::size_t> rest;
    for (std::size_t i : state.candidates) (picked[i] ? state.active : rest).push_back(i);
    state.candidates = std::move(rest);
    std::sort(state.active.begin(), state.active.end());
  }
  return cfg.literal_mset ? state.candidates : state.active;
}

MatchReport condense(const LabeledGraph& g, const CondenseConfig& cfg, const ProgressFn& progress) {
  const auto start = std::chrono::steady_clock::now();
  MatchReport report;
  SyntheticState state = init_synthetic(g, cfg);
  const RealGraph real(g);
  const std::size_t d = g.num_features, classes = g.num_classes;

  MatchTargets monitor;
  if (cfg.monitor_draws > 0) {
    std::vector<models::GcnParams> draws;
    for (std::size_t k = 0; k < cfg.monitor_draws; ++k) draws.push_back(draw_theta(cfg, d, classes, kMonitorDraw, k));
    monitor = make_targets(real, std::move(draws));
  }

  models::GcnParams persistent;
  double best = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  for (std::size_t t = 0; t < cfg.max_epochs; ++t) {
    state.epoch = t;
    std::vector<models::GcnParams> draws;
    if (cfg.backbone_loop == BackboneLoop::OneStep) {
      for (std::size_t k = 0; k < cfg.theta_draws; ++k) {
        draws.push_back(draw_theta(cfg, d, classes, kEpochDraw, t * cfg.theta_draws + k));
      }
    } else {
      if (t % cfg.refresh_period == 0) {
        persistent = draw_theta(cfg, d, classes, kPersistentDraw, t / cfg.refresh_period);
      }
      draws.push_back(persistent);
    }
    const MatchTargets targets = make_targets(real, std::move(draws));

    const auto rows = select_rows(state, cfg, t, targets.draws.front());
    estep(state, targets, rows, cfg);
    mstep(state, targets, cfg);
    if (cfg.backbone_loop == BackboneLoop::InnerLoop) train_theta(persistent, state, cfg);

    const double loss = matching_loss(state, cfg.monitor_draws > 0 ? monitor : targets);
    if (!std::isfinite(loss)) {
      throw NumericError("matching loss became non-finite at epoch " + std::to_string(t));
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    TraceRow row{t, loss, static_cast<double>(rows.size()) / static_cast<double>(state.size()), seconds};
    report.trace.push_back(row);
    if (progress) progress(row);

    report.convergence_epoch = t + 1;
    report.final_loss = loss;
    if (loss < best - cfg.min_delta * std::abs(best) || !std::isfinite(best)) {
      best = loss;
      report.best_epoch = t;
      since_best = 0;
    } else if (++since_best >= cfg.patience && cfg.patience > 0) {
      report.stopped_by_patience = true;
      break;
    }
  }
  state.epoch = report.convergence_epoch;
  state.validate();
  report.state = std::move(state);
  return report;
}

void save_trace(const std::vector<TraceRow>& trace, const std::filesystem::path& file) {
  std::string out = "epoch,loss,active_frac,seconds\n";
  for (const auto& r : trace) {
    out += std::to_string(r.epoch) + ',' + text::format_double(r.loss) + ',' +
           text::format_double(r.active_frac) + ',' + text::format_double(r.seconds) + '\n';
  }
  text::write_file(file, out);
}

std::vector<TraceRow> load_trace(const std::filesystem::path& file) {
  const auto lines = text::read_lines(file);
  if (lines.empty() || lines[0] != "epoch,loss,active_frac,seconds") {
    throw FormatError(file.filename().string() + ": missing trace header");
  }
  std::vector<TraceRow> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    std::vector<std::string_view> f;
    std::string_view line = lines[i];
    std::size_t start = 0;
    for (std::size_t pos; (pos = line.find(',', start)) != std::string_view::npos; start = pos + 1) {
      f.push_back(line.substr(start, pos - start));
    }
    f.push_back(line.substr(start));
    if (f.size() != 4) throw FormatError(text::location(file, i + 1) + ": expected 4 columns");
    out.push_back({static_cast<std::size_t>(text::parse_int(f[0], file, i + 1)),
                   text::parse_double(f[1], file, i + 1), text::parse_double(f[2], file, i + 1),
                   text::parse_double(f[3], file, i + 1)});
  }
  return out;
}

}  // namespace exgc
