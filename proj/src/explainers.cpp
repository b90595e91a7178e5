#include "exgc/explainers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "exgc/error.hpp"
#include "text_io.hpp"

namespace exgc::explain {

namespace {

std::shared_ptr<const ad::LabelMask> all_rows(const SyntheticState& s) {
  std::vector<std::size_t> rows(s.size());
  std::iota(rows.begin(), rows.end(), 0);
  return std::make_shared<ad::LabelMask>(ad::LabelMask{s.labels, std::move(rows)});
}

Tensor reference_logits(const SyntheticState& s, const models::GcnParams& theta) {
  ad::Tape t;
  return synthetic_logits(t.constant(s.features), models::bind(t, s.phi, false),
                          models::bind(t, theta, false))
      .value();
}

ad::Var mask_distance(ad::Var y, ad::Var yp, MaskDistance d) {
  if (d == MaskDistance::SoftmaxKl) return ad::softmax_kl(y, yp);
  const double n = static_cast<double>(y.rows() * y.cols());
  return ad::scale(ad::sum_all(ad::pow(y - yp, 2.0)), 1.0 / n);
}

void require_finite(double v, const char* what, std::size_t step) {
  if (!std::isfinite(v)) {
    throw NumericError(std::string(what) + ": objective became non-finite at step " +
                       std::to_string(step));
  }
}

}  // namespace

ImportanceScores sa_scores(const SyntheticState& state, const models::GcnParams& theta,
                           double loss_scale) {
  ad::Tape t;
  ad::Var x = t.leaf(state.features);
  ad::Var z = synthetic_logits(x, models::bind(t, state.phi, false), models::bind(t, theta, false));
  ad::Var loss = ad::scale(ad::softmax_cross_entropy(z, all_rows(state)), loss_scale);
  const Tensor g = ad::grad(loss, std::vector<ad::Var>{x})[0];

  const std::size_t n = state.size();
  std::vector<double> s(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < g.cols(); ++j) s[i] += std::abs(g(i, j));
    if (!std::isfinite(s[i])) {
      throw NumericError("saliency: non-finite gradient at node " + std::to_string(i));
    }
  }
  const double mx = *std::max_element(s.begin(), s.end());
  double total = 0.0;
  for (double& v : s) total += (v = std::exp(v - mx));
  for (double& v : s) v /= total;

  ImportanceScores out;
  out.p = std::move(s);
  out.kind = ExplainerKind::Sa;
  out.final_objective = loss.value().item();
  return out;
}

ImportanceScores local_mask_scores(const SyntheticState& state, const models::GcnParams& theta,
                                   double lambda, std::size_t steps, double lr,
                                   MaskDistance distance, double init) {
  if (lambda < 0.0) throw ConfigError("local mask: lambda must be >= 0");
  const std::size_t n = state.size();
  const Tensor y = reference_logits(state, theta);
  Tensor p(n, 1, init);
  double objective = 0.0;

  for (std::size_t step = 0; step < steps; ++step) {
    ad::Tape t;
    ad::Var pv = t.leaf(p);
    ad::Var xm = ad::scale_rows(t.constant(state.features), pv);
    ad::Var yp = synthetic_logits(xm, models::bind(t, state.phi, false), models::bind(t, theta, false));
    ad::Var obj = mask_distance(t.constant(y), yp, distance) + ad::scale(ad::sum_all(pv), lambda);
    objective = obj.value().item();
    require_finite(objective, "local mask", step);
    const Tensor g = ad::grad(obj, std::vector<ad::Var>{pv})[0];
    for (std::size_t i = 0; i < n; ++i) p(i, 0) = std::clamp(p(i, 0) - lr * g(i, 0), 0.0, 1.0);
  }

  ImportanceScores out;
  out.p.assign(p.values().begin(), p.values().end());
  out.kind = ExplainerKind::LocalMask;
  out.iterations = steps;
  out.final_objective = objective;
  return out;
}

ImportanceScores global_mask_scores(const SyntheticState& state, const models::GcnParams& theta,
                                    double lambda, double r, std::size_t steps, double lr,
                                    std::uint64_t seed, MaskDistance distance, std::size_t hidden) {
  if (!(r > 0.0 && r < 1.0)) throw ConfigError("global mask: r must lie in (0, 1)");
  if (lambda < 0.0) throw ConfigError("global mask: lambda must be >= 0");
  const std::size_t d = state.features.cols();
  const Tensor y = reference_logits(state, theta);

  std::mt19937_64 rng(seed);
  GlobalMaskParams psi;
  psi.w1 = models::sample_weight(models::InitKind::GlorotUniform, d, hidden, rng);
  psi.b1 = Tensor(1, hidden);
  psi.w2 = models::sample_weight(models::InitKind::GlorotUniform, hidden, 1, rng);
  psi.b2 = Tensor(1, 1);
  std::vector<Tensor*> params{&psi.w1, &psi.b1, &psi.w2, &psi.b2};
  std::vector<Tensor> m, v;
  for (Tensor* t : params) {
    m.emplace_back(t->rows(), t->cols());
    v.emplace_back(t->rows(), t->cols());
  }
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;

  auto mask_of = [&](ad::Tape& t, std::vector<ad::Var>& leaves) {
    leaves.clear();
    for (Tensor* p : params) leaves.push_back(t.leaf(*p));
    ad::Var x = t.constant(state.features);
    ad::Var h = ad::relu(ad::add_row_vector(ad::matmul(x, leaves[0]), leaves[1]));
    return ad::sigmoid(ad::add_row_vector(ad::matmul(h, leaves[2]), leaves[3]));
  };

  double objective = 0.0;
  for (std::size_t step = 0; step < steps; ++step) {
    ad::Tape t;
    std::vector<ad::Var> leaves;
    ad::Var p = mask_of(t, leaves);
    ad::Var xm = ad::scale_rows(t.constant(state.features), p);
    ad::Var yp = synthetic_logits(xm, models::bind(t, state.phi, false), models::bind(t, theta, false));
    ad::Var obj = mask_distance(t.constant(y), yp, distance) + ad::scale(ad::bernoulli_kl(p, r), lambda);
    objective = obj.value().item();
    require_finite(objective, "global mask", step);
    const auto g = ad::grad(obj, leaves);
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step + 1));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step + 1));
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto w = params[k]->values();
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = g[k].values()[i];
        m[k].values()[i] = b1 * m[k].values()[i] + (1.0 - b1) * gi;
        v[k].values()[i] = b2 * v[k].values()[i] + (1.0 - b2) * gi * gi;
        w[i] -= lr * (m[k].values()[i] / c1) / (std::sqrt(v[k].values()[i] / c2) + eps);
      }
    }
  }

  ad::Tape t;
  std::vector<ad::Var> leaves;
  ImportanceScores out;
  const Tensor pv = mask_of(t, leaves).value();
  out.p.assign(pv.values().begin(), pv.values().end());
  out.kind = ExplainerKind::GlobalMask;
  out.iterations = steps;
  out.final_objective = objective;
  return out;
}

double info_constraint(const std::vector<double>& p, double r) {
  if (!(r > 0.0 && r < 1.0)) throw ConfigError("information constraint: r must lie in (0, 1)");
  double total = 0.0;
  for (double pi : p) {
    if (!(pi >= 0.0 && pi <= 1.0)) throw NumericError("information constraint: score outside [0, 1]");
    if (pi > 0.0) total += pi * std::log(pi / r);
    if (pi < 1.0) total += (1.0 - pi) * std::log((1.0 - pi) / (1.0 - r));
  }
  return total;
}

ImportanceScores random_scores(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  // order[k] gets rank k; rank 0 scores highest
  const double total = static_cast<double>(n) * static_cast<double>(n + 1) / 2.0;
  ImportanceScores out;
  out.p.assign(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) out.p[order[k]] = static_cast<double>(n - k) / total;
  out.kind = ExplainerKind::Random;
  return out;
}

ImportanceScores score_nodes(const SyntheticState& state, const models::GcnParams& theta,
                             const CondenseConfig& cfg, std::uint64_t seed) {
  switch (cfg.explainer) {
    case ExplainerKind::Sa: return sa_scores(state, theta);
    case ExplainerKind::LocalMask:
      return local_mask_scores(state, theta, cfg.lambda, cfg.explainer_steps, cfg.explainer_lr,
                               cfg.mask_distance);
    case ExplainerKind::GlobalMask:
      return global_mask_scores(state, theta, cfg.lambda, cfg.info_rate, cfg.explainer_steps,
                                cfg.explainer_lr, seed, cfg.mask_distance);
    case ExplainerKind::Random: return random_scores(state.size(), seed);
  }
  throw ConfigError("unknown explainer");
}

std::vector<std::size_t> top_k(const std::vector<double>& p, const std::vector<std::size_t>& among,
                               std::size_t k) {
  std::vector<std::size_t> idx = among;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (p[a] != p[b]) return p[a] > p[b];
    return a < b;
  });
  idx.resize(std::min(k, idx.size()));
  return idx;
}

void save_scores(const ImportanceScores& s, const std::filesystem::path& file) {
  std::vector<std::size_t> all(s.p.size());
  std::iota(all.begin(), all.end(), 0);
  const auto ranked = top_k(s.p, all, all.size());
  std::vector<std::size_t> rank(s.p.size());
  for (std::size_t k = 0; k < ranked.size(); ++k) rank[ranked[k]] = k + 1;
  std::string out;
  for (std::size_t i = 0; i < s.p.size(); ++i) {
    out += std::to_string(i) + '\t' + text::format_double(s.p[i]) + '\t' + std::to_string(rank[i]) + '\n';
  }
  text::write_file(file, out);
}

}  // namespace exgc::explain
