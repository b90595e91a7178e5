#include "exgc/coreset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "exgc/error.hpp"
#include "exgc/synthetic.hpp"

namespace exgc {

namespace {

double squared_distance(const Tensor& x, std::size_t a, std::size_t b) {
  double s = 0.0;
  for (std::size_t j = 0; j < x.cols(); ++j) {
    const double d = x(a, j) - x(b, j);
    s += d * d;
  }
  return s;
}

std::vector<std::vector<std::size_t>> train_by_class(const LabeledGraph& g) {
  std::vector<std::vector<std::size_t>> out(g.num_classes);
  for (std::size_t i : g.split.train) out[static_cast<std::size_t>(g.labels[i])].push_back(i);
  for (auto& v : out) std::sort(v.begin(), v.end());
  return out;
}

}  // namespace

std::vector<std::size_t> CoresetResult::nodes() const {
  std::vector<std::size_t> out;
  for (const auto& c : per_class) out.insert(out.end(), c.begin(), c.end());
  return out;
}

std::vector<std::size_t> coreset_counts(const LabeledGraph& g, double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("ratio must lie in (0, 1]");
  std::vector<int> train_labels;
  for (std::size_t i : g.split.train) train_labels.push_back(g.labels[i]);
  auto counts = proportional_counts(train_labels, g.num_classes, synthetic_size(g, ratio));
  const auto pools = train_by_class(g);
  for (std::size_t c = 0; c < counts.size(); ++c) counts[c] = std::min(counts[c], pools[c].size());
  return counts;
}

CoresetResult random_select(const LabeledGraph& g, double ratio, std::uint64_t seed) {
  const auto counts = coreset_counts(g, ratio);
  auto pools = train_by_class(g);
  CoresetResult r;
  r.method = "random";
  for (std::size_t c = 0; c < pools.size(); ++c) {
    std::mt19937_64 rng(derive_seed(seed, 100, c));
    std::shuffle(pools[c].begin(), pools[c].end(), rng);
    r.per_class.emplace_back(pools[c].begin(), pools[c].begin() + static_cast<std::ptrdiff_t>(counts[c]));
  }
  return r;
}

CoresetResult herding_select(const LabeledGraph& g, double ratio) {
  const auto counts = coreset_counts(g, ratio);
  const auto pools = train_by_class(g);
  CoresetResult r;
  r.method = "herding";
  for (std::size_t c = 0; c < pools.size(); ++c) r.per_class.push_back(herding(g.features, pools[c], counts[c]));
  return r;
}

CoresetResult kcenter_select(const LabeledGraph& g, double ratio, std::uint64_t seed) {
  const auto counts = coreset_counts(g, ratio);
  const auto pools = train_by_class(g);
  CoresetResult r;
  r.method = "kcenter";
  for (std::size_t c = 0; c < pools.size(); ++c) {
    if (counts[c] == 0) {
      r.per_class.emplace_back();
      continue;
    }
    std::mt19937_64 rng(derive_seed(seed, 101, c));
    std::uniform_int_distribution<std::size_t> pick(0, pools[c].size() - 1);
    r.per_class.push_back(kcenter(g.features, pools[c], counts[c], pools[c][pick(rng)]));
  }
  return r;
}

std::vector<std::size_t> herding(const Tensor& points, const std::vector<std::size_t>& pool,
                                 std::size_t k) {
  if (k > pool.size()) throw ConfigError("herding: k exceeds the pool size");
  const std::size_t d = points.cols();
  std::vector<double> mu(d, 0.0);
  for (std::size_t i : pool)
    for (std::size_t j = 0; j < d; ++j) mu[j] += points(i, j);
  for (double& v : mu) v /= static_cast<double>(pool.size());

  std::vector<double> sum(d, 0.0);
  std::vector<char> used(pool.size(), 0);
  std::vector<std::size_t> chosen;
  for (std::size_t step = 0; step < k; ++step) {
    const double m = static_cast<double>(step + 1);
    std::size_t best = pool.size();
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < pool.size(); ++p) {
      if (used[p]) continue;
      double dist = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = mu[j] - (sum[j] + points(pool[p], j)) / m;
        dist += diff * diff;
      }
      if (best == pool.size() || dist < best_dist - 1e-12 * std::max(1.0, best_dist)) {
        best_dist = dist;
        best = p;
      }
    }
    used[best] = 1;
    chosen.push_back(pool[best]);
    for (std::size_t j = 0; j < d; ++j) sum[j] += points(pool[best], j);
  }
  return chosen;
}

std::vector<std::size_t> kcenter(const Tensor& points, const std::vector<std::size_t>& pool,
                                 std::size_t k, std::size_t first) {
  if (k > pool.size()) throw ConfigError("kcenter: k exceeds the pool size");
  if (k == 0) return {};
  if (std::find(pool.begin(), pool.end(), first) == pool.end()) {
    throw ConfigError("kcenter: start point is not in the pool");
  }
  std::vector<std::size_t> centers{first};
  std::vector<char> taken(pool.size(), 0);
  std::vector<double> nearest(pool.size());
  for (std::size_t p = 0; p < pool.size(); ++p) {
    nearest[p] = squared_distance(points, pool[p], first);
    if (pool[p] == first) taken[p] = 1;
  }
  while (centers.size() < k) {
    std::size_t far = pool.size();
    for (std::size_t p = 0; p < pool.size(); ++p)
      if (!taken[p] && (far == pool.size() || nearest[p] > nearest[far])) far = p;
    taken[far] = 1;
    centers.push_back(pool[far]);
    for (std::size_t p = 0; p < pool.size(); ++p) {
      nearest[p] = std::min(nearest[p], squared_distance(points, pool[p], pool[far]));
    }
  }
  return centers;
}

double covering_radius(const Tensor& points, const std::vector<std::size_t>& pool,
                       const std::vector<std::size_t>& centers) {
  double radius = 0.0;
  for (std::size_t i : pool) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c : centers) best = std::min(best, squared_distance(points, i, c));
    radius = std::max(radius, best);
  }
  return std::sqrt(radius);
}

LabeledGraph coreset_graph(const LabeledGraph& g, const CoresetResult& r) {
  return induced_subgraph(g, r.nodes());
}

}  // namespace exgc
