#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "exgc/error.hpp"
#include "exgc/tape.hpp"

namespace exgc::ad {

namespace {

using Builder = std::function<Var(Tape&, std::span<const Var>)>;

struct Case {
  std::string name;
  std::vector<Tensor> inputs;
  Builder build;
  bool second_order = true;
};

Tensor random_tensor(std::mt19937_64& rng, std::size_t r, std::size_t c, double lo = -1.0,
                     double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(r, c);
  for (double& v : t.values()) v = u(rng);
  return t;
}

// y = sum(R .* f(inputs)), R fixed per case
double project(const Builder& f, const std::vector<Tensor>& inputs, const Tensor& r) {
  Tape tape;
  std::vector<Var> leaves;
  for (const auto& x : inputs) leaves.push_back(tape.leaf(x));
  Var out = f(tape, leaves);
  return sum_all(hadamard(out, tape.constant(r))).value().item();
}

double rel_error(const Tensor& analytic, const Tensor& numeric) {
  double diff = 0.0;
  double scale = 1.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::abs(analytic.values()[i] - numeric.values()[i]));
    scale = std::max(scale, std::abs(numeric.values()[i]));
  }
  return diff / scale;
}

// First-order: grad of the projection vs central differences.
double first_order_error(const Case& c, const Tensor& r, double h) {
  Tape tape;
  std::vector<Var> leaves;
  for (const auto& x : c.inputs) leaves.push_back(tape.leaf(x));
  Var y = sum_all(hadamard(c.build(tape, leaves), tape.constant(r)));
  const auto g = grad(y, leaves);
  double worst = 0.0;
  for (std::size_t k = 0; k < c.inputs.size(); ++k) {
    Tensor fd(c.inputs[k].rows(), c.inputs[k].cols());
    for (std::size_t i = 0; i < fd.size(); ++i) {
      auto plus = c.inputs;
      auto minus = c.inputs;
      plus[k].values()[i] += h;
      minus[k].values()[i] -= h;
      fd.values()[i] = (project(c.build, plus, r) - project(c.build, minus, r)) / (2.0 * h);
    }
    worst = std::max(worst, rel_error(g[k], fd));
  }
  return worst;
}

// Second-order: differentiate sum(R2 .* d/dx0 [sum(R .* f)]) through the
// recorded adjoint and compare with central differences of the first-order
// gradient values.
double second_order_error(const Case& c, const Tensor& r, const Tensor& r2, double h) {
  auto first = [&](const std::vector<Tensor>& inputs) {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& x : inputs) leaves.push_back(tape.leaf(x));
    Var y = sum_all(hadamard(c.build(tape, leaves), tape.constant(r)));
    const auto g = grad(y, std::span<const Var>(leaves.data(), 1));
    double s = 0.0;
    for (std::size_t i = 0; i < g[0].size(); ++i) s += g[0].values()[i] * r2.values()[i];
    return s;
  };

  Tape tape;
  std::vector<Var> leaves;
  for (const auto& x : c.inputs) leaves.push_back(tape.leaf(x));
  Var y = sum_all(hadamard(c.build(tape, leaves), tape.constant(r)));
  const auto g = grad_graph(y, std::span<const Var>(leaves.data(), 1));
  Var z = sum_all(hadamard(g[0], tape.constant(r2)));
  const auto gg = grad2(z, leaves);

  double worst = 0.0;
  for (std::size_t k = 0; k < c.inputs.size(); ++k) {
    Tensor fd(c.inputs[k].rows(), c.inputs[k].cols());
    for (std::size_t i = 0; i < fd.size(); ++i) {
      auto plus = c.inputs;
      auto minus = c.inputs;
      plus[k].values()[i] += h;
      minus[k].values()[i] -= h;
      fd.values()[i] = (first(plus) - first(minus)) / (2.0 * h);
    }
    worst = std::max(worst, rel_error(gg[k], fd));
  }
  return worst;
}

std::shared_ptr<const SparseMatrix> random_sparse(std::mt19937_64& rng, std::size_t r,
                                                  std::size_t c) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::bernoulli_distribution keep(0.4);
  std::vector<SparseMatrix::Triplet> t;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      if (keep(rng)) t.push_back({i, j, u(rng)});
  return std::make_shared<SparseMatrix>(SparseMatrix::from_triplets(r, c, std::move(t)));
}

std::vector<Case> make_cases(std::mt19937_64& rng) {
  std::vector<Case> cases;
  auto T = [&](std::size_t r, std::size_t c) { return random_tensor(rng, r, c); };
  auto positive = [&](std::size_t r, std::size_t c) { return random_tensor(rng, r, c, 0.5, 2.0); };

  cases.push_back({"matmul", {T(3, 4), T(4, 2)},
                   [](Tape&, std::span<const Var> x) { return matmul(x[0], x[1]); }});
  cases.push_back({"transpose", {T(3, 2)},
                   [](Tape&, std::span<const Var> x) { return transpose(x[0]); }});
  auto s = random_sparse(rng, 4, 3);
  cases.push_back({"sparse_dense_matmul", {T(3, 2)},
                   [s](Tape&, std::span<const Var> x) { return spmm(s, x[0]); }});
  cases.push_back({"sparse_dense_matmul_t", {T(4, 2)},
                   [s](Tape&, std::span<const Var> x) { return spmm(s, x[0], true); }});
  cases.push_back({"add", {T(2, 3), T(2, 3)},
                   [](Tape&, std::span<const Var> x) { return x[0] + x[1]; }});
  cases.push_back({"sub", {T(2, 3), T(2, 3)},
                   [](Tape&, std::span<const Var> x) { return x[0] - x[1]; }});
  cases.push_back({"scale", {T(2, 3)},
                   [](Tape&, std::span<const Var> x) { return scale(x[0], -1.7); }});
  cases.push_back({"add_scalar", {T(2, 3)},
                   [](Tape&, std::span<const Var> x) { return hadamard(add_scalar(x[0], 0.3), x[0]); }});
  cases.push_back({"mul_scalar", {T(2, 3), T(1, 1)},
                   [](Tape&, std::span<const Var> x) { return mul_scalar(x[0], x[1]); }});
  cases.push_back({"hadamard", {T(3, 3), T(3, 3)},
                   [](Tape&, std::span<const Var> x) { return hadamard(x[0], x[1]); }});
  cases.push_back({"relu", {T(3, 4), T(4, 3)},
                   [](Tape&, std::span<const Var> x) { return matmul(relu(x[0]), x[1]); }});
  cases.push_back({"relu_grad", {T(3, 3), T(3, 3)},
                   [](Tape&, std::span<const Var> x) { return relu_grad(x[0], x[1]); }});
  cases.push_back({"sigmoid", {T(3, 2)},
                   [](Tape&, std::span<const Var> x) { return sigmoid(x[0]); }});
  cases.push_back({"pow", {positive(3, 2)},
                   [](Tape&, std::span<const Var> x) { return pow(x[0], -0.5); }});
  cases.push_back({"row_sum", {T(3, 4)},
                   [](Tape&, std::span<const Var> x) { return row_sum(hadamard(x[0], x[0])); }});
  cases.push_back({"col_sum", {T(3, 4)},
                   [](Tape&, std::span<const Var> x) { return col_sum(hadamard(x[0], x[0])); }});
  cases.push_back({"sum_all", {T(3, 4)},
                   [](Tape&, std::span<const Var> x) { return sum_all(hadamard(x[0], x[0])); }});
  cases.push_back({"broadcast_cols", {T(3, 1)},
                   [](Tape&, std::span<const Var> x) {
                     Var b = broadcast_cols(x[0], 4);
                     return hadamard(b, b);
                   }});
  cases.push_back({"broadcast_rows", {T(1, 3)},
                   [](Tape&, std::span<const Var> x) {
                     Var b = broadcast_rows(x[0], 2);
                     return hadamard(b, b);
                   }});
  cases.push_back({"broadcast_scalar", {T(1, 1)},
                   [](Tape&, std::span<const Var> x) {
                     Var b = broadcast_scalar(x[0], 2, 3);
                     return hadamard(b, b);
                   }});
  cases.push_back({"add_row_vector", {T(3, 2), T(1, 2)},
                   [](Tape&, std::span<const Var> x) {
                     Var b = add_row_vector(x[0], x[1]);
                     return hadamard(b, b);
                   }});
  cases.push_back({"scale_rows", {T(3, 2), T(3, 1)},
                   [](Tape&, std::span<const Var> x) { return scale_rows(x[0], x[1]); }});
  cases.push_back({"slice_rows", {T(4, 2)},
                   [](Tape&, std::span<const Var> x) {
                     Var b = slice_rows(x[0], 1, 3);
                     return hadamard(b, b);
                   }});
  cases.push_back({"embed_rows", {T(2, 2)},
                   [](Tape&, std::span<const Var> x) {
                     Var b = embed_rows(x[0], 1, 4);
                     return hadamard(b, b);
                   }});
  cases.push_back({"concat_rows", {T(2, 3), T(1, 3)},
                   [](Tape&, std::span<const Var> x) {
                     Var b = concat_rows(x[0], x[1]);
                     return hadamard(b, b);
                   }});
  cases.push_back({"reshape", {T(2, 3)},
                   [](Tape&, std::span<const Var> x) {
                     Var b = reshape(x[0], 3, 2);
                     return hadamard(b, b);
                   }});

  auto mask = std::make_shared<LabelMask>();
  mask->labels = {0, 2, 1, 2};
  mask->rows = {0, 1, 3};
  std::shared_ptr<const LabelMask> cmask = mask;
  cases.push_back({"softmax_cross_entropy", {T(4, 3)},
                   [cmask](Tape&, std::span<const Var> x) {
                     return softmax_cross_entropy(x[0], cmask);
                   }});
  cases.push_back({"cross_entropy_grad", {T(4, 3)},
                   [cmask](Tape&, std::span<const Var> x) {
                     return cross_entropy_grad(x[0], cmask);
                   },
                   false});
  cases.push_back({"cosine_per_column", {T(4, 3), T(4, 3)},
                   [](Tape&, std::span<const Var> x) { return cosine_sum(x[0], x[1]); }, false});
  cases.push_back({"bernoulli_kl", {random_tensor(rng, 5, 1, 0.05, 0.95)},
                   [](Tape&, std::span<const Var> x) { return bernoulli_kl(x[0], 0.3); }, false});
  cases.push_back({"softmax_kl", {T(3, 4), T(3, 4)},
                   [](Tape&, std::span<const Var> x) { return softmax_kl(x[0], x[1]); }, false});
  return cases;
}

}  // namespace

std::vector<SelfCheckResult> selfcheck(std::uint64_t seed, double tolerance) {
  std::mt19937_64 rng(seed);
  std::vector<SelfCheckResult> results;
  constexpr double h = 1e-6;
  for (const Case& c : make_cases(rng)) {
    Tape probe;
    std::vector<Var> leaves;
    for (const auto& x : c.inputs) leaves.push_back(probe.leaf(x));
    const Var out = c.build(probe, leaves);
    const Tensor r = random_tensor(rng, out.rows(), out.cols());
    const double e1 = first_order_error(c, r, h);
    results.push_back({c.name, e1, e1 < tolerance});
    if (c.second_order) {
      const Tensor r2 = random_tensor(rng, c.inputs[0].rows(), c.inputs[0].cols());
      const double e2 = second_order_error(c, r, r2, 1e-5);
      results.push_back({c.name + " (second order)", e2, e2 < 100.0 * tolerance});
    }
  }
  return results;
}

}  // namespace exgc::ad
