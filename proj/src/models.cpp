#include "exgc/models.hpp"

#include <cmath>

#include "exgc/error.hpp"

namespace exgc::models {

namespace {

std::shared_ptr<const SparseMatrix> const_sparse(const SparseMatrix& s) {
  // non-owning alias: the value forms keep `s` alive for the call
  return {std::shared_ptr<const SparseMatrix>{}, &s};
}

// Row (i, j) of the n^2 pair list selects node i (left) or node j (right).
std::shared_ptr<const SparseMatrix> pair_selector(std::size_t n, bool right) {
  std::vector<SparseMatrix::Triplet> t;
  t.reserve(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) t.push_back({i * n + j, right ? j : i, 1.0});
  return std::make_shared<SparseMatrix>(SparseMatrix::from_triplets(n * n, n, std::move(t)));
}

}  // namespace

std::vector<Tensor> GcnParams::tensors() const {
  if (use_bias) return {w1, w2, b1, b2};
  return {w1, w2};
}

void AdjGenParams::assign(std::vector<Tensor> t) {
  if (t.size() != 4) throw ShapeError("AdjGenParams::assign expects 4 tensors");
  w1 = std::move(t[0]);
  b1 = std::move(t[1]);
  w2 = std::move(t[2]);
  b2 = std::move(t[3]);
}

double glorot_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

Tensor sample_weight(InitKind kind, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  Tensor w(fan_in, fan_out);
  if (kind == InitKind::GlorotUniform) {
    const double bound = glorot_bound(fan_in, fan_out);
    std::uniform_real_distribution<double> u(-bound, bound);
    for (double& v : w.values()) v = u(rng);
  } else {
    std::normal_distribution<double> n(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    for (double& v : w.values()) v = n(rng);
  }
  return w;
}

GcnParams sample_theta(const InitDistribution& dist, std::size_t in, std::size_t hidden,
                       std::size_t classes, bool use_bias) {
  std::mt19937_64 rng(dist.seed);
  GcnParams p;
  p.w1 = sample_weight(dist.kind, in, hidden, rng);
  p.w2 = sample_weight(dist.kind, hidden, classes, rng);
  p.use_bias = use_bias;
  if (use_bias) {
    p.b1 = Tensor(1, hidden);
    p.b2 = Tensor(1, classes);
  }
  return p;
}

AdjGenParams sample_adjgen(const InitDistribution& dist, std::size_t feature_dim,
                           std::size_t hidden) {
  std::mt19937_64 rng(dist.seed);
  AdjGenParams p;
  p.w1 = sample_weight(dist.kind, 2 * feature_dim, hidden, rng);
  p.b1 = Tensor(1, hidden);
  p.w2 = sample_weight(dist.kind, hidden, 1, rng);
  p.b2 = Tensor(1, 1);
  return p;
}

std::vector<ad::Var> GcnVars::list() const {
  if (use_bias) return {w1, w2, b1, b2};
  return {w1, w2};
}

GcnVars bind(ad::Tape& tape, const GcnParams& p, bool requires_grad) {
  GcnVars v;
  v.w1 = tape.leaf(p.w1, requires_grad);
  v.w2 = tape.leaf(p.w2, requires_grad);
  v.use_bias = p.use_bias;
  if (p.use_bias) {
    v.b1 = tape.leaf(p.b1, requires_grad);
    v.b2 = tape.leaf(p.b2, requires_grad);
  }
  return v;
}

AdjGenVars bind(ad::Tape& tape, const AdjGenParams& p, bool requires_grad) {
  return {tape.leaf(p.w1, requires_grad), tape.leaf(p.b1, requires_grad),
          tape.leaf(p.w2, requires_grad), tape.leaf(p.b2, requires_grad)};
}

ad::Var gcn_forward(const std::shared_ptr<const SparseMatrix>& adj, ad::Var x,
                    const GcnVars& theta) {
  if (x.cols() != theta.w1.rows()) throw ShapeError("gcn_forward: feature width differs from W1");
  ad::Var h = ad::spmm(adj, ad::matmul(x, theta.w1));
  if (theta.use_bias) h = ad::add_row_vector(h, theta.b1);
  h = ad::relu(h);
  ad::Var z = ad::spmm(adj, ad::matmul(h, theta.w2));
  if (theta.use_bias) z = ad::add_row_vector(z, theta.b2);
  return z;
}

ad::Var gcn_forward(ad::Var adj, ad::Var x, const GcnVars& theta) {
  if (x.cols() != theta.w1.rows()) throw ShapeError("gcn_forward: feature width differs from W1");
  ad::Var h = ad::matmul(adj, ad::matmul(x, theta.w1));
  if (theta.use_bias) h = ad::add_row_vector(h, theta.b1);
  h = ad::relu(h);
  ad::Var z = ad::matmul(adj, ad::matmul(h, theta.w2));
  if (theta.use_bias) z = ad::add_row_vector(z, theta.b2);
  return z;
}

ad::Var sgc_forward(const std::shared_ptr<const SparseMatrix>& adj, ad::Var x, ad::Var w,
                    std::size_t hops) {
  if (hops < 1) throw ConfigError("sgc: propagation hops must be >= 1");
  ad::Var h = x;
  for (std::size_t k = 0; k < hops; ++k) h = ad::spmm(adj, h);
  return ad::matmul(h, w);
}

ad::Var mlp_forward(ad::Var x, ad::Var w1, ad::Var w2) {
  return ad::matmul(ad::relu(ad::matmul(x, w1)), w2);
}

ad::Var adjgen_forward(ad::Var x, const AdjGenVars& phi) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  if (n == 0) throw ShapeError("adjgen_forward: empty feature matrix");
  if (phi.w1.rows() != 2 * d) throw ShapeError("adjgen_forward: generator expects width 2d");
  ad::Tape& tape = *x.tape();

  ad::Var left = ad::matmul(x, ad::slice_rows(phi.w1, 0, d));
  ad::Var right = ad::matmul(x, ad::slice_rows(phi.w1, d, 2 * d));
  ad::Var pre = ad::spmm(pair_selector(n, false), left) + ad::spmm(pair_selector(n, true), right);
  ad::Var hidden = ad::relu(ad::add_row_vector(pre, phi.b1));
  ad::Var score = ad::add_row_vector(ad::matmul(hidden, phi.w2), phi.b2);  // n^2 x 1
  ad::Var m = ad::reshape(score, n, n);
  ad::Var sym = ad::scale(m + ad::transpose(m), 0.5);
  ad::Var a = ad::sigmoid(sym);

  Tensor off_diag(n, n, 1.0);
  for (std::size_t i = 0; i < n; ++i) off_diag(i, i) = 0.0;
  return ad::hadamard(a, tape.constant(std::move(off_diag))) + tape.constant(Tensor::identity(n));
}

Tensor gcn_forward(const SparseMatrix& adj, const Tensor& x, const GcnParams& theta) {
  ad::Tape tape;
  return gcn_forward(const_sparse(adj), tape.constant(x), bind(tape, theta, false)).value();
}

Tensor sgc_forward(const SparseMatrix& adj, const Tensor& x, const SgcParams& theta) {
  ad::Tape tape;
  return sgc_forward(const_sparse(adj), tape.constant(x), tape.constant(theta.w), theta.hops)
      .value();
}

Tensor mlp_forward(const Tensor& x, const MlpParams& theta) {
  Tensor h = matmul(x, theta.w1);
  for (double& v : h.values()) v = v > 0.0 ? v : 0.0;
  return matmul(h, theta.w2);
}

Tensor adjgen_forward(const Tensor& x, const AdjGenParams& phi) {
  ad::Tape tape;
  return adjgen_forward(tape.constant(x), bind(tape, phi, false)).value();
}

Tensor sparsify(const Tensor& adj, double threshold) {
  Tensor out = adj;
  for (double& v : out.values())
    if (v < threshold) v = 0.0;
  return out;
}

}  // namespace exgc::models
