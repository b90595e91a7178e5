#include "exgc/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "exgc/error.hpp"

namespace exgc::ad {

namespace {

std::string shape_str(const Tensor& t) {
  return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

void require_same_shape(Op op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op_name(op)) + ": shape mismatch " + shape_str(a) + " vs " +
                     shape_str(b));
  }
}

void require_scalar(Op op, const Tensor& s) {
  if (s.rows() != 1 || s.cols() != 1) {
    throw ShapeError(std::string(op_name(op)) + ": expected 1x1 operand, got " + shape_str(s));
  }
}

template <typename F>
Tensor map(const Tensor& a, F f) {
  Tensor out(a.rows(), a.cols());
  auto src = a.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

template <typename F>
Tensor zip(const Tensor& a, const Tensor& b, F f) {
  Tensor out(a.rows(), a.cols());
  auto x = a.values();
  auto y = b.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < x.size(); ++i) dst[i] = f(x[i], y[i]);
  return out;
}

// Row-wise softmax of row r of z into `s`, returns log-sum-exp.
double softmax_row(const Tensor& z, std::size_t r, std::vector<double>& s) {
  const auto row = z.row(r);
  s.resize(row.size());
  double mx = row[0];
  for (double v : row) mx = std::max(mx, v);
  double total = 0.0;
  for (std::size_t k = 0; k < row.size(); ++k) {
    s[k] = std::exp(row[k] - mx);
    total += s[k];
  }
  for (double& v : s) v /= total;
  return mx + std::log(total);
}

void check_mask(const Tensor& z, const LabelMask& mask) {
  if (mask.rows.empty()) throw Error("masked cross-entropy: empty mask");
  if (mask.labels.size() != z.rows()) {
    throw ShapeError("masked cross-entropy: " + std::to_string(mask.labels.size()) +
                     " labels for " + std::to_string(z.rows()) + " rows");
  }
  for (std::size_t r : mask.rows) {
    if (r >= z.rows()) throw ShapeError("masked cross-entropy: mask row out of range");
    const int y = mask.labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= z.cols()) {
      throw ShapeError("masked cross-entropy: label " + std::to_string(y) + " out of range");
    }
  }
}

double column_norm(const Tensor& a, std::size_t j) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) s += a(i, j) * a(i, j);
  return std::sqrt(s);
}

double bernoulli_log_ratio(double p, double r) {
  constexpr double eps = 1e-12;
  p = std::clamp(p, eps, 1.0 - eps);
  return std::log(p / r) - std::log((1.0 - p) / (1.0 - r));
}

void log_softmax_row(const Tensor& z, std::size_t r, std::vector<double>& out) {
  std::vector<double> s;
  const double lse = softmax_row(z, r, s);
  out.resize(s.size());
  for (std::size_t k = 0; k < s.size(); ++k) out[k] = z(r, k) - lse;
}

}  // namespace

std::string_view op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Constant: return "constant";
    case Op::MatMul: return "matmul";
    case Op::Transpose: return "transpose";
    case Op::SpMM: return "sparse_dense_matmul";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Scale: return "scale";
    case Op::AddScalar: return "add_scalar";
    case Op::MulScalar: return "mul_scalar";
    case Op::Hadamard: return "hadamard";
    case Op::Relu: return "relu";
    case Op::ReluGrad: return "relu_grad";
    case Op::Sigmoid: return "sigmoid";
    case Op::Pow: return "pow";
    case Op::RowSum: return "row_sum";
    case Op::ColSum: return "col_sum";
    case Op::SumAll: return "sum_all";
    case Op::BroadcastCols: return "broadcast_cols";
    case Op::BroadcastRows: return "broadcast_rows";
    case Op::BroadcastScalar: return "broadcast_scalar";
    case Op::AddRowVector: return "add_row_vector";
    case Op::ScaleRows: return "scale_rows";
    case Op::SliceRows: return "slice_rows";
    case Op::EmbedRows: return "embed_rows";
    case Op::ConcatRows: return "concat_rows";
    case Op::Reshape: return "reshape";
    case Op::SoftmaxCrossEntropy: return "softmax_cross_entropy";
    case Op::CrossEntropyGrad: return "cross_entropy_grad";
    case Op::CrossEntropyHvp: return "cross_entropy_hvp";
    case Op::CosineSum: return "cosine_per_column";
    case Op::CosineGrad: return "cosine_grad";
    case Op::BernoulliKl: return "bernoulli_kl";
    case Op::BernoulliKlGrad: return "bernoulli_kl_grad";
    case Op::SoftmaxKl: return "softmax_kl";
    case Op::SoftmaxKlGrad: return "softmax_kl_grad";
  }
  return "unknown";
}

bool has_adjoint(Op op) {
  switch (op) {
    case Op::CrossEntropyHvp:
    case Op::CosineGrad:
    case Op::BernoulliKlGrad:
    case Op::SoftmaxKlGrad:
      return false;
    default:
      return true;
  }
}

Tensor evaluate(Op op, std::span<const Tensor* const> in, const Attr& attr) {
  switch (op) {
    case Op::Leaf:
    case Op::Constant:
      throw Error("evaluate: leaves and constants carry their own value");

    case Op::MatMul:
      return exgc::matmul(*in[0], *in[1]);

    case Op::Transpose:
      return exgc::transpose(*in[0]);

    case Op::SpMM:
      return attr.flag ? attr.sparse->multiply_transposed(*in[0]) : attr.sparse->multiply(*in[0]);

    case Op::Add:
      require_same_shape(op, *in[0], *in[1]);
      return *in[0] + *in[1];

    case Op::Sub:
      require_same_shape(op, *in[0], *in[1]);
      return *in[0] - *in[1];

    case Op::Scale:
      return attr.scalar * *in[0];

    case Op::AddScalar: {
      const double c = attr.scalar;
      return map(*in[0], [c](double v) { return v + c; });
    }

    case Op::MulScalar: {
      require_scalar(op, *in[1]);
      return in[1]->item() * *in[0];
    }

    case Op::Hadamard:
      require_same_shape(op, *in[0], *in[1]);
      return zip(*in[0], *in[1], [](double x, double y) { return x * y; });

    case Op::Relu:
      return map(*in[0], [](double v) { return v > 0.0 ? v : 0.0; });

    case Op::ReluGrad:
      require_same_shape(op, *in[0], *in[1]);
      return zip(*in[0], *in[1], [](double g, double x) { return x > 0.0 ? g : 0.0; });

    case Op::Sigmoid:
      return map(*in[0], [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      });

    case Op::Pow: {
      const double p = attr.scalar;
      return map(*in[0], [p](double v) { return std::pow(v, p); });
    }

    case Op::RowSum: {
      const Tensor& a = *in[0];
      Tensor out(a.rows(), 1);
      for (std::size_t i = 0; i < a.rows(); ++i) {
        double s = 0.0;
        for (double v : a.row(i)) s += v;
        out(i, 0) = s;
      }
      return out;
    }

    case Op::ColSum: {
      const Tensor& a = *in[0];
      Tensor out(1, a.cols());
      for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(0, j) += a(i, j);
      return out;
    }

    case Op::SumAll: {
      double s = 0.0;
      for (double v : in[0]->values()) s += v;
      return Tensor::scalar(s);
    }

    case Op::BroadcastCols: {
      const Tensor& a = *in[0];
      if (a.cols() != 1) throw ShapeError("broadcast_cols: expected a column vector");
      Tensor out(a.rows(), attr.a);
      for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < attr.a; ++j) out(i, j) = a(i, 0);
      return out;
    }

    case Op::BroadcastRows: {
      const Tensor& a = *in[0];
      if (a.rows() != 1) throw ShapeError("broadcast_rows: expected a row vector");
      Tensor out(attr.a, a.cols());
      for (std::size_t i = 0; i < attr.a; ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = a(0, j);
      return out;
    }

    case Op::BroadcastScalar:
      require_scalar(op, *in[0]);
      return Tensor(attr.a, attr.b, in[0]->item());

    case Op::AddRowVector: {
      const Tensor& a = *in[0];
      const Tensor& b = *in[1];
      if (b.rows() != 1 || b.cols() != a.cols()) {
        throw ShapeError("add_row_vector: " + shape_str(a) + " + " + shape_str(b));
      }
      Tensor out = a;
      for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) += b(0, j);
      return out;
    }

    case Op::ScaleRows: {
      const Tensor& a = *in[0];
      const Tensor& p = *in[1];
      if (p.cols() != 1 || p.rows() != a.rows()) {
        throw ShapeError("scale_rows: " + shape_str(a) + " by " + shape_str(p));
      }
      Tensor out = a;
      for (std::size_t i = 0; i < a.rows(); ++i)
        for (double& v : out.row(i)) v *= p(i, 0);
      return out;
    }

    case Op::SliceRows: {
      const Tensor& a = *in[0];
      if (attr.a > attr.b || attr.b > a.rows()) throw ShapeError("slice_rows: bad range");
      Tensor out(attr.b - attr.a, a.cols());
      std::copy(a.data() + attr.a * a.cols(), a.data() + attr.b * a.cols(), out.data());
      return out;
    }

    case Op::EmbedRows: {
      const Tensor& a = *in[0];
      if (attr.a + a.rows() > attr.b) throw ShapeError("embed_rows: bad range");
      Tensor out(attr.b, a.cols());
      std::copy(a.data(), a.data() + a.size(), out.data() + attr.a * a.cols());
      return out;
    }

    case Op::ConcatRows: {
      const Tensor& a = *in[0];
      const Tensor& b = *in[1];
      if (a.cols() != b.cols()) throw ShapeError("concat_rows: column mismatch");
      Tensor out(a.rows() + b.rows(), a.cols());
      std::copy(a.data(), a.data() + a.size(), out.data());
      std::copy(b.data(), b.data() + b.size(), out.data() + a.size());
      return out;
    }

    case Op::Reshape: {
      const Tensor& a = *in[0];
      if (attr.a * attr.b != a.size()) throw ShapeError("reshape: size mismatch");
      return Tensor(attr.a, attr.b, std::vector<double>(a.values().begin(), a.values().end()));
    }

    case Op::SoftmaxCrossEntropy: {
      const Tensor& z = *in[0];
      check_mask(z, *attr.mask);
      std::vector<double> s;
      double total = 0.0;
      for (std::size_t r : attr.mask->rows) {
        const double lse = softmax_row(z, r, s);
        total += lse - z(r, static_cast<std::size_t>(attr.mask->labels[r]));
      }
      return Tensor::scalar(total / static_cast<double>(attr.mask->rows.size()));
    }

    case Op::CrossEntropyGrad: {
      const Tensor& z = *in[0];
      check_mask(z, *attr.mask);
      const double w = 1.0 / static_cast<double>(attr.mask->rows.size());
      Tensor out(z.rows(), z.cols());
      std::vector<double> s;
      for (std::size_t r : attr.mask->rows) {
        softmax_row(z, r, s);
        for (std::size_t k = 0; k < z.cols(); ++k) out(r, k) += w * s[k];
        out(r, static_cast<std::size_t>(attr.mask->labels[r])) -= w;
      }
      return out;
    }

    case Op::CrossEntropyHvp: {
      const Tensor& z = *in[0];
      const Tensor& v = *in[1];
      require_same_shape(op, z, v);
      const double w = 1.0 / static_cast<double>(attr.mask->rows.size());
      Tensor out(z.rows(), z.cols());
      std::vector<double> s;
      for (std::size_t r : attr.mask->rows) {
        softmax_row(z, r, s);
        double sv = 0.0;
        for (std::size_t k = 0; k < z.cols(); ++k) sv += s[k] * v(r, k);
        for (std::size_t k = 0; k < z.cols(); ++k) out(r, k) += w * s[k] * (v(r, k) - sv);
      }
      return out;
    }

    case Op::CosineSum: {
      const Tensor& a = *in[0];
      const Tensor& b = *in[1];
      require_same_shape(op, a, b);
      double total = 0.0;
      for (std::size_t j = 0; j < a.cols(); ++j) {
        const double na = column_norm(a, j);
        const double nb = column_norm(b, j);
        if (na == 0.0 && nb == 0.0) {
          total += 1.0;
        } else if (na == 0.0 || nb == 0.0) {
          total += 0.0;
        } else {
          double dot = 0.0;
          for (std::size_t i = 0; i < a.rows(); ++i) dot += a(i, j) * b(i, j);
          total += dot / (na * nb);
        }
      }
      return Tensor::scalar(total);
    }

    case Op::CosineGrad: {
      // d/da of sum_j cos(a_j, b_j)
      const Tensor& a = *in[0];
      const Tensor& b = *in[1];
      require_same_shape(op, a, b);
      Tensor out(a.rows(), a.cols());
      for (std::size_t j = 0; j < a.cols(); ++j) {
        const double na = column_norm(a, j);
        const double nb = column_norm(b, j);
        if (na == 0.0 || nb == 0.0) continue;
        double dot = 0.0;
        for (std::size_t i = 0; i < a.rows(); ++i) dot += a(i, j) * b(i, j);
        const double cos = dot / (na * nb);
        for (std::size_t i = 0; i < a.rows(); ++i) {
          out(i, j) = b(i, j) / (na * nb) - cos * a(i, j) / (na * na);
        }
      }
      return out;
    }

    case Op::BernoulliKl: {
      const double r = attr.scalar;
      if (!(r > 0.0 && r < 1.0)) throw ConfigError("information constraint: r must lie in (0,1)");
      double total = 0.0;
      for (double p : in[0]->values()) {
        if (!(p >= 0.0 && p <= 1.0)) {
          throw NumericError("information constraint: score " + std::to_string(p) +
                             " outside [0,1]");
        }
        if (p > 0.0) total += p * std::log(p / r);
        if (p < 1.0) total += (1.0 - p) * std::log((1.0 - p) / (1.0 - r));
      }
      return Tensor::scalar(total);
    }

    case Op::BernoulliKlGrad: {
      const double r = attr.scalar;
      return map(*in[0], [r](double p) { return bernoulli_log_ratio(p, r); });
    }

    case Op::SoftmaxKl: {
      const Tensor& t = *in[0];
      const Tensor& z = *in[1];
      require_same_shape(op, t, z);
      std::vector<double> lt, lz;
      double total = 0.0;
      for (std::size_t r = 0; r < t.rows(); ++r) {
        log_softmax_row(t, r, lt);
        log_softmax_row(z, r, lz);
        for (std::size_t k = 0; k < t.cols(); ++k) total += std::exp(lt[k]) * (lt[k] - lz[k]);
      }
      return Tensor::scalar(t.rows() == 0 ? 0.0 : total / static_cast<double>(t.rows()));
    }

    case Op::SoftmaxKlGrad: {
      // flag = false: d/d logits; flag = true: d/d target
      const Tensor& t = *in[0];
      const Tensor& z = *in[1];
      require_same_shape(op, t, z);
      const double w = t.rows() == 0 ? 0.0 : 1.0 / static_cast<double>(t.rows());
      Tensor out(t.rows(), t.cols());
      std::vector<double> lt, lz;
      for (std::size_t r = 0; r < t.rows(); ++r) {
        log_softmax_row(t, r, lt);
        log_softmax_row(z, r, lz);
        if (!attr.flag) {
          for (std::size_t k = 0; k < t.cols(); ++k) out(r, k) = w * (std::exp(lz[k]) - std::exp(lt[k]));
        } else {
          double kl = 0.0;
          for (std::size_t k = 0; k < t.cols(); ++k) kl += std::exp(lt[k]) * (lt[k] - lz[k]);
          for (std::size_t k = 0; k < t.cols(); ++k) {
            out(r, k) = w * std::exp(lt[k]) * ((lt[k] - lz[k]) - kl);
          }
        }
      }
      return out;
    }
  }
  throw Error("evaluate: unknown primitive");
}

const Tensor& Var::value() const { return tape_->node(id_).value; }

bool Var::tracked() const { return tape_->node(id_).tracked; }

Var Tape::record(Node node) {
  nodes_.push_back(std::move(node));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(value);
  n.tracked = requires_grad;
  return record(std::move(n));
}

Var Tape::constant(Tensor value) {
  Node n;
  n.op = Op::Constant;
  n.value = std::move(value);
  return record(std::move(n));
}

Var Tape::apply(Op op, std::initializer_list<Var> inputs, Attr attr) {
  Node n;
  n.op = op;
  std::array<const Tensor*, 3> values{};
  std::size_t k = 0;
  for (const Var& v : inputs) {
    if (v.tape() != this) throw Error(std::string(op_name(op)) + ": operand from another tape");
    n.inputs[k] = v.id();
    values[k] = &nodes_[static_cast<std::size_t>(v.id())].value;
    n.tracked = n.tracked || nodes_[static_cast<std::size_t>(v.id())].tracked;
    ++k;
  }
  n.value = evaluate(op, std::span<const Tensor* const>(values.data(), k), attr);
  n.attr = std::move(attr);
  return record(std::move(n));
}

void Tape::truncate(std::size_t n) {
  if (n < nodes_.size()) nodes_.resize(n);
}

std::vector<Tensor> Tape::replay() const {
  std::vector<Tensor> values;
  values.reserve(nodes_.size());
  for (const Node& n : nodes_) {
    if (n.op == Op::Leaf || n.op == Op::Constant) {
      values.push_back(n.value);
      continue;
    }
    std::array<const Tensor*, 3> in{};
    std::size_t k = 0;
    for (int id : n.inputs) {
      if (id < 0) break;
      in[k++] = &values[static_cast<std::size_t>(id)];
    }
    values.push_back(evaluate(n.op, std::span<const Tensor* const>(in.data(), k), n.attr));
  }
  return values;
}

Var Tape::accumulate(Var into, Var add) {
  if (!into.valid()) return add;
  return into + add;
}

std::vector<Var> Tape::gradient(Var y, std::span<const Var> wrt, bool create_graph) {
  (void)create_graph;  // adjoints are always recorded; callers truncate when not needed
  if (y.tape() != this) throw Error("gradient: output is not on this tape");
  if (y.rows() != 1 || y.cols() != 1) {
    throw ShapeError("gradient: output must be 1x1, got " + shape_str(y.value()));
  }
  for (const Var& w : wrt) {
    if (w.tape() != this || w.id() < 0 || static_cast<std::size_t>(w.id()) >= nodes_.size() ||
        nodes_[static_cast<std::size_t>(w.id())].op != Op::Leaf) {
      throw Error("gradient: leaf not on tape");
    }
  }

  const auto top = static_cast<std::size_t>(y.id());
  std::vector<Var> adj(top + 1);
  adj[top] = constant(Tensor::scalar(1.0));

  for (std::size_t idx = top + 1; idx-- > 0;) {
    if (!adj[idx].valid()) continue;
    // Copy what we need: recording below may reallocate nodes_.
    const Op op = nodes_[idx].op;
    const std::array<int, 3> ins = nodes_[idx].inputs;
    const Attr attr = nodes_[idx].attr;
    const bool tracked = nodes_[idx].tracked;
    if (!tracked || op == Op::Leaf || op == Op::Constant) continue;
    if (!has_adjoint(op)) {
      throw Error("gradient: primitive '" + std::string(op_name(op)) +
                  "' has no registered second-order rule");
    }

    const Var g = adj[idx];
    const Var self(this, static_cast<int>(idx));
    auto in = [&](int k) { return Var(this, ins[static_cast<std::size_t>(k)]); };
    auto wants = [&](int k) {
      const int id = ins[static_cast<std::size_t>(k)];
      return id >= 0 && nodes_[static_cast<std::size_t>(id)].tracked;
    };
    auto push = [&](int k, Var contribution) {
      const auto id = static_cast<std::size_t>(ins[static_cast<std::size_t>(k)]);
      adj[id] = accumulate(adj[id], contribution);
    };

    switch (op) {
      case Op::MatMul:
        if (wants(0)) push(0, matmul(g, transpose(in(1))));
        if (wants(1)) push(1, matmul(transpose(in(0)), g));
        break;
      case Op::Transpose:
        push(0, transpose(g));
        break;
      case Op::SpMM:
        push(0, spmm(attr.sparse, g, !attr.flag));
        break;
      case Op::Add:
        if (wants(0)) push(0, g);
        if (wants(1)) push(1, g);
        break;
      case Op::Sub:
        if (wants(0)) push(0, g);
        if (wants(1)) push(1, scale(g, -1.0));
        break;
      case Op::Scale:
        push(0, scale(g, attr.scalar));
        break;
      case Op::AddScalar:
        push(0, g);
        break;
      case Op::MulScalar:
        if (wants(0)) push(0, mul_scalar(g, in(1)));
        if (wants(1)) push(1, sum_all(hadamard(g, in(0))));
        break;
      case Op::Hadamard:
        if (wants(0)) push(0, hadamard(g, in(1)));
        if (wants(1)) push(1, hadamard(g, in(0)));
        break;
      case Op::Relu:
        // second derivative of relu is taken as zero, including at the kink
        push(0, relu_grad(g, in(0)));
        break;
      case Op::ReluGrad:
        if (wants(0)) push(0, relu_grad(g, in(1)));
        break;
      case Op::Sigmoid:
        push(0, hadamard(g, hadamard(self, add_scalar(scale(self, -1.0), 1.0))));
        break;
      case Op::Pow:
        push(0, hadamard(g, scale(pow(in(0), attr.scalar - 1.0), attr.scalar)));
        break;
      case Op::RowSum:
        push(0, broadcast_cols(g, in(0).cols()));
        break;
      case Op::ColSum:
        push(0, broadcast_rows(g, in(0).rows()));
        break;
      case Op::SumAll:
        push(0, broadcast_scalar(g, in(0).rows(), in(0).cols()));
        break;
      case Op::BroadcastCols:
        push(0, row_sum(g));
        break;
      case Op::BroadcastRows:
        push(0, col_sum(g));
        break;
      case Op::BroadcastScalar:
        push(0, sum_all(g));
        break;
      case Op::AddRowVector:
        if (wants(0)) push(0, g);
        if (wants(1)) push(1, col_sum(g));
        break;
      case Op::ScaleRows:
        if (wants(0)) push(0, scale_rows(g, in(1)));
        if (wants(1)) push(1, row_sum(hadamard(g, in(0))));
        break;
      case Op::SliceRows:
        push(0, embed_rows(g, attr.a, in(0).rows()));
        break;
      case Op::EmbedRows:
        push(0, slice_rows(g, attr.a, attr.a + in(0).rows()));
        break;
      case Op::ConcatRows: {
        const std::size_t ra = in(0).rows();
        if (wants(0)) push(0, slice_rows(g, 0, ra));
        if (wants(1)) push(1, slice_rows(g, ra, ra + in(1).rows()));
        break;
      }
      case Op::Reshape:
        push(0, reshape(g, in(0).rows(), in(0).cols()));
        break;
      case Op::SoftmaxCrossEntropy:
        push(0, mul_scalar(cross_entropy_grad(in(0), attr.mask), g));
        break;
      case Op::CrossEntropyGrad: {
        Attr a;
        a.mask = attr.mask;
        push(0, apply(Op::CrossEntropyHvp, {in(0), g}, a));
        break;
      }
      case Op::CosineSum:
        if (wants(0)) push(0, mul_scalar(apply(Op::CosineGrad, {in(0), in(1)}), g));
        if (wants(1)) push(1, mul_scalar(apply(Op::CosineGrad, {in(1), in(0)}), g));
        break;
      case Op::BernoulliKl: {
        Attr a;
        a.scalar = attr.scalar;
        push(0, mul_scalar(apply(Op::BernoulliKlGrad, {in(0)}, a), g));
        break;
      }
      case Op::SoftmaxKl: {
        Attr a;
        if (wants(1)) push(1, mul_scalar(apply(Op::SoftmaxKlGrad, {in(0), in(1)}, a), g));
        a.flag = true;
        if (wants(0)) push(0, mul_scalar(apply(Op::SoftmaxKlGrad, {in(0), in(1)}, a), g));
        break;
      }
      default:
        throw Error("gradient: unhandled primitive '" + std::string(op_name(op)) + "'");
    }
  }

  std::vector<Var> out;
  out.reserve(wrt.size());
  for (const Var& w : wrt) {
    const auto id = static_cast<std::size_t>(w.id());
    if (id <= top && adj[id].valid()) {
      out.push_back(adj[id]);
    } else {
      out.push_back(constant(Tensor(w.rows(), w.cols())));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

Tape& common_tape(Var a, Var b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) throw Error("operands live on different tapes");
  return *a.tape();
}

Attr scalar_attr(double s) {
  Attr a;
  a.scalar = s;
  return a;
}

Attr range_attr(std::size_t x, std::size_t y) {
  Attr a;
  a.a = x;
  a.b = y;
  return a;
}

}  // namespace

Var matmul(Var a, Var b) { return common_tape(a, b).apply(Op::MatMul, {a, b}); }
Var transpose(Var a) { return a.tape()->apply(Op::Transpose, {a}); }

Var spmm(std::shared_ptr<const SparseMatrix> s, Var b, bool transposed) {
  Attr a;
  a.sparse = std::move(s);
  a.flag = transposed;
  return b.tape()->apply(Op::SpMM, {b}, std::move(a));
}

Var operator+(Var a, Var b) { return common_tape(a, b).apply(Op::Add, {a, b}); }
Var operator-(Var a, Var b) { return common_tape(a, b).apply(Op::Sub, {a, b}); }
Var scale(Var a, double c) { return a.tape()->apply(Op::Scale, {a}, scalar_attr(c)); }
Var add_scalar(Var a, double c) { return a.tape()->apply(Op::AddScalar, {a}, scalar_attr(c)); }
Var mul_scalar(Var a, Var s) { return common_tape(a, s).apply(Op::MulScalar, {a, s}); }
Var hadamard(Var a, Var b) { return common_tape(a, b).apply(Op::Hadamard, {a, b}); }
Var relu(Var a) { return a.tape()->apply(Op::Relu, {a}); }
Var relu_grad(Var g, Var x) { return common_tape(g, x).apply(Op::ReluGrad, {g, x}); }
Var sigmoid(Var a) { return a.tape()->apply(Op::Sigmoid, {a}); }
Var pow(Var a, double exponent) { return a.tape()->apply(Op::Pow, {a}, scalar_attr(exponent)); }
Var row_sum(Var a) { return a.tape()->apply(Op::RowSum, {a}); }
Var col_sum(Var a) { return a.tape()->apply(Op::ColSum, {a}); }
Var sum_all(Var a) { return a.tape()->apply(Op::SumAll, {a}); }

Var broadcast_cols(Var a, std::size_t cols) {
  return a.tape()->apply(Op::BroadcastCols, {a}, range_attr(cols, 0));
}
Var broadcast_rows(Var a, std::size_t rows) {
  return a.tape()->apply(Op::BroadcastRows, {a}, range_attr(rows, 0));
}
Var broadcast_scalar(Var a, std::size_t rows, std::size_t cols) {
  return a.tape()->apply(Op::BroadcastScalar, {a}, range_attr(rows, cols));
}
Var add_row_vector(Var a, Var row) { return common_tape(a, row).apply(Op::AddRowVector, {a, row}); }
Var scale_rows(Var a, Var p) { return common_tape(a, p).apply(Op::ScaleRows, {a, p}); }
Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  return a.tape()->apply(Op::SliceRows, {a}, range_attr(begin, end));
}
Var embed_rows(Var a, std::size_t begin, std::size_t total_rows) {
  return a.tape()->apply(Op::EmbedRows, {a}, range_attr(begin, total_rows));
}
Var concat_rows(Var a, Var b) { return common_tape(a, b).apply(Op::ConcatRows, {a, b}); }
Var reshape(Var a, std::size_t rows, std::size_t cols) {
  return a.tape()->apply(Op::Reshape, {a}, range_attr(rows, cols));
}

Var softmax_cross_entropy(Var logits, std::shared_ptr<const LabelMask> mask) {
  Attr a;
  a.mask = std::move(mask);
  return logits.tape()->apply(Op::SoftmaxCrossEntropy, {logits}, std::move(a));
}

Var cross_entropy_grad(Var logits, std::shared_ptr<const LabelMask> mask) {
  Attr a;
  a.mask = std::move(mask);
  return logits.tape()->apply(Op::CrossEntropyGrad, {logits}, std::move(a));
}

Var cosine_sum(Var a, Var b) { return common_tape(a, b).apply(Op::CosineSum, {a, b}); }

Var bernoulli_kl(Var p, double r) { return p.tape()->apply(Op::BernoulliKl, {p}, scalar_attr(r)); }

Var softmax_kl(Var target, Var logits) {
  return common_tape(target, logits).apply(Op::SoftmaxKl, {target, logits});
}

std::vector<Tensor> grad(Var y, std::span<const Var> wrt) {
  Tape& tape = *y.tape();
  const std::size_t mark = tape.size();
  std::vector<Var> g = tape.gradient(y, wrt, false);
  std::vector<Tensor> out;
  out.reserve(g.size());
  for (const Var& v : g) out.push_back(v.value());
  tape.truncate(mark);
  return out;
}

std::vector<Var> grad_graph(Var y, std::span<const Var> wrt) {
  return y.tape()->gradient(y, wrt, true);
}

std::vector<Tensor> grad2(Var y, std::span<const Var> wrt) { return grad(y, wrt); }

}  // namespace exgc::ad
