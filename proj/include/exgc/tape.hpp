#pragma once

// Reverse-mode differentiation over dense matrices.
//
// Every primitive application is appended to a Tape as a Node holding its
// operator, input ids, attributes, and the computed value. Adjoint rules are
// themselves written in terms of tape primitives, so a gradient computed with
// `grad_graph` is an ordinary Var that can be differentiated again. That is
// how the matching loss (a function of parameter gradients) is differentiated
// with respect to the synthetic features.
//
// A handful of helper primitives only exist to express adjoints (for example
// the Hessian-vector product of the cross-entropy). They carry no adjoint rule
// of their own; reaching one during a backward pass raises an error.

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "exgc/tensor.hpp"

namespace exgc::ad {

enum class Op : std::uint8_t {
  Leaf,
  Constant,
  MatMul,
  Transpose,
  SpMM,  // constant sparse matrix (optionally transposed) times dense
  Add,
  Sub,
  Scale,      // times a constant
  AddScalar,  // plus a constant
  MulScalar,  // times a 1x1 Var
  Hadamard,
  Relu,
  ReluGrad,  // g * [x > 0]
  Sigmoid,
  Pow,  // element-wise power with constant exponent
  RowSum,
  ColSum,
  SumAll,
  BroadcastCols,    // n x 1 -> n x m
  BroadcastRows,    // 1 x m -> n x m
  BroadcastScalar,  // 1 x 1 -> n x m
  AddRowVector,
  ScaleRows,  // diag(p) * A
  SliceRows,
  EmbedRows,  // zero-pad into a taller matrix
  ConcatRows,
  Reshape,
  SoftmaxCrossEntropy,
  CrossEntropyGrad,
  CrossEntropyHvp,
  CosineSum,
  CosineGrad,
  BernoulliKl,
  BernoulliKlGrad,
  SoftmaxKl,
  SoftmaxKlGrad,
};

std::string_view op_name(Op op);

/// True when the primitive has an adjoint rule.
bool has_adjoint(Op op);

/// Integer labels plus the subset of rows a masked loss averages over.
struct LabelMask {
  std::vector<int> labels;
  std::vector<std::size_t> rows;
};

struct Attr {
  double scalar = 0.0;
  std::size_t a = 0;
  std::size_t b = 0;
  bool flag = false;
  std::shared_ptr<const SparseMatrix> sparse;
  std::shared_ptr<const LabelMask> mask;
};

struct Node {
  Op op = Op::Constant;
  std::array<int, 3> inputs{-1, -1, -1};
  Attr attr;
  Tensor value;
  bool tracked = false;  // depends on a leaf that requires grad
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid as long as the tape is
/// alive and the node has not been truncated away.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool tracked() const;
  int id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr && id_ >= 0; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value);

  /// Evaluates `op` on the inputs and records the application.
  Var apply(Op op, std::initializer_list<Var> inputs, Attr attr = {});

  /// Reverse sweep from the 1x1 output `y`. With `create_graph` the adjoint
  /// computation is recorded, so the returned Vars are differentiable.
  std::vector<Var> gradient(Var y, std::span<const Var> wrt, bool create_graph);

  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  std::size_t size() const { return nodes_.size(); }

  /// Drops every node with id >= n.
  void truncate(std::size_t n);

  /// Re-executes every recorded primitive from the stored leaf and constant
  /// values and returns the recomputed node values in id order.
  std::vector<Tensor> replay() const;

 private:
  Var record(Node node);
  Var accumulate(Var into, Var add);

  std::vector<Node> nodes_;
};

/// Evaluates a primitive on plain values.
Tensor evaluate(Op op, std::span<const Tensor* const> inputs, const Attr& attr);

// Primitive constructors. All operands must share a tape.
Var matmul(Var a, Var b);
Var transpose(Var a);
Var spmm(std::shared_ptr<const SparseMatrix> s, Var b, bool transposed = false);
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var mul_scalar(Var a, Var s);
Var hadamard(Var a, Var b);
Var relu(Var a);
Var relu_grad(Var g, Var x);
Var sigmoid(Var a);
Var pow(Var a, double exponent);
Var row_sum(Var a);
Var col_sum(Var a);
Var sum_all(Var a);
Var broadcast_cols(Var a, std::size_t cols);
Var broadcast_rows(Var a, std::size_t rows);
Var broadcast_scalar(Var a, std::size_t rows, std::size_t cols);
Var add_row_vector(Var a, Var row);
Var scale_rows(Var a, Var p);
Var slice_rows(Var a, std::size_t begin, std::size_t end);
Var embed_rows(Var a, std::size_t begin, std::size_t total_rows);
Var concat_rows(Var a, Var b);
Var reshape(Var a, std::size_t rows, std::size_t cols);

/// Mean softmax cross-entropy over the rows listed in `mask`.
Var softmax_cross_entropy(Var logits, std::shared_ptr<const LabelMask> mask);
Var cross_entropy_grad(Var logits, std::shared_ptr<const LabelMask> mask);

/// Sum over columns of cos(a_col, b_col). A column pair where both vectors are
/// zero counts as 1, a pair where exactly one is zero counts as 0.
Var cosine_sum(Var a, Var b);

/// Sum_i p_i log(p_i / r) + (1 - p_i) log((1 - p_i) / (1 - r)), 0 log 0 = 0.
Var bernoulli_kl(Var p, double r);

/// Mean over rows of KL(softmax(target) || softmax(logits)).
Var softmax_kl(Var target, Var logits);

/// Values of d y / d wrt. Leaves that y does not depend on get zeros. Nodes
/// added while differentiating are removed from the tape afterwards.
std::vector<Tensor> grad(Var y, std::span<const Var> wrt);

/// Differentiable gradients: the adjoint pass is recorded on the tape.
std::vector<Var> grad_graph(Var y, std::span<const Var> wrt);

/// Gradient of a scalar that was built from `grad_graph` outputs. Identical to
/// `grad`; named separately so call sites document the second-order path.
std::vector<Tensor> grad2(Var y, std::span<const Var> wrt);

/// Randomized central-difference check of every primitive that has an adjoint
/// rule, plus the adjoint helpers against the primitives they differentiate.
struct SelfCheckResult {
  std::string name;
  double rel_error = 0.0;
  bool passed = false;
};
std::vector<SelfCheckResult> selfcheck(std::uint64_t seed, double tolerance = 1e-6);

}  // namespace exgc::ad
