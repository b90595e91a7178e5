#include "exgc/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "exgc/error.hpp"

namespace exgc {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMajor> view(const Tensor& t) {
  return {t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

Eigen::Map<RowMajor> view(Tensor& t) {
  return {t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

std::string shape_str(const Tensor& t) {
  return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

}  // namespace

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  }
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged rows in Tensor::from_rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return {r, c, std::move(data)};
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(*this));
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double Tensor::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul shape mismatch: " + shape_str(a) + " * " + shape_str(b));
  }
  Tensor out(a.rows(), b.cols());
  if (out.size() == 0) return out;
  if (a.cols() == 0) return out;
  view(out).noalias() = view(a) * view(b);
  return out;
}

Tensor transpose(const Tensor& a) {
  Tensor out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Tensor operator+(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add shape mismatch: " + shape_str(a) + " + " + shape_str(b));
  }
  Tensor out = a;
  auto o = out.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
  return out;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("sub shape mismatch: " + shape_str(a) + " - " + shape_str(b));
  }
  Tensor out = a;
  auto o = out.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  return out;
}

Tensor operator*(double s, const Tensor& a) {
  Tensor out = a;
  for (double& v : out.values()) v *= s;
  return out;
}

Tensor SparseMatrix::to_dense() const {
  Tensor out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) out(r, col_idx[k]) += values[k];
  return out;
}

Tensor SparseMatrix::multiply(const Tensor& b) const {
  if (cols != b.rows()) {
    throw ShapeError("sparse matmul shape mismatch: " + std::to_string(rows) + "x" +
                     std::to_string(cols) + " * " + shape_str(b));
  }
  Tensor out(rows, b.cols());
  const std::size_t m = b.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    double* dst = out.data() + r * m;
    for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) {
      const double w = values[k];
      const double* src = b.data() + col_idx[k] * m;
      for (std::size_t j = 0; j < m; ++j) dst[j] += w * src[j];
    }
  }
  return out;
}

Tensor SparseMatrix::multiply_transposed(const Tensor& b) const {
  if (rows != b.rows()) {
    throw ShapeError("sparse transposed matmul shape mismatch: (" + std::to_string(rows) + "x" +
                     std::to_string(cols) + ")^T * " + shape_str(b));
  }
  Tensor out(cols, b.cols());
  const std::size_t m = b.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = b.data() + r * m;
    for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) {
      const double w = values[k];
      double* dst = out.data() + col_idx[k] * m;
      for (std::size_t j = 0; j < m; ++j) dst[j] += w * src[j];
    }
  }
  return out;
}

SparseMatrix SparseMatrix::from_triplets(std::size_t rows, std::size_t cols,
                                         std::vector<Triplet> triplets) {
  std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  SparseMatrix m;
  m.rows = rows;
  m.cols = cols;
  m.row_ptr.assign(rows + 1, 0);
  const Triplet* prev = nullptr;
  for (const auto& t : triplets) {
    if (t.row >= rows || t.col >= cols) throw ShapeError("sparse triplet out of range");
    if (prev != nullptr && prev->row == t.row && prev->col == t.col) {
      m.values.back() += t.value;
    } else {
      m.col_idx.push_back(t.col);
      m.values.push_back(t.value);
      m.row_ptr[t.row + 1] += 1;
    }
    prev = &t;
  }
  for (std::size_t r = 0; r < rows; ++r) m.row_ptr[r + 1] += m.row_ptr[r];
  return m;
}

SparseMatrix SparseMatrix::identity(std::size_t n) {
  std::vector<Triplet> t;
  t.reserve(n);
  for (std::size_t i = 0; i < n; ++i) t.push_back({i, i, 1.0});
  return from_triplets(n, n, std::move(t));
}

}  // namespace exgc
