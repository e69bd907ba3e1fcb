#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace ecrl::tensor {

using Real = double;

// Dense row-major rows x cols buffer. Plain value type with no gradient
// bookkeeping; see Tensor for the differentiable handle.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, Real fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<Real> data);
  // Row-by-row literal, e.g. Matrix::from_rows({{1, 2}, {3, 4}}).
  static Matrix from_rows(std::initializer_list<std::initializer_list<Real>> rows);
  static Matrix row_vector(std::span<const Real> values);
  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  Real& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  Real operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }

  std::span<Real> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const Real> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<Real>& data() { return data_; }
  const std::vector<Real>& data() const { return data_; }

  void fill(Real v);
  bool all_finite() const;
  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  Matrix transposed() const;
  // Rows [begin, end).
  Matrix slice_rows(std::size_t begin, std::size_t end) const;

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Real> data_;
};

// out (+)= a * b with no shape checking beyond debug asserts.
void gemm_acc(const Matrix& a, const Matrix& b, Matrix& out);
// out += a^T * b
void gemm_tn_acc(const Matrix& a, const Matrix& b, Matrix& out);
// out += a * b^T
void gemm_nt_acc(const Matrix& a, const Matrix& b, Matrix& out);

Matrix vconcat(std::span<const Matrix> parts);

}  // namespace ecrl::tensor
