#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ecrl/tensor/tensor.hpp"

// Differentiable primitives. Every op validates shapes and throws
// DimensionError on mismatch; gradients are recorded on the active tape.
namespace ecrl::tensor {

enum class Axis { kRows = 0, kCols = 1 };  // kRows: reduce down each column

inline constexpr Real kCosineEps = 1e-8;

Tensor matmul(const Tensor& a, const Tensor& b);
// a * b^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Real s);
// a (m x n) + bias (1 x n) broadcast over rows.
Tensor add_row(const Tensor& a, const Tensor& bias);

Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor relu(const Tensor& a);

// Softmax along `axis`: Axis::kCols normalises each row, Axis::kRows each
// column. Max-subtracted.
Tensor softmax(const Tensor& x, Axis axis);
Tensor log_softmax(const Tensor& x, Axis axis);

// Each row scaled to unit L2 norm; rows with norm < eps become zero.
Tensor normalize_rows(const Tensor& x, Real eps = kCosineEps);
// u^T v / (|u| |v|) for 1 x n vectors (1 x 1 result); 0 if either norm < eps.
Tensor cosine_sim(const Tensor& u, const Tensor& v);
// Pairwise cosine similarities between rows of a (m x d) and b (n x d).
Tensor cosine_matrix(const Tensor& a, const Tensor& b);

Tensor hconcat(std::span<const Tensor> parts);
Tensor vconcat(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor reverse_rows(const Tensor& x);
// Embedding lookup: row ids[i] of table becomes output row i.
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids);

// Row sums as an m x 1 column.
Tensor row_sums(const Tensor& x);
// x (m x n) divided row-wise by d (m x 1).
Tensor div_rows(const Tensor& x, const Tensor& d);
Tensor add_scalar(const Tensor& x, Real s);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// sum_ij w_ij * x_ij with a constant weight matrix.
Tensor weighted_sum(const Tensor& x, const Matrix& w);

}  // namespace ecrl::tensor
