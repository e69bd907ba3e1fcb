#include "ecrl/tensor/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ecrl/errors.hpp"

namespace ecrl::tensor {

namespace {

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (!a.value().same_shape(b.value())) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.value()) +
                         " vs " + shape_str(b.value()));
  }
}

// Pushes g into t's gradient when t participates in differentiation.
void push(const Tensor& t, const Matrix& g) {
  if (t.requires_grad()) t.node()->accumulate(g);
}

Real sigmoid_scalar(Real x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const Real e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions disagree " + shape_str(a.value()) + " * " +
                         shape_str(b.value()));
  }
  Matrix out(a.rows(), b.cols());
  gemm_acc(a.value(), b.value(), out);
  return Tape::record(std::move(out), {&a, &b}, [a, b](const Node& o) {
    if (a.requires_grad()) {
      Matrix ga(a.rows(), a.cols());
      gemm_nt_acc(o.grad, b.value(), ga);
      push(a, ga);
    }
    if (b.requires_grad()) {
      Matrix gb(b.rows(), b.cols());
      gemm_tn_acc(a.value(), o.grad, gb);
      push(b, gb);
    }
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: inner dimensions disagree " + shape_str(a.value()) +
                         " * (" + shape_str(b.value()) + ")^T");
  }
  Matrix out(a.rows(), b.rows());
  gemm_nt_acc(a.value(), b.value(), out);
  return Tape::record(std::move(out), {&a, &b}, [a, b](const Node& o) {
    if (a.requires_grad()) {
      Matrix ga(a.rows(), a.cols());
      gemm_acc(o.grad, b.value(), ga);
      push(a, ga);
    }
    if (b.requires_grad()) {
      Matrix gb(b.rows(), b.cols());
      gemm_tn_acc(o.grad, a.value(), gb);
      push(b, gb);
    }
  });
}

Tensor transpose(const Tensor& a) {
  return Tape::record(a.value().transposed(), {&a},
                      [a](const Node& o) { push(a, o.grad.transposed()); });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return Tape::record(std::move(out), {&a, &b}, [a, b](const Node& o) {
    push(a, o.grad);
    push(b, o.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return Tape::record(std::move(out), {&a, &b}, [a, b](const Node& o) {
    push(a, o.grad);
    if (b.requires_grad()) {
      Matrix g = o.grad;
      for (auto& x : g.data()) x = -x;
      push(b, g);
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return Tape::record(std::move(out), {&a, &b}, [a, b](const Node& o) {
    if (a.requires_grad()) {
      Matrix g = o.grad;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= b.value()[i];
      push(a, g);
    }
    if (b.requires_grad()) {
      Matrix g = o.grad;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= a.value()[i];
      push(b, g);
    }
  });
}

Tensor scale(const Tensor& a, Real s) {
  Matrix out = a.value();
  for (auto& x : out.data()) x *= s;
  return Tape::record(std::move(out), {&a}, [a, s](const Node& o) {
    Matrix g = o.grad;
    for (auto& x : g.data()) x *= s;
    push(a, g);
  });
}

Tensor add_scalar(const Tensor& x, Real s) {
  Matrix out = x.value();
  for (auto& v : out.data()) v += s;
  return Tape::record(std::move(out), {&x}, [x](const Node& o) { push(x, o.grad); });
}

Tensor add_row(const Tensor& a, const Tensor& bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols()) {
    throw DimensionError("add_row: bias " + shape_str(bias.value()) + " for input " +
                         shape_str(a.value()));
  }
  Matrix out = a.value();
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bias.value()[c];
  return Tape::record(std::move(out), {&a, &bias}, [a, bias](const Node& o) {
    push(a, o.grad);
    if (bias.requires_grad()) {
      Matrix g(1, bias.cols());
      for (std::size_t r = 0; r < o.grad.rows(); ++r)
        for (std::size_t c = 0; c < o.grad.cols(); ++c) g[c] += o.grad(r, c);
      if (debug::corrupt_bias_gradient()) {
        for (auto& x : g.data()) x *= 1.1;
      }
      push(bias, g);
    }
  });
}

Tensor sigmoid(const Tensor& a) {
  Matrix out = a.value();
  for (auto& x : out.data()) x = sigmoid_scalar(x);
  Matrix y = out;
  return Tape::record(std::move(out), {&a}, [a, y = std::move(y)](const Node& o) {
    Matrix g = o.grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= y[i] * (1.0 - y[i]);
    push(a, g);
  });
}

Tensor tanh(const Tensor& a) {
  Matrix out = a.value();
  for (auto& x : out.data()) x = std::tanh(x);
  Matrix y = out;
  return Tape::record(std::move(out), {&a}, [a, y = std::move(y)](const Node& o) {
    Matrix g = o.grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= 1.0 - y[i] * y[i];
    push(a, g);
  });
}

Tensor exp(const Tensor& a) {
  Matrix out = a.value();
  for (auto& x : out.data()) x = std::exp(x);
  Matrix y = out;
  return Tape::record(std::move(out), {&a}, [a, y = std::move(y)](const Node& o) {
    Matrix g = o.grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= y[i];
    push(a, g);
  });
}

Tensor log(const Tensor& a) {
  Matrix out = a.value();
  for (auto& x : out.data()) x = std::log(x);
  return Tape::record(std::move(out), {&a}, [a](const Node& o) {
    Matrix g = o.grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] /= a.value()[i];
    push(a, g);
  });
}

Tensor relu(const Tensor& a) {
  Matrix out = a.value();
  for (auto& x : out.data()) x = std::max(x, 0.0);
  return Tape::record(std::move(out), {&a}, [a](const Node& o) {
    Matrix g = o.grad;
    for (std::size_t i = 0; i < g.size(); ++i)
      if (a.value()[i] <= 0.0) g[i] = 0.0;
    push(a, g);
  });
}

namespace {

// Softmax lines are rows for kCols and columns for kRows; `stride` walks
// along a line, `step` moves between lines.
struct Lines {
  std::size_t count, length, stride, step;
};

Lines lines_of(const Matrix& m, Axis axis) {
  if (axis == Axis::kCols) return {m.rows(), m.cols(), 1, m.cols()};
  return {m.cols(), m.rows(), m.cols(), 1};
}

void check_axis(const char* op, const Matrix& m, Axis axis) {
  const std::size_t len = axis == Axis::kCols ? m.cols() : m.rows();
  if (len == 0 || m.empty()) throw DimensionError(std::string(op) + ": empty reduction axis");
}

Matrix softmax_value(const Matrix& x, Axis axis) {
  Matrix y(x.rows(), x.cols());
  const Lines L = lines_of(x, axis);
  for (std::size_t l = 0; l < L.count; ++l) {
    const std::size_t base = l * L.step;
    Real mx = -std::numeric_limits<Real>::infinity();
    for (std::size_t k = 0; k < L.length; ++k) mx = std::max(mx, x[base + k * L.stride]);
    Real s = 0.0;
    for (std::size_t k = 0; k < L.length; ++k) {
      const Real e = std::exp(x[base + k * L.stride] - mx);
      y[base + k * L.stride] = e;
      s += e;
    }
    for (std::size_t k = 0; k < L.length; ++k) y[base + k * L.stride] /= s;
  }
  return y;
}

}  // namespace

Tensor softmax(const Tensor& x, Axis axis) {
  check_axis("softmax", x.value(), axis);
  Matrix out = softmax_value(x.value(), axis);
  Matrix y = out;
  return Tape::record(std::move(out), {&x}, [x, y = std::move(y), axis](const Node& o) {
    Matrix g(y.rows(), y.cols());
    const Lines L = lines_of(y, axis);
    for (std::size_t l = 0; l < L.count; ++l) {
      const std::size_t base = l * L.step;
      Real dot = 0.0;
      for (std::size_t k = 0; k < L.length; ++k) {
        const std::size_t i = base + k * L.stride;
        dot += o.grad[i] * y[i];
      }
      for (std::size_t k = 0; k < L.length; ++k) {
        const std::size_t i = base + k * L.stride;
        g[i] = y[i] * (o.grad[i] - dot);
      }
    }
    push(x, g);
  });
}

Tensor log_softmax(const Tensor& x, Axis axis) {
  check_axis("log_softmax", x.value(), axis);
  const Matrix& in = x.value();
  Matrix out(in.rows(), in.cols());
  const Lines L = lines_of(in, axis);
  for (std::size_t l = 0; l < L.count; ++l) {
    const std::size_t base = l * L.step;
    Real mx = -std::numeric_limits<Real>::infinity();
    for (std::size_t k = 0; k < L.length; ++k) mx = std::max(mx, in[base + k * L.stride]);
    Real s = 0.0;
    for (std::size_t k = 0; k < L.length; ++k) s += std::exp(in[base + k * L.stride] - mx);
    const Real lse = mx + std::log(s);
    for (std::size_t k = 0; k < L.length; ++k) {
      const std::size_t i = base + k * L.stride;
      out[i] = in[i] - lse;
    }
  }
  Matrix y = out;
  return Tape::record(std::move(out), {&x}, [x, y = std::move(y), axis](const Node& o) {
    Matrix g(y.rows(), y.cols());
    const Lines L = lines_of(y, axis);
    for (std::size_t l = 0; l < L.count; ++l) {
      const std::size_t base = l * L.step;
      Real total = 0.0;
      for (std::size_t k = 0; k < L.length; ++k) total += o.grad[base + k * L.stride];
      for (std::size_t k = 0; k < L.length; ++k) {
        const std::size_t i = base + k * L.stride;
        g[i] = o.grad[i] - std::exp(y[i]) * total;
      }
    }
    push(x, g);
  });
}

Tensor normalize_rows(const Tensor& x, Real eps) {
  const Matrix& in = x.value();
  Matrix out(in.rows(), in.cols());
  std::vector<Real> norms(in.rows());
  for (std::size_t r = 0; r < in.rows(); ++r) {
    Real s = 0.0;
    for (Real v : in.row(r)) s += v * v;
    norms[r] = std::sqrt(s);
    if (norms[r] < eps) continue;
    for (std::size_t c = 0; c < in.cols(); ++c) out(r, c) = in(r, c) / norms[r];
  }
  Matrix y = out;
  return Tape::record(std::move(out), {&x},
                      [x, y = std::move(y), norms = std::move(norms), eps](const Node& o) {
                        Matrix g(y.rows(), y.cols());
                        for (std::size_t r = 0; r < y.rows(); ++r) {
                          if (norms[r] < eps) continue;
                          Real dot = 0.0;
                          for (std::size_t c = 0; c < y.cols(); ++c) dot += y(r, c) * o.grad(r, c);
                          for (std::size_t c = 0; c < y.cols(); ++c)
                            g(r, c) = (o.grad(r, c) - y(r, c) * dot) / norms[r];
                        }
                        push(x, g);
                      });
}

Tensor cosine_sim(const Tensor& u, const Tensor& v) {
  if (u.rows() != 1 || v.rows() != 1 || u.cols() != v.cols()) {
    throw DimensionError("cosine_sim: expected equal-length row vectors, got " +
                         shape_str(u.value()) + " and " + shape_str(v.value()));
  }
  return matmul_nt(normalize_rows(u), normalize_rows(v));
}

Tensor cosine_matrix(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("cosine_matrix: feature widths differ " + shape_str(a.value()) +
                         " vs " + shape_str(b.value()));
  }
  return matmul_nt(normalize_rows(a), normalize_rows(b));
}

Tensor hconcat(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("hconcat: no inputs");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw DimensionError("hconcat: row count mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < p.cols(); ++c) out(r, offset + c) = p.value()(r, c);
    offset += p.cols();
  }
  std::vector<Tensor> captured(parts.begin(), parts.end());
  return Tape::record(std::move(out), parts,
                      [captured = std::move(captured)](const Node& o) {
                        std::size_t off = 0;
                        for (const auto& p : captured) {
                          if (p.requires_grad()) {
                            Matrix g(p.rows(), p.cols());
                            for (std::size_t r = 0; r < g.rows(); ++r)
                              for (std::size_t c = 0; c < g.cols(); ++c) g(r, c) = o.grad(r, off + c);
                            push(p, g);
                          }
                          off += p.cols();
                        }
                      });
}

Tensor vconcat(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("vconcat: no inputs");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw DimensionError("vconcat: column count mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(offset));
    offset += p.value().size();
  }
  std::vector<Tensor> captured(parts.begin(), parts.end());
  return Tape::record(std::move(out), parts, [captured = std::move(captured)](const Node& o) {
    std::size_t off = 0;
    for (const auto& p : captured) {
      if (p.requires_grad()) {
        Matrix g(p.rows(), p.cols());
        std::copy(o.grad.data().begin() + static_cast<std::ptrdiff_t>(off),
                  o.grad.data().begin() + static_cast<std::ptrdiff_t>(off + g.size()),
                  g.data().begin());
        push(p, g);
      }
      off += p.value().size();
    }
  });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  if (begin > end || end > x.cols()) throw DimensionError("slice_cols: range out of bounds");
  Matrix out(x.rows(), end - begin);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = begin; c < end; ++c) out(r, c - begin) = x.value()(r, c);
  return Tape::record(std::move(out), {&x}, [x, begin, end](const Node& o) {
    Matrix g(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r)
      for (std::size_t c = begin; c < end; ++c) g(r, c) = o.grad(r, c - begin);
    push(x, g);
  });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  if (begin > end || end > x.rows()) throw DimensionError("slice_rows: range out of bounds");
  return Tape::record(x.value().slice_rows(begin, end), {&x}, [x, begin](const Node& o) {
    Matrix g(x.rows(), x.cols());
    std::copy(o.grad.data().begin(), o.grad.data().end(),
              g.data().begin() + static_cast<std::ptrdiff_t>(begin * x.cols()));
    push(x, g);
  });
}

Tensor reverse_rows(const Tensor& x) {
  const std::size_t n = x.rows();
  Matrix out(n, x.cols());
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = x.value()(n - 1 - r, c);
  return Tape::record(std::move(out), {&x}, [x, n](const Node& o) {
    Matrix g(n, x.cols());
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < x.cols(); ++c) g(r, c) = o.grad(n - 1 - r, c);
    push(x, g);
  });
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids) {
  Matrix out(ids.size(), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= table.rows()) {
      throw InputError("gather_rows: id " + std::to_string(ids[i]) + " outside table of " +
                       std::to_string(table.rows()) + " rows");
    }
    for (std::size_t c = 0; c < table.cols(); ++c) out(i, c) = table.value()(ids[i], c);
  }
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  return Tape::record(std::move(out), {&table}, [table, idx = std::move(idx)](const Node& o) {
    Matrix g(table.rows(), table.cols());
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t c = 0; c < table.cols(); ++c) g(idx[i], c) += o.grad(i, c);
    push(table, g);
  });
}

Tensor row_sums(const Tensor& x) {
  Matrix out(x.rows(), 1);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (Real v : x.value().row(r)) out[r] += v;
  return Tape::record(std::move(out), {&x}, [x](const Node& o) {
    Matrix g(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r)
      for (std::size_t c = 0; c < x.cols(); ++c) g(r, c) = o.grad[r];
    push(x, g);
  });
}

Tensor div_rows(const Tensor& x, const Tensor& d) {
  if (d.rows() != x.rows() || d.cols() != 1) {
    throw DimensionError("div_rows: divisor " + shape_str(d.value()) + " for input " +
                         shape_str(x.value()));
  }
  Matrix out = x.value();
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (auto& v : out.row(r)) v /= d.value()[r];
  return Tape::record(std::move(out), {&x, &d}, [x, d](const Node& o) {
    if (x.requires_grad()) {
      Matrix g = o.grad;
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (auto& v : g.row(r)) v /= d.value()[r];
      push(x, g);
    }
    if (d.requires_grad()) {
      Matrix g(d.rows(), 1);
      for (std::size_t r = 0; r < x.rows(); ++r) {
        const Real dr = d.value()[r];
        Real s = 0.0;
        for (std::size_t c = 0; c < x.cols(); ++c) s += o.grad(r, c) * x.value()(r, c);
        g[r] = -s / (dr * dr);
      }
      push(d, g);
    }
  });
}

Tensor sum(const Tensor& x) {
  Real s = 0.0;
  for (Real v : x.value().data()) s += v;
  return Tape::record(Matrix(1, 1, s), {&x}, [x](const Node& o) {
    push(x, Matrix(x.rows(), x.cols(), o.grad[0]));
  });
}

Tensor mean(const Tensor& x) {
  if (x.value().empty()) throw DimensionError("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<Real>(x.value().size()));
}

Tensor weighted_sum(const Tensor& x, const Matrix& w) {
  if (!x.value().same_shape(w)) {
    throw DimensionError("weighted_sum: weights " + shape_str(w) + " for input " +
                         shape_str(x.value()));
  }
  Real s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * x.value()[i];
  return Tape::record(Matrix(1, 1, s), {&x}, [x, w](const Node& o) {
    Matrix g = w;
    for (auto& v : g.data()) v *= o.grad[0];
    push(x, g);
  });
}

}  // namespace ecrl::tensor
