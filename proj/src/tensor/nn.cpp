#include "ecrl/tensor/nn.hpp"

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "ecrl/errors.hpp"

namespace ecrl::tensor {

namespace {

Real sigm(Real x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const Real e = std::exp(x);
  return e / (1.0 + e);
}

void check_lstm_shapes(const LstmWeights& w, std::size_t input_cols) {
  const std::size_t h = w.wh.rows();
  if (w.wh.cols() != 4 * h || w.wx.cols() != 4 * h || w.bias.rows() != 1 ||
      w.bias.cols() != 4 * h) {
    throw DimensionError("lstm: inconsistent gate weight shapes");
  }
  if (w.wx.rows() != input_cols) {
    throw DimensionError("lstm: input width " + std::to_string(input_cols) +
                         " does not match Wx rows " + std::to_string(w.wx.rows()));
  }
}

}  // namespace

LstmState lstm_cell(const Tensor& x, const LstmState& prev, const LstmWeights& w) {
  check_lstm_shapes(w, x.cols());
  const std::size_t h = w.hidden_size();
  const Tensor z = add_row(add(matmul(x, w.wx), matmul(prev.h, w.wh)), w.bias);
  const Tensor i = sigmoid(slice_cols(z, 0, h));
  const Tensor f = sigmoid(slice_cols(z, h, 2 * h));
  const Tensor g = tanh(slice_cols(z, 2 * h, 3 * h));
  const Tensor o = sigmoid(slice_cols(z, 3 * h, 4 * h));
  Tensor c = add(mul(f, prev.c), mul(i, g));
  Tensor hn = mul(o, tanh(c));
  return {std::move(hn), std::move(c)};
}

Tensor lstm_sequence(const Tensor& x, const LstmWeights& w, bool reverse) {
  check_lstm_shapes(w, x.cols());
  const std::size_t T = x.rows();
  const std::size_t H = w.hidden_size();
  if (T == 0) throw InputError("lstm_sequence: empty input sequence");

  // Input contributions for all frames at once.
  Matrix pre(T, 4 * H);
  gemm_acc(x.value(), w.wx.value(), pre);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t k = 0; k < 4 * H; ++k) pre(t, k) += w.bias.value()[k];

  // Per-frame caches, indexed by frame t (not by step).
  Matrix gates(T, 4 * H);  // post-activation i, f, g, o
  Matrix cells(T, H);
  Matrix tanh_cells(T, H);
  Matrix hidden(T, H);
  std::vector<std::size_t> order(T);
  for (std::size_t s = 0; s < T; ++s) order[s] = reverse ? T - 1 - s : s;

  const Matrix& wh = w.wh.value();
  std::vector<Real> z(4 * H);
  for (std::size_t s = 0; s < T; ++s) {
    const std::size_t t = order[s];
    const bool first = s == 0;
    const std::size_t tp = first ? 0 : order[s - 1];
    for (std::size_t k = 0; k < 4 * H; ++k) z[k] = pre(t, k);
    if (!first) {
      for (std::size_t j = 0; j < H; ++j) {
        const Real hv = hidden(tp, j);
        if (hv == 0.0) continue;
        const Real* wrow = &wh.data()[j * 4 * H];
        for (std::size_t k = 0; k < 4 * H; ++k) z[k] += hv * wrow[k];
      }
    }
    for (std::size_t j = 0; j < H; ++j) {
      const Real ig = sigm(z[j]);
      const Real fg = sigm(z[H + j]);
      const Real gg = std::tanh(z[2 * H + j]);
      const Real og = sigm(z[3 * H + j]);
      const Real c_prev = first ? 0.0 : cells(tp, j);
      const Real c = fg * c_prev + ig * gg;
      const Real tc = std::tanh(c);
      gates(t, j) = ig;
      gates(t, H + j) = fg;
      gates(t, 2 * H + j) = gg;
      gates(t, 3 * H + j) = og;
      cells(t, j) = c;
      tanh_cells(t, j) = tc;
      hidden(t, j) = og * tc;
    }
  }

  Matrix out = hidden;
  const Tensor wx = w.wx, whh = w.wh, b = w.bias;
  return Tape::record(
      std::move(out), {&x, &wx, &whh, &b},
      [x, wx, whh, b, T, H, order = std::move(order), gates = std::move(gates),
       cells = std::move(cells), tanh_cells = std::move(tanh_cells),
       hidden = std::move(hidden)](const Node& o) {
        Matrix dz(T, 4 * H);
        std::vector<Real> dh_next(H, 0.0), dc_next(H, 0.0), dh(H);
        Matrix dwh(H, 4 * H);
        const Matrix& whv = whh.value();
        for (std::size_t s = T; s-- > 0;) {
          const std::size_t t = order[s];
          const bool first = s == 0;
          const std::size_t tp = first ? 0 : order[s - 1];
          for (std::size_t j = 0; j < H; ++j) {
            const Real dhj = o.grad(t, j) + dh_next[j];
            const Real ig = gates(t, j), fg = gates(t, H + j), gg = gates(t, 2 * H + j),
                       og = gates(t, 3 * H + j);
            const Real tc = tanh_cells(t, j);
            const Real dc = dc_next[j] + dhj * og * (1.0 - tc * tc);
            const Real c_prev = first ? 0.0 : cells(tp, j);
            dz(t, j) = dc * gg * ig * (1.0 - ig);
            dz(t, H + j) = dc * c_prev * fg * (1.0 - fg);
            dz(t, 2 * H + j) = dc * ig * (1.0 - gg * gg);
            dz(t, 3 * H + j) = dhj * tc * og * (1.0 - og);
            dc_next[j] = dc * fg;
          }
          // dh_prev = dz Wh^T ; dWh += h_prev^T dz
          for (std::size_t j = 0; j < H; ++j) {
            Real acc = 0.0;
            const Real* wrow = &whv.data()[j * 4 * H];
            for (std::size_t k = 0; k < 4 * H; ++k) acc += dz(t, k) * wrow[k];
            dh_next[j] = acc;
          }
          if (!first && whh.requires_grad()) {
            for (std::size_t j = 0; j < H; ++j) {
              const Real hv = hidden(tp, j);
              if (hv == 0.0) continue;
              for (std::size_t k = 0; k < 4 * H; ++k) dwh(j, k) += hv * dz(t, k);
            }
          }
        }
        if (x.requires_grad()) {
          Matrix dx(x.rows(), x.cols());
          gemm_nt_acc(dz, wx.value(), dx);
          x.node()->accumulate(dx);
        }
        if (wx.requires_grad()) {
          Matrix dwx(wx.rows(), wx.cols());
          gemm_tn_acc(x.value(), dz, dwx);
          wx.node()->accumulate(dwx);
        }
        if (whh.requires_grad()) whh.node()->accumulate(dwh);
        if (b.requires_grad()) {
          Matrix db(1, 4 * H);
          for (std::size_t t = 0; t < T; ++t)
            for (std::size_t k = 0; k < 4 * H; ++k) db[k] += dz(t, k);
          if (debug::corrupt_bias_gradient()) {
            for (auto& v : db.data()) v *= 1.1;
          }
          b.node()->accumulate(db);
        }
      });
}

Tensor bilstm(const Tensor& x, const BiLstmWeights& w) {
  if (x.rows() == 0) throw InputError("bilstm: empty input sequence");
  const std::array<Tensor, 2> halves{lstm_sequence(x, w.forward, false),
                                     lstm_sequence(x, w.backward, true)};
  return hconcat(halves);
}

Tensor linear(const Tensor& x, const LinearWeights& w) {
  return add_row(matmul(x, w.weight), w.bias);
}

AttentionResult self_attention_detailed(const Tensor& x, const AttentionWeights& w) {
  if (x.rows() == 0) throw InputError("self_attention: empty input sequence");
  const Tensor q = matmul(x, w.wq);
  const Tensor k = matmul(x, w.wk);
  const Tensor v = matmul(x, w.wv);
  const Real inv_sqrt_d = 1.0 / std::sqrt(static_cast<Real>(x.cols()));
  Tensor attn = softmax(scale(matmul_nt(q, k), inv_sqrt_d), Axis::kCols);
  Tensor out = add(x, matmul(attn, v));
  return {std::move(out), std::move(attn)};
}

Tensor self_attention(const Tensor& x, const AttentionWeights& w) {
  return self_attention_detailed(x, w).output;
}

}  // namespace ecrl::tensor
