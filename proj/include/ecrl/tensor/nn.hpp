#pragma once

#include <cstddef>
#include <utility>

#include "ecrl/tensor/ops.hpp"

namespace ecrl::tensor {

// Gate layout along the 4H axis: input, forget, candidate, output.
struct LstmWeights {
  Tensor wx;    // D_in x 4H
  Tensor wh;    // H x 4H
  Tensor bias;  // 1 x 4H

  std::size_t input_size() const { return wx.rows(); }
  std::size_t hidden_size() const { return wh.rows(); }
};

struct BiLstmWeights {
  LstmWeights forward;
  LstmWeights backward;
};

struct LinearWeights {
  Tensor weight;  // in x out
  Tensor bias;    // 1 x out
};

// Single-head scaled dot-product attention with a residual connection.
struct AttentionWeights {
  Tensor wq;  // D x D
  Tensor wk;
  Tensor wv;
};

struct LstmState {
  Tensor h;  // 1 x H
  Tensor c;  // 1 x H
};

// One recurrence step built from primitive ops:
//   z = x Wx + h Wh + b;  c' = f*c + i*g;  h' = o*tanh(c').
LstmState lstm_cell(const Tensor& x, const LstmState& prev, const LstmWeights& w);

// Runs the recurrence over all T rows of x (T x D_in) from zero state and
// returns T x H hidden states, row t holding the state after consuming
// frame t. With reverse=true frames are consumed T-1..0. Fused op with an
// explicit backpropagation-through-time rule.
Tensor lstm_sequence(const Tensor& x, const LstmWeights& w, bool reverse = false);

// [forward pass | backward pass], T x 2H. Throws InputError on T == 0.
Tensor bilstm(const Tensor& x, const BiLstmWeights& w);

Tensor linear(const Tensor& x, const LinearWeights& w);

struct AttentionResult {
  Tensor output;   // T x D
  Tensor weights;  // T x T, rows sum to 1
};
AttentionResult self_attention_detailed(const Tensor& x, const AttentionWeights& w);
Tensor self_attention(const Tensor& x, const AttentionWeights& w);

}  // namespace ecrl::tensor
