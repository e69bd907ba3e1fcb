#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ecrl/data.hpp"
#include "ecrl/rng.hpp"
#include "ecrl/tensor/nn.hpp"
#include "ecrl/tensor/optim.hpp"

namespace ecrl::model {

using tensor::Matrix;
using tensor::Real;
using tensor::Tensor;

struct SelfRefineConfig {
  double sigma = 5.0;
  int iterations = 3;
  // Clamp negative affinities to 0 and normalise rows to sum to 1. When off,
  // the refinement is the raw sum over E_ij v_j.
  bool row_normalize = true;

  void validate() const;
};

inline constexpr Real kRefineEps = 1e-12;

// v_i <- sum_j E_ij v_j with E = E_tem * E_sem, E_tem_ij = exp(-|i-j|^2 / 2 sigma^2)
// and E_sem the pairwise cosine similarity of the current frames. E_sem is
// recomputed before every iteration. Operates on data (no gradient).
Matrix self_refine(const Matrix& frames, const SelfRefineConfig& cfg);

struct ModelConfig {
  std::size_t input_dim = 32;  // feature width of the data
  std::size_t dim = 32;        // D: width of every encoded representation
  std::size_t hidden = 16;     // H: per-direction LSTM width
  std::size_t vocab = 64;
  SelfRefineConfig refine;
  bool use_self_refine = true;

  void validate() const;
};

struct ModelParams {
  Tensor embedding;  // vocab x D
  tensor::AttentionWeights video_attn;  // input_dim x input_dim
  tensor::AttentionWeights query_attn;  // D x D
  tensor::BiLstmWeights video_lstm;     // input_dim -> 2H
  tensor::BiLstmWeights query_lstm;     // D -> 2H
  tensor::LinearWeights video_out, query_out;  // 2H x D
  Tensor w_s;                                   // D x D fusion projection
  tensor::BiLstmWeights fusion_lstm;            // 4D -> 2H
  tensor::LinearWeights fusion_out;             // 2H x D
  tensor::LstmWeights start_lstm, end_lstm;     // D -> H
  tensor::LinearWeights start_out, end_out;     // (D + H) x 1

  // Xavier-uniform weights, zero biases (forget-gate bias 1).
  static ModelParams init(const ModelConfig& cfg, Rng& rng);
  // Stable order and names; used by the optimizer and checkpoints.
  std::vector<tensor::NamedTensor> named_parameters() const;
};

// self_refine -> self-attention -> BiLSTM -> linear, T x D.
Tensor encode_video(const Matrix& frames, const ModelParams& p, const ModelConfig& cfg);
// Embedding -> self-attention -> BiLSTM -> linear, N x D. Throws InputError
// on an out-of-vocabulary id or an empty query.
Tensor encode_query(std::span<const std::size_t> tokens, const ModelParams& p);

struct CoAttention {
  Tensor projected_query;  // Q W_S, N x D
  Tensor s;                // T x N
  Tensor s_r;              // row softmax
  Tensor s_c;              // column softmax
  Tensor a;                // S_r Q W_S, T x D
  Tensor b;                // S_r S_c^T V, T x D
  Tensor concat;           // [V; A; V*A; V*B], T x 4D
  Tensor fused;            // T x D
};
CoAttention co_attention_detailed(const Tensor& video, const Tensor& query, const ModelParams& p);
Tensor co_attention_fuse(const Tensor& video, const Tensor& query, const ModelParams& p);

// Per-frame boundary scores, each T x 1.
struct GroundingScores {
  Tensor start;
  Tensor end;
};
GroundingScores grounding_head(const Tensor& fused, const ModelParams& p);

struct Forward {
  Tensor fused;
  GroundingScores scores;
};
Forward forward(const Matrix& frames, const Tensor& query, const ModelParams& p, const ModelConfig& cfg);

struct SpanPrediction {
  std::size_t s = 0;
  std::size_t e = 0;
  Real confidence = 0.0;
  bool operator==(const SpanPrediction&) const = default;
};

// Top-n spans over all s <= e by start[s] + end[e]; ties broken by smaller s,
// then smaller e. Throws InputError for n == 0 or mismatched lengths.
std::vector<SpanPrediction> predict_topn(std::span<const Real> start, std::span<const Real> end,
                                         std::size_t n);
std::vector<SpanPrediction> predict_topn(const GroundingScores& scores, std::size_t n);

}  // namespace ecrl::model
