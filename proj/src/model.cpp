#include "ecrl/model.hpp"

#include <algorithm>
#include <cmath>

#include "ecrl/errors.hpp"

namespace ecrl::model {

using namespace ecrl::tensor;

void SelfRefineConfig::validate() const {
  if (!(sigma > 0.0)) throw ConfigError("refine_sigma", "must be > 0");
  if (iterations < 0) throw ConfigError("refine_iterations", "must be >= 0");
}

void ModelConfig::validate() const {
  if (input_dim == 0) throw ConfigError("D", "must be >= 1");
  if (dim == 0) throw ConfigError("model_dim", "must be >= 1");
  if (hidden == 0) throw ConfigError("H", "must be >= 1");
  if (vocab == 0) throw ConfigError("vocab", "must be >= 1");
  refine.validate();
}

Matrix self_refine(const Matrix& frames, const SelfRefineConfig& cfg) {
  const std::size_t T = frames.rows(), D = frames.cols();
  if (T == 0) throw InputError("self_refine: empty sequence");
  Matrix tem(T, T);
  for (std::size_t i = 0; i < T; ++i)
    for (std::size_t j = 0; j < T; ++j) {
      const double d = static_cast<double>(i) - static_cast<double>(j);
      tem(i, j) = std::exp(-d * d / (2.0 * cfg.sigma * cfg.sigma));
    }

  Matrix v = frames;
  std::vector<Real> norm(T);
  Matrix e(T, T);
  for (int it = 0; it < cfg.iterations; ++it) {
    for (std::size_t i = 0; i < T; ++i) {
      Real s = 0.0;
      for (Real x : v.row(i)) s += x * x;
      norm[i] = std::sqrt(s);
    }
    for (std::size_t i = 0; i < T; ++i) {
      Real row_sum = 0.0;
      for (std::size_t j = 0; j < T; ++j) {
        Real cos = 0.0;
        if (norm[i] >= kCosineEps && norm[j] >= kCosineEps) {
          Real dot = 0.0;
          for (std::size_t d = 0; d < D; ++d) dot += v(i, d) * v(j, d);
          cos = dot / (norm[i] * norm[j]);
        }
        Real w = tem(i, j) * cos;
        if (cfg.row_normalize) w = std::max(w, 0.0);
        e(i, j) = w;
        row_sum += w;
      }
      if (cfg.row_normalize)
        for (std::size_t j = 0; j < T; ++j) e(i, j) /= row_sum + kRefineEps;
    }
    Matrix next(T, D);
    gemm_acc(e, v, next);
    v = std::move(next);
  }
  return v;
}

namespace {

Matrix xavier(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-a, a);
  Matrix m(fan_in, fan_out);
  for (auto& x : m.data()) x = u(rng);
  return m;
}

LstmWeights init_lstm(std::size_t din, std::size_t h, Rng& rng) {
  Matrix bias(1, 4 * h);
  for (std::size_t k = h; k < 2 * h; ++k) bias(0, k) = 1.0;
  return {Tensor::parameter(xavier(din, 4 * h, rng)), Tensor::parameter(xavier(h, 4 * h, rng)),
          Tensor::parameter(std::move(bias))};
}

BiLstmWeights init_bilstm(std::size_t din, std::size_t h, Rng& rng) {
  BiLstmWeights w;
  w.forward = init_lstm(din, h, rng);
  w.backward = init_lstm(din, h, rng);
  return w;
}

LinearWeights init_linear(std::size_t in, std::size_t out, Rng& rng) {
  return {Tensor::parameter(xavier(in, out, rng)), Tensor::parameter(Matrix(1, out))};
}

AttentionWeights init_attention(std::size_t d, Rng& rng) {
  AttentionWeights w;
  w.wq = Tensor::parameter(xavier(d, d, rng));
  w.wk = Tensor::parameter(xavier(d, d, rng));
  w.wv = Tensor::parameter(xavier(d, d, rng));
  return w;
}

void push_lstm(std::vector<NamedTensor>& out, const std::string& prefix, const LstmWeights& w) {
  out.push_back({prefix + ".wx", w.wx});
  out.push_back({prefix + ".wh", w.wh});
  out.push_back({prefix + ".bias", w.bias});
}

void push_bilstm(std::vector<NamedTensor>& out, const std::string& prefix, const BiLstmWeights& w) {
  push_lstm(out, prefix + ".fwd", w.forward);
  push_lstm(out, prefix + ".bwd", w.backward);
}

void push_linear(std::vector<NamedTensor>& out, const std::string& prefix, const LinearWeights& w) {
  out.push_back({prefix + ".weight", w.weight});
  out.push_back({prefix + ".bias", w.bias});
}

void push_attention(std::vector<NamedTensor>& out, const std::string& prefix, const AttentionWeights& w) {
  out.push_back({prefix + ".wq", w.wq});
  out.push_back({prefix + ".wk", w.wk});
  out.push_back({prefix + ".wv", w.wv});
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t Din = cfg.input_dim, D = cfg.dim, H = cfg.hidden;
  ModelParams p;
  p.embedding = Tensor::parameter(xavier(cfg.vocab, D, rng));
  p.video_attn = init_attention(Din, rng);
  p.query_attn = init_attention(D, rng);
  p.video_lstm = init_bilstm(Din, H, rng);
  p.query_lstm = init_bilstm(D, H, rng);
  p.video_out = init_linear(2 * H, D, rng);
  p.query_out = init_linear(2 * H, D, rng);
  p.w_s = Tensor::parameter(xavier(D, D, rng));
  p.fusion_lstm = init_bilstm(4 * D, H, rng);
  p.fusion_out = init_linear(2 * H, D, rng);
  p.start_lstm = init_lstm(D, H, rng);
  p.end_lstm = init_lstm(D, H, rng);
  p.start_out = init_linear(D + H, 1, rng);
  p.end_out = init_linear(D + H, 1, rng);
  return p;
}

std::vector<NamedTensor> ModelParams::named_parameters() const {
  std::vector<NamedTensor> out;
  out.push_back({"embedding", embedding});
  push_attention(out, "video_attn", video_attn);
  push_attention(out, "query_attn", query_attn);
  push_bilstm(out, "video_lstm", video_lstm);
  push_bilstm(out, "query_lstm", query_lstm);
  push_linear(out, "video_out", video_out);
  push_linear(out, "query_out", query_out);
  out.push_back({"w_s", w_s});
  push_bilstm(out, "fusion_lstm", fusion_lstm);
  push_linear(out, "fusion_out", fusion_out);
  push_lstm(out, "start_lstm", start_lstm);
  push_lstm(out, "end_lstm", end_lstm);
  push_linear(out, "start_out", start_out);
  push_linear(out, "end_out", end_out);
  return out;
}

Tensor encode_video(const Matrix& frames, const ModelParams& p, const ModelConfig& cfg) {
  if (frames.rows() == 0) throw InputError("encode_video: empty sequence");
  if (frames.cols() != cfg.input_dim) {
    throw DimensionError("encode_video: feature width " + std::to_string(frames.cols()) +
                         " != configured " + std::to_string(cfg.input_dim));
  }
  Tensor x(cfg.use_self_refine ? self_refine(frames, cfg.refine) : frames);
  x = self_attention(x, p.video_attn);
  return linear(bilstm(x, p.video_lstm), p.video_out);
}

Tensor encode_query(std::span<const std::size_t> tokens, const ModelParams& p) {
  if (tokens.empty()) throw InputError("encode_query: empty query");
  Tensor x = gather_rows(p.embedding, tokens);
  x = self_attention(x, p.query_attn);
  return linear(bilstm(x, p.query_lstm), p.query_out);
}

CoAttention co_attention_detailed(const Tensor& video, const Tensor& query, const ModelParams& p) {
  CoAttention c;
  c.projected_query = matmul(query, p.w_s);
  c.s = matmul_nt(video, c.projected_query);
  c.s_r = softmax(c.s, Axis::kCols);
  c.s_c = softmax(c.s, Axis::kRows);
  c.a = matmul(c.s_r, c.projected_query);
  c.b = matmul(matmul_nt(c.s_r, c.s_c), video);
  const Tensor parts[] = {video, c.a, mul(video, c.a), mul(video, c.b)};
  c.concat = hconcat(parts);
  c.fused = linear(bilstm(c.concat, p.fusion_lstm), p.fusion_out);
  return c;
}

Tensor co_attention_fuse(const Tensor& video, const Tensor& query, const ModelParams& p) {
  return co_attention_detailed(video, query, p).fused;
}

GroundingScores grounding_head(const Tensor& fused, const ModelParams& p) {
  const Tensor hs = lstm_sequence(fused, p.start_lstm);
  const Tensor he = lstm_sequence(fused, p.end_lstm);
  const Tensor s_in[] = {fused, hs};
  const Tensor e_in[] = {fused, he};
  return {linear(hconcat(s_in), p.start_out), linear(hconcat(e_in), p.end_out)};
}

Forward forward(const Matrix& frames, const Tensor& query, const ModelParams& p, const ModelConfig& cfg) {
  Forward f;
  f.fused = co_attention_fuse(encode_video(frames, p, cfg), query, p);
  f.scores = grounding_head(f.fused, p);
  return f;
}

std::vector<SpanPrediction> predict_topn(std::span<const Real> start, std::span<const Real> end,
                                         std::size_t n) {
  if (n == 0) throw InputError("predict_topn: n must be >= 1");
  if (start.size() != end.size() || start.empty()) {
    throw InputError("predict_topn: start/end scores must be non-empty and equally long");
  }
  const std::size_t T = start.size();
  std::vector<SpanPrediction> all;
  all.reserve(T * (T + 1) / 2);
  for (std::size_t s = 0; s < T; ++s)
    for (std::size_t e = s; e < T; ++e) all.push_back({s, e, start[s] + end[e]});
  const auto better = [](const SpanPrediction& a, const SpanPrediction& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.s != b.s) return a.s < b.s;
    return a.e < b.e;
  };
  const std::size_t k = std::min(n, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), better);
  all.resize(k);
  return all;
}

std::vector<SpanPrediction> predict_topn(const GroundingScores& scores, std::size_t n) {
  return predict_topn(scores.start.value().data(), scores.end.value().data(), n);
}

}  // namespace ecrl::model
