#include "ecrl/losses.hpp"

#include <cmath>
#include <limits>

#include "ecrl/errors.hpp"

namespace ecrl::losses {

using namespace ecrl::tensor;

void ConsistencyConfig::validate() const {
  if (!(sigma_prior > 0.0)) throw ConfigError("sigma_prior", "must be > 0");
  if (!(downweight > 0.0 && downweight <= 1.0)) throw ConfigError("downweight", "must lie in (0, 1]");
}

std::vector<Real> prior_weights(double center, SubLabel anchor_label,
                                std::span<const std::size_t> positions,
                                std::span<const SubLabel> labels, const ConsistencyConfig& cfg) {
  if (positions.size() != labels.size() || positions.empty()) {
    throw InputError("prior_weights: positions and labels must be non-empty and equally long");
  }
  const std::size_t n = positions.size();
  std::vector<Real> w(n, 0.0);
  if (cfg.prior == PriorKind::kOneHot) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) best = std::min(best, std::abs(center - static_cast<double>(positions[j])));
    std::size_t hits = 0;
    for (std::size_t j = 0; j < n; ++j) hits += std::abs(center - static_cast<double>(positions[j])) == best;
    for (std::size_t j = 0; j < n; ++j)
      if (std::abs(center - static_cast<double>(positions[j])) == best) w[j] = 1.0 / static_cast<double>(hits);
    return w;
  }
  const double two_var = 2.0 * cfg.sigma_prior * cfg.sigma_prior;
  Real total = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double d = center - static_cast<double>(positions[j]);
    double g = std::exp(-d * d / two_var);
    if (labels[j] == SubLabel::kPad || labels[j] != anchor_label) g *= cfg.downweight;
    w[j] = g;
    total += g;
  }
  for (auto& x : w) x /= total;
  return w;
}

std::vector<Real> gaussian_prior_weights(std::size_t i_prime, SubLabel sub_i,
                                         std::span<const SubLabel> orig_labels,
                                         const ConsistencyConfig& cfg) {
  const std::size_t T = orig_labels.size();
  if (i_prime >= T) throw InputError("gaussian_prior_weights: i' outside the video");
  std::vector<std::size_t> pos(T);
  for (std::size_t j = 0; j < T; ++j) pos[j] = j;
  return prior_weights(static_cast<double>(i_prime), sub_i, pos, orig_labels, cfg);
}

Tensor sscl_frame_loss(const Tensor& anchor, const Tensor& other, std::span<const Real> weights) {
  if (anchor.rows() != 1) throw DimensionError("sscl_frame_loss: anchor must be 1 x D");
  if (weights.size() != other.rows()) throw DimensionError("sscl_frame_loss: weight count != frames");
  const Tensor logp = log_softmax(cosine_matrix(anchor, other), Axis::kCols);
  Matrix w(1, weights.size());
  for (std::size_t j = 0; j < weights.size(); ++j) w(0, j) = -weights[j];
  return weighted_sum(logp, w);
}

ConsistencyTargets consistency_targets(const TimestampMap& tmap, const SegmentAnnotation& orig_ann,
                                       std::size_t T_orig, const ConsistencyConfig& cfg) {
  const std::size_t T_aug = tmap.size();
  const auto orig_labels = augment::labels_from_annotation(orig_ann, T_orig);
  ConsistencyTargets t;
  t.aug_to_orig = Matrix(T_aug, T_orig);
  t.orig_to_aug = Matrix(T_orig, T_aug);
  if (cfg.aug_to_orig) {
    std::vector<std::size_t> pos(T_orig);
    for (std::size_t j = 0; j < T_orig; ++j) pos[j] = j;
    for (std::size_t i = 0; i < T_aug; ++i) {
      if (tmap.sub_label[i] == SubLabel::kPad) continue;
      const auto w = prior_weights(static_cast<double>(tmap.map[i]), tmap.sub_label[i], pos, orig_labels, cfg);
      std::copy(w.begin(), w.end(), t.aug_to_orig.row(i).begin());
      ++t.n_aug_anchors;
    }
  }
  if (cfg.orig_to_aug) {
    for (std::size_t i = 0; i < T_orig; ++i) {
      const auto w = prior_weights(static_cast<double>(i), orig_labels[i], tmap.map, tmap.sub_label, cfg);
      std::copy(w.begin(), w.end(), t.orig_to_aug.row(i).begin());
      ++t.n_orig_anchors;
    }
  }
  return t;
}

double ConsistencyTargets::entropy_floor() const {
  const auto mean_entropy = [](const Matrix& w, std::size_t n) {
    if (n == 0) return 0.0;
    double h = 0.0;
    for (double x : w.data())
      if (x > 0.0) h -= x * std::log(x);
    return h / static_cast<double>(n);
  };
  return mean_entropy(aug_to_orig, n_aug_anchors) + mean_entropy(orig_to_aug, n_orig_anchors);
}

Tensor sscl_total(const Tensor& fused_aug, const Tensor& fused_orig, const ConsistencyTargets& t) {
  if (fused_aug.cols() != fused_orig.cols()) throw DimensionError("sscl_total: feature widths differ");
  if (t.aug_to_orig.rows() != fused_aug.rows() || t.aug_to_orig.cols() != fused_orig.rows()) {
    throw DimensionError("sscl_total: targets do not match the stream lengths");
  }
  Tensor total(Matrix(1, 1));
  if (t.n_aug_anchors > 0) {
    const Tensor logp = log_softmax(cosine_matrix(fused_aug, fused_orig), Axis::kCols);
    Matrix w = t.aug_to_orig;
    for (auto& x : w.data()) x *= -1.0 / static_cast<double>(t.n_aug_anchors);
    total = add(total, weighted_sum(logp, w));
  }
  if (t.n_orig_anchors > 0) {
    const Tensor logp = log_softmax(cosine_matrix(fused_orig, fused_aug), Axis::kCols);
    Matrix w = t.orig_to_aug;
    for (auto& x : w.data()) x *= -1.0 / static_cast<double>(t.n_orig_anchors);
    total = add(total, weighted_sum(logp, w));
  }
  return total;
}

Tensor sscl_total(const Tensor& fused_aug, const Tensor& fused_orig, const TimestampMap& tmap,
                  const SegmentAnnotation& orig_ann, const ConsistencyConfig& cfg) {
  if (fused_aug.rows() != tmap.size()) throw DimensionError("sscl_total: augmented stream / map length");
  return sscl_total(fused_aug, fused_orig, consistency_targets(tmap, orig_ann, fused_orig.rows(), cfg));
}

std::pair<std::vector<Real>, std::vector<Real>> grounding_labels(const SegmentAnnotation& ann,
                                                                 std::size_t T, bool smooth) {
  if (!ann.valid_for(T)) throw InputError("grounding_labels: annotation outside video");
  const auto make = [&](std::size_t at) {
    std::vector<Real> y(T, 0.0);
    if (!smooth) {
      y[at] = 1.0;
      return y;
    }
    y[at] = 0.8;
    if (at > 0) y[at - 1] = 0.1;
    if (at + 1 < T) y[at + 1] = 0.1;
    Real s = 0.0;
    for (Real v : y) s += v;
    for (auto& v : y) v /= s;
    return y;
  };
  return {make(ann.tau_s), make(ann.tau_e)};
}

namespace {

Matrix column(const std::vector<Real>& v) {
  Matrix m(v.size(), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m(i, 0) = v[i];
  return m;
}

Tensor categorical(const Tensor& scores, const std::vector<Real>& y) {
  Matrix w = column(y);
  for (auto& x : w.data()) x = -x;
  return weighted_sum(log_softmax(scores, Axis::kRows), w);
}

Tensor binary(const Tensor& scores, const std::vector<Real>& y) {
  Matrix pos = column(y), neg = column(y);
  for (auto& x : pos.data()) x = -x;
  for (auto& x : neg.data()) x = x - 1.0;
  const Tensor lp = log(sigmoid(scores));
  const Tensor ln = log(sigmoid(scale(scores, -1.0)));
  return add(weighted_sum(lp, pos), weighted_sum(ln, neg));
}

}  // namespace

Tensor grounding_loss(const model::GroundingScores& scores, const SegmentAnnotation& ann,
                      const GroundingLossConfig& cfg) {
  const std::size_t T = scores.start.rows();
  if (scores.end.rows() != T || scores.start.cols() != 1 || scores.end.cols() != 1) {
    throw DimensionError("grounding_loss: scores must be two T x 1 columns");
  }
  const auto [ys, ye] = grounding_labels(ann, T, cfg.smooth_labels);
  if (cfg.binary) {
    return scale(add(binary(scores.start, ys), binary(scores.end, ye)), 1.0 / (2.0 * static_cast<double>(T)));
  }
  return scale(add(categorical(scores.start, ys), categorical(scores.end, ye)), 0.5);
}

LossBreakdown overall_loss(Real l1, Real l2, Real l_cons, Real lambda) {
  if (!std::isfinite(l1) || !std::isfinite(l2) || !std::isfinite(l_cons) || !std::isfinite(lambda)) {
    throw TrainingAbort("non-finite loss term (l_tsg_aug=" + std::to_string(l1) +
                        ", l_tsg_orig=" + std::to_string(l2) + ", l_cons=" + std::to_string(l_cons) + ")");
  }
  return {l1, l2, l_cons, l1 + l2 + lambda * l_cons, lambda};
}

}  // namespace ecrl::losses
