#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "ecrl/augment.hpp"
#include "ecrl/model.hpp"

namespace ecrl::losses {

using augment::SubLabel;
using augment::TimestampMap;
using data::SegmentAnnotation;
using tensor::Matrix;
using tensor::Real;
using tensor::Tensor;

enum class PriorKind {
  kGaussian,  // normalised Gaussian of timestamp distance
  kOneHot,    // all mass on the nearest timestamp(s): every other frame is a hard negative
};

struct ConsistencyConfig {
  double sigma_prior = 5.0;
  double downweight = 0.5;  // multiplier on frames of another sub-video
  bool aug_to_orig = true;  // direction 1: augmented anchors vs original stream
  bool orig_to_aug = true;  // direction 2: original anchors vs augmented stream
  PriorKind prior = PriorKind::kGaussian;

  void validate() const;
};

// Prior over frames j at positions[j] (original-video timestamps) for an
// anchor at original timestamp `center` with sub-label `anchor_label`:
// g_j = exp(-(center - pos_j)^2 / 2 sigma^2), times `downweight` when
// labels[j] != anchor_label (PAD frames always), then normalised.
std::vector<Real> prior_weights(double center, SubLabel anchor_label,
                                std::span<const std::size_t> positions,
                                std::span<const SubLabel> labels, const ConsistencyConfig& cfg);

// Prior over the frames 0..T-1 of the original video.
std::vector<Real> gaussian_prior_weights(std::size_t i_prime, SubLabel sub_i,
                                         std::span<const SubLabel> orig_labels,
                                         const ConsistencyConfig& cfg);

// -sum_j w_j log softmax_j(cos(anchor, other_j)); anchor is 1 x D.
Tensor sscl_frame_loss(const Tensor& anchor, const Tensor& other, std::span<const Real> weights);

// Prior matrices for both directions: row i of `aug_to_orig` is the prior of
// augmented anchor i over original frames (all-zero for PAD anchors); row i
// of `orig_to_aug` is the prior of original anchor i over augmented frames.
struct ConsistencyTargets {
  Matrix aug_to_orig;
  Matrix orig_to_aug;
  std::size_t n_aug_anchors = 0;
  std::size_t n_orig_anchors = 0;

  // Value of sscl_total when both softmax distributions equal the priors:
  // the per-direction mean prior entropy, summed. sscl_total minus this is
  // the mean KL divergence to the priors.
  double entropy_floor() const;
};
ConsistencyTargets consistency_targets(const TimestampMap& tmap, const SegmentAnnotation& orig_ann,
                                       std::size_t T_orig, const ConsistencyConfig& cfg);

// Mean over non-PAD augmented anchors of the direction-1 frame loss plus
// mean over original anchors of the direction-2 frame loss.
Tensor sscl_total(const Tensor& fused_aug, const Tensor& fused_orig, const TimestampMap& tmap,
                  const SegmentAnnotation& orig_ann, const ConsistencyConfig& cfg);
Tensor sscl_total(const Tensor& fused_aug, const Tensor& fused_orig, const ConsistencyTargets& targets);

struct GroundingLossConfig {
  bool smooth_labels = false;  // 0.8 / 0.1 / 0.1 triangular kernel
  bool binary = false;         // per-frame binary cross-entropy, 1/(2T) sum
};

// Categorical start / end targets over T frames.
std::pair<std::vector<Real>, std::vector<Real>> grounding_labels(const SegmentAnnotation& ann,
                                                                 std::size_t T, bool smooth = false);

// 1/2 [CE(softmax(C^s), y^s) + CE(softmax(C^e), y^e)] over the time axis.
Tensor grounding_loss(const model::GroundingScores& scores, const SegmentAnnotation& ann,
                      const GroundingLossConfig& cfg = {});

struct LossBreakdown {
  Real l_tsg_aug = 0.0;
  Real l_tsg_orig = 0.0;
  Real l_cons = 0.0;
  Real l_overall = 0.0;
  Real lambda = 0.0;
  // Entropy floor of l_cons (see ConsistencyTargets::entropy_floor).
  Real l_cons_floor = 0.0;
};

// l_overall = l1 + l2 + lambda * l_cons. Throws TrainingAbort on a
// non-finite term.
LossBreakdown overall_loss(Real l1, Real l2, Real l_cons, Real lambda);

}  // namespace ecrl::losses
