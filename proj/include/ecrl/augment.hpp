#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ecrl/data.hpp"
#include "ecrl/rng.hpp"

namespace ecrl::augment {

using data::FeatureSequence;
using data::SegmentAnnotation;
using tensor::Matrix;

enum class SubLabel : std::uint8_t { kLeft = 0, kSeg = 1, kRight = 2, kPad = 3 };
const char* to_string(SubLabel l);

// kSymmetric draws ratios from [1 - alpha, 1 + alpha]; kLiteral from
// [1 - alpha, alpha].
enum class RatioRange { kSymmetric, kLiteral };

struct TransformParams {
  double r_left = 1.0;
  double r_seg = 1.0;
  double r_right = 1.0;
  double alpha = 0.8;
  double spatial_noise_scale = 0.0;
  double spatial_channel_drop = 0.0;
};

// Augmented frame i was copied from original frame map[i]. PAD frames map
// to the original boundary frame next to the empty sub-video they replace
// (0 for an empty left part, T_orig - 1 for an empty right part).
struct TimestampMap {
  std::vector<std::size_t> map;
  std::vector<SubLabel> sub_label;

  std::size_t size() const { return map.size(); }
};

struct AugmentedSample {
  FeatureSequence features;
  SegmentAnnotation annotation;
  TimestampMap tmap;
  TransformParams params;
};

struct AugmentConfig {
  double alpha = 0.8;
  RatioRange range = RatioRange::kSymmetric;
  // When set, ratios come from [ratio_lo, ratio_hi] instead of alpha.
  bool override_bounds = false;
  double ratio_lo = 1.0;
  double ratio_hi = 1.0;
  double spatial_noise = 0.0;
  double spatial_drop = 0.0;
  std::size_t pad_frames = 2;
  int max_retries = 8;
};

std::pair<double, double> ratio_bounds(double alpha, RatioRange range);

// Draws r_left, r_seg, r_right independently and uniformly from the range.
TransformParams sample_transform_params(double alpha, Rng& rng,
                                        RatioRange range = RatioRange::kSymmetric);
TransformParams sample_transform_params(const AugmentConfig& cfg, Rng& rng);

struct SplitParts {
  Matrix left;   // [0, tau_s)
  Matrix seg;    // [tau_s, tau_e]
  Matrix right;  // (tau_e, T)
};
SplitParts split_video(const FeatureSequence& fs, const SegmentAnnotation& ann);

struct ResampledPart {
  Matrix frames;
  // Index into the input sub-video (or into the padding when `padded`).
  std::vector<std::size_t> source;
  bool padded = false;
};

// Output length max(1, round(r * L_in)), output j copies input
// floor(j * L_in / L_out). An empty input is first replaced by `pad_frames`
// zero frames, except at r == 1, which returns it unchanged.
ResampledPart resample_subvideo(const Matrix& sub, double r, std::size_t dim,
                                std::size_t pad_frames = 2);

// A resampled part placed in the original timeline: `offset` is the original
// index of the sub-video's first frame (for padded parts, the PAD anchor).
struct PlacedPart {
  ResampledPart part;
  SubLabel label;
  std::size_t offset;
};

struct Composed {
  FeatureSequence features;
  TimestampMap tmap;
};

// Concatenates the parts (length L') and keeps composed frames
// floor(k * L' / T) for k = 0..T-1.
Composed compose_and_fit(const std::array<PlacedPart, 3>& parts, std::size_t T);

// First and last SEG index. Throws DegenerateSampleError if none survives.
SegmentAnnotation map_boundaries(const TimestampMap& tmap);

// Adds N(0, noise_scale) to non-PAD frames and zeroes each channel (column)
// with probability channel_drop.
FeatureSequence spatial_perturb(const FeatureSequence& fs, const TimestampMap& tmap,
                                const TransformParams& params, Rng& rng);

// Deterministic temporal part of the pipeline for fixed ratios (no spatial
// step). Output length is `T` (pass the input length to keep it).
AugmentedSample apply_temporal(const FeatureSequence& fs, const SegmentAnnotation& ann,
                               const TransformParams& params, std::size_t T,
                               std::size_t pad_frames = 2);

// Full pipeline: sample ratios, split, resample, compose, fit to T, map
// boundaries, spatial perturbation. Retries with fresh ratios up to
// cfg.max_retries times when the segment vanishes, then throws
// AugmentationError.
AugmentedSample augment(const FeatureSequence& fs, const SegmentAnnotation& ann,
                        const AugmentConfig& cfg, Rng& rng);

// Sub-video label of every original frame given its annotation.
std::vector<SubLabel> labels_from_annotation(const SegmentAnnotation& ann, std::size_t T);

}  // namespace ecrl::augment
