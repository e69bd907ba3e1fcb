#include "ecrl/augment.hpp"

#include <cmath>
#include <random>

#include "ecrl/errors.hpp"

namespace ecrl::augment {

const char* to_string(SubLabel l) {
  switch (l) {
    case SubLabel::kLeft:
      return "LEFT";
    case SubLabel::kSeg:
      return "SEG";
    case SubLabel::kRight:
      return "RIGHT";
    case SubLabel::kPad:
      return "PAD";
  }
  return "?";
}

std::pair<double, double> ratio_bounds(double alpha, RatioRange range) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha", "must lie in (0, 1)");
  if (range == RatioRange::kSymmetric) return {1.0 - alpha, 1.0 + alpha};
  if (alpha <= 0.5) throw ConfigError("alpha", "literal ratio range [1-alpha, alpha] needs alpha > 0.5");
  return {1.0 - alpha, alpha};
}

namespace {

TransformParams draw(double lo, double hi, double alpha, Rng& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  TransformParams p;
  p.alpha = alpha;
  p.r_left = u(rng);
  p.r_seg = u(rng);
  p.r_right = u(rng);
  return p;
}

}  // namespace

TransformParams sample_transform_params(double alpha, Rng& rng, RatioRange range) {
  const auto [lo, hi] = ratio_bounds(alpha, range);
  return draw(lo, hi, alpha, rng);
}

TransformParams sample_transform_params(const AugmentConfig& cfg, Rng& rng) {
  TransformParams p;
  if (cfg.override_bounds) {
    if (!(cfg.ratio_lo > 0.0 && cfg.ratio_lo <= cfg.ratio_hi)) {
      throw ConfigError("ratio_lo", "ratio bounds must satisfy 0 < lo <= hi");
    }
    p = draw(cfg.ratio_lo, cfg.ratio_hi, cfg.alpha, rng);
  } else {
    p = sample_transform_params(cfg.alpha, rng, cfg.range);
  }
  p.spatial_noise_scale = cfg.spatial_noise;
  p.spatial_channel_drop = cfg.spatial_drop;
  return p;
}

SplitParts split_video(const FeatureSequence& fs, const SegmentAnnotation& ann) {
  const std::size_t T = fs.length();
  if (!ann.valid_for(T)) throw InputError("split_video: annotation outside video");
  return {fs.frames.slice_rows(0, ann.tau_s), fs.frames.slice_rows(ann.tau_s, ann.tau_e + 1),
          fs.frames.slice_rows(ann.tau_e + 1, T)};
}

ResampledPart resample_subvideo(const Matrix& sub, double r, std::size_t dim, std::size_t pad_frames) {
  if (!(r > 0.0)) throw InputError("resample_subvideo: ratio must be > 0");
  ResampledPart out;
  if (sub.rows() == 0 && r == 1.0) {
    out.frames = Matrix(0, dim);  // unit ratio leaves an empty part empty
    return out;
  }
  Matrix input = sub;
  if (sub.rows() == 0) {
    input = Matrix(pad_frames, dim);
    out.padded = true;
  }
  const std::size_t n_in = input.rows();
  const auto n_out = static_cast<std::size_t>(
      std::max<long long>(1, std::llround(r * static_cast<double>(n_in))));
  out.frames = Matrix(n_out, input.cols());
  out.source.resize(n_out);
  for (std::size_t j = 0; j < n_out; ++j) {
    const std::size_t src = j * n_in / n_out;
    out.source[j] = src;
    std::copy(input.row(src).begin(), input.row(src).end(), out.frames.row(j).begin());
  }
  return out;
}

Composed compose_and_fit(const std::array<PlacedPart, 3>& parts, std::size_t T) {
  std::size_t total = 0;
  for (const auto& p : parts) total += p.part.frames.rows();
  if (total == 0 || T == 0) throw InputError("compose_and_fit: nothing to compose");

  // Composed-frame bookkeeping: which part, which row inside it.
  std::vector<std::pair<std::size_t, std::size_t>> where;
  where.reserve(total);
  for (std::size_t k = 0; k < parts.size(); ++k)
    for (std::size_t j = 0; j < parts[k].part.frames.rows(); ++j) where.emplace_back(k, j);

  const std::size_t dim = parts[1].part.frames.cols();
  Composed out;
  out.features.frames = Matrix(T, dim);
  out.tmap.map.resize(T);
  out.tmap.sub_label.resize(T);
  for (std::size_t i = 0; i < T; ++i) {
    const std::size_t composed = i * total / T;
    const auto [k, j] = where[composed];
    const PlacedPart& p = parts[k];
    const auto row = p.part.frames.row(j);
    std::copy(row.begin(), row.end(), out.features.frames.row(i).begin());
    if (p.part.padded) {
      out.tmap.sub_label[i] = SubLabel::kPad;
      out.tmap.map[i] = p.offset;
    } else {
      out.tmap.sub_label[i] = p.label;
      out.tmap.map[i] = p.offset + p.part.source[j];
    }
  }
  return out;
}

SegmentAnnotation map_boundaries(const TimestampMap& tmap) {
  bool found = false;
  SegmentAnnotation ann;
  for (std::size_t i = 0; i < tmap.sub_label.size(); ++i) {
    if (tmap.sub_label[i] != SubLabel::kSeg) continue;
    if (!found) ann.tau_s = i;
    ann.tau_e = i;
    found = true;
  }
  if (!found) throw DegenerateSampleError("no segment frame survived the fit to T");
  return ann;
}

FeatureSequence spatial_perturb(const FeatureSequence& fs, const TimestampMap& tmap,
                                const TransformParams& params, Rng& rng) {
  if (params.spatial_noise_scale < 0.0) throw InputError("spatial noise scale must be >= 0");
  if (!(params.spatial_channel_drop >= 0.0 && params.spatial_channel_drop < 1.0)) {
    throw InputError("spatial channel drop must lie in [0, 1)");
  }
  FeatureSequence out = fs;
  const std::size_t T = fs.length(), D = fs.dim();
  if (params.spatial_noise_scale > 0.0) {
    std::normal_distribution<double> nd(0.0, params.spatial_noise_scale);
    for (std::size_t t = 0; t < T; ++t) {
      if (t < tmap.sub_label.size() && tmap.sub_label[t] == SubLabel::kPad) continue;
      for (auto& v : out.frames.row(t)) v += nd(rng);
    }
  }
  if (params.spatial_channel_drop > 0.0) {
    std::bernoulli_distribution drop(params.spatial_channel_drop);
    for (std::size_t d = 0; d < D; ++d) {
      if (!drop(rng)) continue;
      for (std::size_t t = 0; t < T; ++t) out.frames(t, d) = 0.0;
    }
  }
  return out;
}

AugmentedSample apply_temporal(const FeatureSequence& fs, const SegmentAnnotation& ann,
                               const TransformParams& params, std::size_t T, std::size_t pad_frames) {
  const std::size_t T_orig = fs.length();
  const std::size_t D = fs.dim();
  const SplitParts sp = split_video(fs, ann);
  std::array<PlacedPart, 3> parts{
      PlacedPart{resample_subvideo(sp.left, params.r_left, D, pad_frames), SubLabel::kLeft, 0},
      PlacedPart{resample_subvideo(sp.seg, params.r_seg, D, pad_frames), SubLabel::kSeg, ann.tau_s},
      PlacedPart{resample_subvideo(sp.right, params.r_right, D, pad_frames), SubLabel::kRight,
                 ann.tau_e + 1}};
  if (parts[2].part.padded) parts[2].offset = T_orig - 1;
  Composed c = compose_and_fit(parts, T);
  AugmentedSample out;
  out.annotation = map_boundaries(c.tmap);
  out.features = std::move(c.features);
  out.tmap = std::move(c.tmap);
  out.params = params;
  return out;
}

AugmentedSample augment(const FeatureSequence& fs, const SegmentAnnotation& ann,
                        const AugmentConfig& cfg, Rng& rng) {
  const std::size_t T = fs.length();
  for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    const TransformParams params = sample_transform_params(cfg, rng);
    AugmentedSample s;
    try {
      s = apply_temporal(fs, ann, params, T, cfg.pad_frames);
    } catch (const DegenerateSampleError&) {
      continue;
    }
    s.features = spatial_perturb(s.features, s.tmap, params, rng);
    return s;
  }
  throw AugmentationError("segment erased by every sampled transform (" +
                          std::to_string(cfg.max_retries + 1) + " attempts)");
}

std::vector<SubLabel> labels_from_annotation(const SegmentAnnotation& ann, std::size_t T) {
  std::vector<SubLabel> labels(T);
  for (std::size_t t = 0; t < T; ++t) {
    labels[t] = t < ann.tau_s ? SubLabel::kLeft : (t <= ann.tau_e ? SubLabel::kSeg : SubLabel::kRight);
  }
  return labels;
}

}  // namespace ecrl::augment
