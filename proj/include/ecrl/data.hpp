#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ecrl/rng.hpp"
#include "ecrl/tensor/matrix.hpp"

namespace ecrl::data {

using tensor::Matrix;

// T x D per-frame (per-clip) features.
struct FeatureSequence {
  Matrix frames;

  std::size_t length() const { return frames.rows(); }
  std::size_t dim() const { return frames.cols(); }
  // T >= 4, D >= 2, finite. Throws InputError.
  void validate() const;
  bool operator==(const FeatureSequence&) const = default;
};

struct QueryTokens {
  std::vector<std::size_t> ids;
  bool operator==(const QueryTokens&) const = default;
};

// Inclusive frame indices.
struct SegmentAnnotation {
  std::size_t tau_s = 0;
  std::size_t tau_e = 0;

  std::size_t length() const { return tau_e - tau_s + 1; }
  bool valid_for(std::size_t T) const { return tau_s <= tau_e && tau_e < T; }
  bool operator==(const SegmentAnnotation&) const = default;
};

struct SyntheticConfig {
  std::size_t T = 48;
  std::size_t D = 32;
  std::size_t vocab = 64;
  std::size_t prototypes = 8;
  std::size_t backgrounds = 4;
  double seg_min = 0.15;  // segment length as a fraction of T
  double seg_max = 0.45;
  double noise = 0.2;
  double signal = 1.0;
  std::size_t query_min = 3;
  std::size_t query_max = 8;
  std::uint64_t seed = 7;

  // Throws ConfigError naming the offending key.
  void validate() const;
};

struct GeneratedPair {
  FeatureSequence features;
  QueryTokens query;
  SegmentAnnotation annotation;
  std::size_t prototype = 0;
};

// Fixed random vectors shared by every sample of a dataset: rows
// [0, prototypes) are activity prototypes, the rest background prototypes.
Matrix prototype_bank(const SyntheticConfig& cfg);

// One planted-segment sample: frames inside [tau_s, tau_e] are the activity
// prototype plus noise, frames left/right of it are (distinct) background
// prototypes plus noise. The query carries exactly one token from
// [0, prototypes) naming the activity; remaining tokens are fillers from
// [prototypes, vocab). Values are rounded to float32 so that they survive
// the feature-file round trip bit-exactly.
GeneratedPair generate_synthetic_pair(const SyntheticConfig& cfg, const Matrix& bank, Rng& rng);
GeneratedPair generate_synthetic_pair(const SyntheticConfig& cfg, Rng& rng);

// Inverse of the query encoding. Throws InputError if no content token.
std::size_t recover_prototype(const QueryTokens& q, const SyntheticConfig& cfg);

// ---- feature files ---------------------------------------------------------
// "ECRLFEAT" | u32 version=1 | u32 T | u32 D | T*D float32, all little-endian.
inline constexpr char kFeatureMagic[8] = {'E', 'C', 'R', 'L', 'F', 'E', 'A', 'T'};
inline constexpr std::uint32_t kFeatureVersion = 1;

void write_features(const std::filesystem::path& path, const FeatureSequence& fs);
FeatureSequence read_features(const std::filesystem::path& path);
// Header only: returns (T, D).
std::pair<std::size_t, std::size_t> read_feature_shape(const std::filesystem::path& path);

// ---- manifests ------------------------------------------------------------
struct ManifestRecord {
  std::string id;
  std::string path;  // relative to the manifest's directory
  QueryTokens tokens;
  SegmentAnnotation annotation;
  std::size_t T = 0;
  bool operator==(const ManifestRecord&) const = default;
};

struct DatasetManifest {
  std::string split;  // "train", "val", "test" or the file stem
  std::filesystem::path root;
  std::vector<ManifestRecord> records;

  std::filesystem::path feature_path(const ManifestRecord& r) const { return root / r.path; }
};

// Tab-separated: id, path, space-separated token ids, tau_s, tau_e, T.
void write_manifest(const std::filesystem::path& path, const DatasetManifest& m);
// Validates every record (paths resolve, header T matches, annotation in
// range). Throws ManifestError citing line / record index, IoError when the
// file cannot be opened.
DatasetManifest read_manifest(const std::filesystem::path& path);

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

// Per-split sample counts; the test split takes the rounding remainder.
struct SplitCounts {
  std::size_t train = 0, val = 0, test = 0;
};
SplitCounts split_counts(std::size_t n, const SplitFractions& fracs);

// Optional distribution shift for the test split: every test sample is
// replaced by a temporally transformed copy whose three sub-video ratios are
// drawn from [lo, hi] (with the annotation moved accordingly).
struct TestShift {
  bool enabled = false;
  double lo = 1.85;
  double hi = 3.0;
};

struct GeneratedDataset {
  DatasetManifest train, val, test;
};

// Writes features/<id>.feat plus train.tsv / val.tsv / test.tsv under
// out_dir. Sample k uses the RNG stream derive_seed(cfg.seed, {k}).
GeneratedDataset generate_dataset(const SyntheticConfig& cfg, std::size_t n_samples,
                                  const SplitFractions& fracs, const std::filesystem::path& out_dir,
                                  const TestShift& shift = {});

// A manifest record with its features loaded.
struct Sample {
  std::string id;
  FeatureSequence features;
  QueryTokens query;
  SegmentAnnotation annotation;
};

std::vector<Sample> load_samples(const DatasetManifest& m);

}  // namespace ecrl::data
