#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ecrl/augment.hpp"
#include "ecrl/data.hpp"
#include "ecrl/losses.hpp"
#include "ecrl/model.hpp"

namespace ecrl {

enum class AugmentMode {
  kFresh,  // new random transform for every sample in every epoch
  kFixed,  // one transform per sample, drawn once and reused
};

enum class ModelKind {
  kEcrl,
  kOracle,  // scores the ground-truth span; evaluation fixture only
};

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch = 16;
  double lr = 1e-4;
  double lambda = 5.0;
  std::uint64_t seed = 1;
  AugmentMode augment_mode = AugmentMode::kFresh;
  ModelKind model_kind = ModelKind::kEcrl;
  model::ModelConfig model;
  losses::ConsistencyConfig consistency;
  losses::GroundingLossConfig grounding;
  augment::AugmentConfig augment;

  void validate() const;
};

// Everything a command needs, parsed from flat `key = value` text.
struct RunConfig {
  data::SyntheticConfig data;
  std::size_t n_samples = 100;
  data::SplitFractions split;
  data::TestShift test_shift;
  TrainConfig train;

  // Keeps derived fields (model input width, vocabulary) in step with the
  // data settings. Called by parse/set.
  void sync();
  void validate() const;

  // Throws ConfigError for an unknown key or an unparsable value.
  void set(const std::string& key, const std::string& value);
  // Canonical text: every key in a fixed order, one `key=value` per line.
  std::string to_text() const;
  // FNV-1a of to_text().
  std::uint64_t hash() const;

  static std::vector<std::string> keys();
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
};

std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace ecrl
