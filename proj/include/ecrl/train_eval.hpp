#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "ecrl/config.hpp"
#include "ecrl/data.hpp"
#include "ecrl/losses.hpp"
#include "ecrl/model.hpp"
#include "ecrl/tensor/optim.hpp"

namespace ecrl::train {

using data::Sample;
using data::SegmentAnnotation;
using tensor::Matrix;
using tensor::Real;

// |a intersect b| / |a union b| over inclusive frame intervals.
double temporal_iou(const SegmentAnnotation& a, const SegmentAnnotation& b);

// ---- evaluation -----------------------------------------------------------

struct ScoreVectors {
  std::vector<Real> start;
  std::vector<Real> end;
};
using Scorer = std::function<ScoreVectors(const Sample&)>;

Scorer model_scorer(const model::ModelParams& params, const model::ModelConfig& cfg);
// One-hot scores at the ground-truth boundaries.
Scorer oracle_scorer();

struct SampleRecord {
  std::string id;
  SegmentAnnotation truth;
  std::vector<model::SpanPrediction> top;  // max(n_list) spans
  std::vector<double> iou;                 // IoU of each top span
  double best_iou = 0.0;
};

struct EvalReport {
  std::vector<std::size_t> n_list;
  std::vector<double> m_list;
  // recall[a][b]: R@n_list[a], IoU=m_list[b]
  std::vector<std::vector<double>> recall;
  std::vector<SampleRecord> records;

  // Throws EvalError when (n, m) was not evaluated.
  double at(std::size_t n, double m) const;
  bool monotone() const;
  // "n,m,recall" rows.
  void write_csv(std::ostream& out) const;
  // id, truth, best IoU and the top spans per sample.
  void write_details(std::ostream& out) const;
};

inline const std::vector<std::size_t> kDefaultN = {1, 5};
inline const std::vector<double> kDefaultM = {0.3, 0.5, 0.7};

// A hit at (n, m) means some span among the top n has IoU strictly greater
// than m. Throws EvalError on an empty sample set.
EvalReport evaluate(const Scorer& scorer, std::span<const Sample> samples,
                    const std::vector<std::size_t>& n_list = kDefaultN,
                    const std::vector<double>& m_list = kDefaultM);

// ---- training state and checkpoints --------------------------------------

struct TrainState {
  model::ModelParams params;
  tensor::AdamState adam;
  std::size_t epoch = 0;  // completed epochs
  double best_val = -1.0;
  std::size_t best_epoch = 0;
};

TrainState init_state(const RunConfig& cfg);

struct CheckpointRecord {
  std::uint64_t config_hash = 0;
  std::string config_text;
  TrainState state;
};

// "ECRLCKPT" | u32 version | u64 config hash | u32 entry count | entries |
// u64 FNV-1a of everything before it. Entry: u32 name length, name, u8 dtype
// (0 f64, 1 u64, 2 u8), u64 rows, u64 cols, payload. Little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;
void save_checkpoint(const std::filesystem::path& path, const RunConfig& cfg, const TrainState& state);
// Throws CheckpointError on any format, version, checksum or shape problem.
CheckpointRecord load_checkpoint(const std::filesystem::path& path);

// ---- training --------------------------------------------------------------

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  losses::LossBreakdown loss;  // means over the epoch's samples
  double val_r1_05 = 0.0;     // NaN without a validation set
};

// Forward both streams of one sample and build l1 + l2 + lambda * l_cons
// (l1 on the augmented stream, l2 on the original).
struct SampleLoss {
  tensor::Tensor total;
  losses::LossBreakdown breakdown;
};
SampleLoss sample_loss(const model::ModelParams& params, const TrainConfig& cfg, const Sample& sample,
                       const augment::AugmentedSample& aug);
// sample_loss on a fresh tape, backpropagated times `grad_scale`. Returns
// the unscaled breakdown.
losses::LossBreakdown sample_loss_backward(const model::ModelParams& params, const TrainConfig& cfg,
                                           const Sample& sample, const augment::AugmentedSample& aug,
                                           double grad_scale);

// The augmented variant used for sample `index` in `epoch` (0-based).
augment::AugmentedSample augmented_view(const TrainConfig& cfg, const Sample& sample, std::size_t index,
                                        std::size_t epoch);

// Runs epoch state.epoch + 1 in place and returns its log row. Throws
// TrainingAbort (naming the batch) on a non-finite loss.
EpochLog train_epoch(TrainState& state, const TrainConfig& cfg, std::span<const Sample> train,
                     std::span<const Sample> val);

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: keep everything in memory
  std::function<void(const EpochLog&)> on_epoch;
};

// Trains until cfg.train.epochs, starting from `state` (fresh or resumed).
// With an out_dir: appends to train_log.csv, writes last.ckpt every epoch and
// best.ckpt whenever validation R@1,IoU=0.5 improves.
std::vector<EpochLog> train(const RunConfig& cfg, TrainState& state, std::span<const Sample> train_set,
                            std::span<const Sample> val_set, const TrainOptions& opts = {});

// Finite-difference check of every parameter gradient of the overall loss
// on one synthetic pair at T=6, N=4, D=8, H=4 (other settings from `cfg`).
tensor::GradCheckReport check_overall_gradients(const RunConfig& cfg,
                                                const tensor::GradCheckOptions& opts = {});

inline constexpr const char* kLogHeader = "epoch,l_tsg_aug,l_tsg_orig,l_cons,l_overall,val_r1_05";
std::string format_log_row(const EpochLog& e);

}  // namespace ecrl::train
