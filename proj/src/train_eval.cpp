#include "ecrl/train_eval.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>

#include "ecrl/errors.hpp"

namespace ecrl::train {

using namespace ecrl::tensor;

double temporal_iou(const SegmentAnnotation& a, const SegmentAnnotation& b) {
  if (a.tau_s > a.tau_e || b.tau_s > b.tau_e) throw InputError("temporal_iou: span with start > end");
  const std::size_t lo = std::max(a.tau_s, b.tau_s), hi = std::min(a.tau_e, b.tau_e);
  const std::size_t inter = hi >= lo ? hi - lo + 1 : 0;
  const std::size_t uni = a.length() + b.length() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

// ---- evaluation -----------------------------------------------------------

Scorer model_scorer(const model::ModelParams& params, const model::ModelConfig& cfg) {
  return [&params, cfg](const Sample& s) {
    const Tensor q = model::encode_query(s.query.ids, params);
    const auto f = model::forward(s.features.frames, q, params, cfg);
    return ScoreVectors{f.scores.start.value().data(), f.scores.end.value().data()};
  };
}

Scorer oracle_scorer() {
  return [](const Sample& s) {
    const std::size_t T = s.features.length();
    ScoreVectors v{std::vector<Real>(T, 0.0), std::vector<Real>(T, 0.0)};
    v.start[s.annotation.tau_s] = 1.0;
    v.end[s.annotation.tau_e] = 1.0;
    return v;
  };
}

namespace {

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

double EvalReport::at(std::size_t n, double m) const {
  for (std::size_t a = 0; a < n_list.size(); ++a)
    for (std::size_t b = 0; b < m_list.size(); ++b)
      if (n_list[a] == n && m_list[b] == m) return recall[a][b];
  throw EvalError("R@" + std::to_string(n) + ",IoU=" + fmt(m) + " was not evaluated");
}

bool EvalReport::monotone() const {
  for (std::size_t a = 0; a < n_list.size(); ++a)
    for (std::size_t b = 0; b < m_list.size(); ++b)
      for (std::size_t a2 = 0; a2 < n_list.size(); ++a2)
        for (std::size_t b2 = 0; b2 < m_list.size(); ++b2) {
          if (n_list[a] <= n_list[a2] && m_list[b] >= m_list[b2] && recall[a][b] > recall[a2][b2]) return false;
        }
  return true;
}

void EvalReport::write_csv(std::ostream& out) const {
  out << "n,m,recall\n";
  for (std::size_t a = 0; a < n_list.size(); ++a)
    for (std::size_t b = 0; b < m_list.size(); ++b) out << n_list[a] << ',' << fmt(m_list[b]) << ',' << fmt(recall[a][b]) << '\n';
}

void EvalReport::write_details(std::ostream& out) const {
  out << "id,tau_s,tau_e,best_iou,top_spans\n";
  for (const auto& r : records) {
    out << r.id << ',' << r.truth.tau_s << ',' << r.truth.tau_e << ',' << fmt(r.best_iou) << ',';
    for (std::size_t k = 0; k < r.top.size(); ++k) {
      out << (k ? " " : "") << r.top[k].s << '-' << r.top[k].e << ':' << fmt(r.top[k].confidence);
    }
    out << '\n';
  }
}

EvalReport evaluate(const Scorer& scorer, std::span<const Sample> samples, const std::vector<std::size_t>& n_list,
                    const std::vector<double>& m_list) {
  if (samples.empty()) throw EvalError("evaluate: no samples");
  if (n_list.empty() || m_list.empty()) throw EvalError("evaluate: empty n or m list");
  for (std::size_t n : n_list)
    if (n == 0) throw EvalError("evaluate: n must be >= 1");
  const std::size_t max_n = *std::max_element(n_list.begin(), n_list.end());

  EvalReport rep;
  rep.n_list = n_list;
  rep.m_list = m_list;
  rep.recall.assign(n_list.size(), std::vector<double>(m_list.size(), 0.0));
  for (const Sample& s : samples) {
    const ScoreVectors sv = scorer(s);
    if (sv.start.size() != s.features.length()) throw EvalError("scorer length mismatch for sample " + s.id);
    SampleRecord rec;
    rec.id = s.id;
    rec.truth = s.annotation;
    rec.top = model::predict_topn(sv.start, sv.end, max_n);
    for (const auto& p : rec.top) {
      rec.iou.push_back(temporal_iou({p.s, p.e}, s.annotation));
      rec.best_iou = std::max(rec.best_iou, rec.iou.back());
    }
    for (std::size_t a = 0; a < n_list.size(); ++a)
      for (std::size_t b = 0; b < m_list.size(); ++b) {
        const std::size_t k = std::min(n_list[a], rec.iou.size());
        if (std::any_of(rec.iou.begin(), rec.iou.begin() + static_cast<std::ptrdiff_t>(k),
                        [&](double iou) { return iou > m_list[b]; })) {
          rep.recall[a][b] += 1.0;
        }
      }
    rep.records.push_back(std::move(rec));
  }
  for (auto& row : rep.recall)
    for (auto& r : row) r /= static_cast<double>(samples.size());
  return rep;
}

// ---- state and checkpoints -----------------------------------------------

TrainState init_state(const RunConfig& cfg) {
  TrainState st;
  Rng rng = make_rng(cfg.train.seed, {0x1417});
  st.params = model::ModelParams::init(cfg.train.model, rng);
  const auto named = st.params.named_parameters();
  st.adam = AdamState::for_params(named);
  return st;
}

namespace {

constexpr char kMagic[8] = {'E', 'C', 'R', 'L', 'C', 'K', 'P', 'T'};
enum DType : std::uint8_t { kF64 = 0, kU64 = 1, kU8 = 2 };

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void bytes(const std::string& s) { buf_ += s; }
  void entry(const std::string& name, DType t, std::size_t rows, std::size_t cols) {
    u32(static_cast<std::uint32_t>(name.size()));
    bytes(name);
    u8(t);
    u64(rows);
    u64(cols);
    ++entries_;
  }
  void matrix(const std::string& name, const Matrix& m) {
    entry(name, kF64, m.rows(), m.cols());
    for (double v : m.data()) u64(std::bit_cast<std::uint64_t>(v));
  }
  void scalar_u64(const std::string& name, std::uint64_t v) {
    entry(name, kU64, 1, 1);
    u64(v);
  }
  void scalar_f64(const std::string& name, double v) {
    entry(name, kF64, 1, 1);
    u64(std::bit_cast<std::uint64_t>(v));
  }
  void text(const std::string& name, const std::string& s) {
    entry(name, kU8, 1, s.size());
    bytes(s);
  }
  std::string& buffer() { return buf_; }
  std::uint32_t entries() const { return entries_; }

 private:
  std::string buf_;
  std::uint32_t entries_ = 0;
};

class Reader {
 public:
  explicit Reader(const std::string& b) : buf_(b) {}
  void need(std::size_t n, const char* what) const {
    if (pos_ + n > buf_.size()) {
      throw CheckpointError(std::string("checkpoint truncated while reading ") + what + " at byte " +
                            std::to_string(pos_));
    }
  }
  std::uint8_t u8() {
    need(1, "u8");
    return static_cast<std::uint8_t>(buf_[pos_++]);
  }
  std::uint32_t u32() {
    need(4, "u32");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<std::uint8_t>(buf_[pos_++])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8, "u64");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<std::uint8_t>(buf_[pos_++])) << (8 * i);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n, "bytes");
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::string& buf_;
  std::size_t pos_ = 0;
};

struct Entry {
  DType type;
  std::size_t rows, cols;
  std::string raw;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const RunConfig& cfg, const TrainState& st) {
  Writer body;
  body.text("config", cfg.to_text());
  body.scalar_u64("epoch", st.epoch);
  body.scalar_f64("best_val", st.best_val);
  body.scalar_u64("best_epoch", st.best_epoch);
  body.scalar_u64("adam.step", static_cast<std::uint64_t>(st.adam.step));
  const auto named = st.params.named_parameters();
  for (std::size_t i = 0; i < named.size(); ++i) {
    body.matrix("param/" + named[i].name, named[i].tensor.value());
    body.matrix("adam.m/" + named[i].name, st.adam.m.at(i));
    body.matrix("adam.v/" + named[i].name, st.adam.v.at(i));
  }

  Writer out;
  out.bytes(std::string(kMagic, 8));
  out.u32(kCheckpointVersion);
  out.u64(cfg.hash());
  out.u32(body.entries());
  out.bytes(body.buffer());
  const std::uint64_t sum = fnv1a64(out.buffer().data(), out.buffer().size());
  out.u64(sum);

  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError("cannot write checkpoint " + tmp);
    f.write(out.buffer().data(), static_cast<std::streamsize>(out.buffer().size()));
    if (!f) throw CheckpointError("write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw CheckpointError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

CheckpointRecord load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  const std::string buf = ss.str();
  if (buf.size() < 8 || buf.compare(0, 8, std::string(kMagic, 8)) != 0) {
    throw CheckpointError(path.string() + ": not a checkpoint (bad magic, expected ECRLCKPT)");
  }
  if (buf.size() < 8 + 4 + 8 + 4 + 8) throw CheckpointError(path.string() + ": checkpoint truncated");
  Reader r(buf);
  r.bytes(8);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  CheckpointRecord rec;
  rec.config_hash = r.u64();
  const std::uint32_t count = r.u32();

  std::vector<std::pair<std::string, Entry>> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t nlen = r.u32();
    Entry e;
    const std::string name = r.bytes(nlen);
    const std::uint8_t t = r.u8();
    if (t > kU8) throw CheckpointError(path.string() + ": unknown dtype in entry '" + name + "'");
    e.type = static_cast<DType>(t);
    e.rows = r.u64();
    e.cols = r.u64();
    const std::size_t width = e.type == kU8 ? 1 : 8;
    if (e.rows != 0 && e.cols > (buf.size() / width) / e.rows) {
      throw CheckpointError(path.string() + ": entry '" + name + "' larger than the file");
    }
    e.raw = r.bytes(e.rows * e.cols * width);
    entries.emplace_back(name, std::move(e));
  }
  const std::size_t body_end = r.pos();
  const std::uint64_t stored = r.u64();
  if (r.pos() != buf.size()) throw CheckpointError(path.string() + ": trailing bytes after checksum");
  if (fnv1a64(buf.data(), body_end) != stored) throw CheckpointError(path.string() + ": checksum mismatch");

  const auto find = [&](const std::string& name, DType t) -> const Entry& {
    for (const auto& [n, e] : entries)
      if (n == name) {
        if (e.type != t) throw CheckpointError(path.string() + ": entry '" + name + "' has the wrong dtype");
        return e;
      }
    throw CheckpointError(path.string() + ": missing entry '" + name + "'");
  };
  const auto as_u64 = [&](const std::string& name) {
    const Entry& e = find(name, kU64);
    std::string copy = e.raw;
    return Reader(copy).u64();
  };
  const auto as_matrix = [&](const std::string& name, std::size_t rows, std::size_t cols) {
    const Entry& e = find(name, kF64);
    if (e.rows != rows || e.cols != cols) {
      throw CheckpointError(path.string() + ": entry '" + name + "' has shape " + std::to_string(e.rows) + "x" +
                            std::to_string(e.cols) + ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
    }
    Matrix m(rows, cols);
    Reader rd(e.raw);
    for (auto& v : m.data()) v = std::bit_cast<double>(rd.u64());
    return m;
  };

  rec.config_text = find("config", kU8).raw;
  RunConfig cfg;
  try {
    cfg = RunConfig::parse(rec.config_text);
  } catch (const ConfigError& e) {
    throw CheckpointError(path.string() + ": embedded config is invalid: " + e.what());
  }
  if (cfg.hash() != rec.config_hash) throw CheckpointError(path.string() + ": config hash does not match its text");

  rec.state = init_state(cfg);
  rec.state.epoch = as_u64("epoch");
  rec.state.best_val = as_matrix("best_val", 1, 1)(0, 0);
  rec.state.best_epoch = as_u64("best_epoch");
  rec.state.adam.step = static_cast<std::int64_t>(as_u64("adam.step"));
  auto named = rec.state.params.named_parameters();
  for (std::size_t i = 0; i < named.size(); ++i) {
    Matrix& v = named[i].tensor.mutable_value();
    v = as_matrix("param/" + named[i].name, v.rows(), v.cols());
    rec.state.adam.m[i] = as_matrix("adam.m/" + named[i].name, v.rows(), v.cols());
    rec.state.adam.v[i] = as_matrix("adam.v/" + named[i].name, v.rows(), v.cols());
  }
  return rec;
}

// ---- training --------------------------------------------------------------

SampleLoss sample_loss(const model::ModelParams& params, const TrainConfig& cfg, const Sample& sample,
                       const augment::AugmentedSample& aug) {
  const Tensor q = model::encode_query(sample.query.ids, params);
  const auto fa = model::forward(aug.features.frames, q, params, cfg.model);
  const auto fo = model::forward(sample.features.frames, q, params, cfg.model);
  const Tensor l1 = losses::grounding_loss(fa.scores, aug.annotation, cfg.grounding);
  const Tensor l2 = losses::grounding_loss(fo.scores, sample.annotation, cfg.grounding);
  Tensor total = add(l1, l2);
  Real lc = 0.0, floor = 0.0;
  if (cfg.lambda > 0.0) {
    const auto targets =
        losses::consistency_targets(aug.tmap, sample.annotation, sample.features.length(), cfg.consistency);
    const Tensor cons = losses::sscl_total(fa.fused, fo.fused, targets);
    lc = cons.item();
    floor = targets.entropy_floor();
    total = add(total, scale(cons, cfg.lambda));
  }
  SampleLoss out{total, losses::overall_loss(l1.item(), l2.item(), lc, cfg.lambda)};
  out.breakdown.l_cons_floor = floor;
  return out;
}

losses::LossBreakdown sample_loss_backward(const model::ModelParams& params, const TrainConfig& cfg,
                                           const Sample& sample, const augment::AugmentedSample& aug,
                                           double grad_scale) {
  Tape tape;
  TapeScope scope(tape);
  SampleLoss l = sample_loss(params, cfg, sample, aug);
  backward(scale(l.total, grad_scale));
  return l.breakdown;
}

augment::AugmentedSample augmented_view(const TrainConfig& cfg, const Sample& sample, std::size_t index,
                                        std::size_t epoch) {
  const std::uint64_t e = cfg.augment_mode == AugmentMode::kFresh ? epoch : 0;
  Rng rng = make_rng(cfg.seed, {0xA06, e, index});
  try {
    return augment::augment(sample.features, sample.annotation, cfg.augment, rng);
  } catch (const AugmentationError& err) {
    std::cerr << "warning: sample " << sample.id << ": " << err.what() << "; using the identity transform\n";
    return augment::apply_temporal(sample.features, sample.annotation, {}, sample.features.length(),
                                   cfg.augment.pad_frames);
  }
}

EpochLog train_epoch(TrainState& st, const TrainConfig& cfg, std::span<const Sample> train,
                     std::span<const Sample> val) {
  if (train.empty()) throw InputError("train_epoch: empty training set");
  const std::size_t epoch = st.epoch;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng = make_rng(cfg.seed, {0x5348, epoch});
  std::shuffle(order.begin(), order.end(), shuffle_rng);

  auto named = st.params.named_parameters();
  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  EpochLog log;
  log.epoch = epoch + 1;
  log.loss.lambda = cfg.lambda;
  const std::size_t n_batches = (train.size() + cfg.batch - 1) / cfg.batch;
  for (std::size_t b = 0; b < n_batches; ++b) {
    zero_grads(named);
    const std::size_t lo = b * cfg.batch, hi = std::min(train.size(), lo + cfg.batch);
    const double grad_scale = 1.0 / static_cast<double>(hi - lo);
    for (std::size_t k = lo; k < hi; ++k) {
      const Sample& s = train[order[k]];
      losses::LossBreakdown bd;
      try {
        bd = sample_loss_backward(st.params, cfg, s, augmented_view(cfg, s, order[k], epoch), grad_scale);
      } catch (const TrainingAbort& e) {
        throw TrainingAbort("epoch " + std::to_string(epoch + 1) + ", batch " + std::to_string(b) + ", sample " +
                            s.id + ": " + e.what());
      }
      log.loss.l_tsg_aug += bd.l_tsg_aug;
      log.loss.l_tsg_orig += bd.l_tsg_orig;
      log.loss.l_cons += bd.l_cons;
      log.loss.l_overall += bd.l_overall;
      log.loss.l_cons_floor += bd.l_cons_floor;
    }
    for (const auto& p : named) {
      if (p.tensor.has_grad() && !p.tensor.grad().all_finite()) {
        throw TrainingAbort("epoch " + std::to_string(epoch + 1) + ", batch " + std::to_string(b) +
                            ": non-finite gradient in " + p.name);
      }
    }
    adam_step(named, st.adam, adam_cfg);
  }
  zero_grads(named);
  const double n = static_cast<double>(train.size());
  log.loss.l_tsg_aug /= n;
  log.loss.l_tsg_orig /= n;
  log.loss.l_cons /= n;
  log.loss.l_overall /= n;
  log.loss.l_cons_floor /= n;
  log.val_r1_05 = val.empty() ? std::numeric_limits<double>::quiet_NaN()
                              : evaluate(model_scorer(st.params, cfg.model), val, {1}, {0.5}).at(1, 0.5);
  st.epoch = epoch + 1;
  return log;
}

GradCheckReport check_overall_gradients(const RunConfig& base, const GradCheckOptions& opts) {
  RunConfig cfg = base;
  cfg.data.T = 6;
  cfg.data.D = 8;
  cfg.data.query_min = cfg.data.query_max = 4;
  cfg.train.model.dim = 8;
  cfg.train.model.hidden = 4;
  cfg.sync();
  cfg.validate();
  Rng rng = make_rng(cfg.data.seed, {0x6C});
  const auto pair = data::generate_synthetic_pair(cfg.data, rng);
  const Sample sample{"gradcheck", pair.features, pair.query, pair.annotation};
  // Non-identity ratios so both streams and the timestamp map differ. A
  // one-frame segment can vanish at T=6, so fall back through a short list.
  std::optional<augment::AugmentedSample> aug;
  for (const augment::TransformParams& r : {augment::TransformParams{0.8, 1.6, 1.2},
                                            augment::TransformParams{1.3, 1.8, 0.7},
                                            augment::TransformParams{}}) {
    try {
      aug = augment::apply_temporal(sample.features, sample.annotation, r, sample.features.length(),
                                    cfg.train.augment.pad_frames);
      break;
    } catch (const DegenerateSampleError&) {
    }
  }
  TrainState st = init_state(cfg);
  auto named = st.params.named_parameters();
  return grad_check([&] { return sample_loss(st.params, cfg.train, sample, *aug).total; }, named, opts);
}

std::string format_log_row(const EpochLog& e) {
  return std::to_string(e.epoch) + "," + fmt(e.loss.l_tsg_aug) + "," + fmt(e.loss.l_tsg_orig) + "," +
         fmt(e.loss.l_cons) + "," + fmt(e.loss.l_overall) + "," + fmt(e.val_r1_05);
}

std::vector<EpochLog> train(const RunConfig& cfg, TrainState& st, std::span<const Sample> train_set,
                            std::span<const Sample> val_set, const TrainOptions& opts) {
  cfg.validate();
  std::ofstream log_file;
  if (!opts.out_dir.empty()) {
    std::filesystem::create_directories(opts.out_dir);
    const auto log_path = opts.out_dir / "train_log.csv";
    if (st.epoch == 0) {
      log_file.open(log_path, std::ios::trunc);
      log_file << kLogHeader << '\n';
    } else {
      log_file.open(log_path, std::ios::app);
    }
    if (!log_file) throw IoError("cannot write " + log_path.string());
  }
  std::vector<EpochLog> logs;
  while (st.epoch < cfg.train.epochs) {
    EpochLog e = train_epoch(st, cfg.train, train_set, val_set);
    const bool improved = std::isnan(e.val_r1_05) || e.val_r1_05 > st.best_val;
    if (improved) {
      st.best_val = std::isnan(e.val_r1_05) ? st.best_val : e.val_r1_05;
      st.best_epoch = e.epoch;
    }
    if (log_file.is_open()) {
      log_file << format_log_row(e) << '\n' << std::flush;
      save_checkpoint(opts.out_dir / "last.ckpt", cfg, st);
      if (improved) save_checkpoint(opts.out_dir / "best.ckpt", cfg, st);
    }
    if (opts.on_epoch) opts.on_epoch(e);
    logs.push_back(e);
  }
  return logs;
}

}  // namespace ecrl::train
