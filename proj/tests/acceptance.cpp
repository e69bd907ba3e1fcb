// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
// Usage: acceptance <path-to-ecrl-cli>

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "ecrl/errors.hpp"
#include "ecrl/losses.hpp"
#include "ecrl/model.hpp"
#include "ecrl/train_eval.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace ecrl;
namespace fs = std::filesystem;
using ecrl::testing::max_abs_diff;
using ecrl::testing::random_matrix;
using tensor::Matrix;
using tensor::Tensor;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("failed: ") + what;
    }
  }
  void note(const std::string& s) { detail += (detail.empty() ? "" : "; ") + s; }
};

std::string num(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, v);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::size_t g_reports = 0, g_monotone = 0;

train::EvalReport tracked(const train::EvalReport& r) {
  ++g_reports;
  g_monotone += r.monotone();
  return r;
}

std::vector<data::Sample> in_memory_samples(const data::SyntheticConfig& dc, std::size_t n, std::uint64_t seed) {
  const auto bank = data::prototype_bank(dc);
  std::vector<data::Sample> out;
  for (std::size_t k = 0; k < n; ++k) {
    Rng rng = make_rng(seed, {k});
    auto p = data::generate_synthetic_pair(dc, bank, rng);
    out.push_back({"s" + std::to_string(k), p.features, p.query, p.annotation});
  }
  return out;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ecrl_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// ---- 1 ----------------------------------------------------------------------
Verdict gradient_integrity() {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  const auto rep = train::check_overall_gradients(RunConfig{});
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  double worst = 0.0;
  std::string worst_name;
  for (const auto& e : rep.entries)
    if (e.max_rel_error > worst) worst = e.max_rel_error, worst_name = e.name;
  v.require(rep.passed(), rep.passed() ? "" : rep.failures().front());
  v.require(secs < 120.0, "runtime < 120 s");
  v.note(std::to_string(rep.entries.size()) + " parameters, max rel err " + num(worst) + " (" + worst_name +
         "), tol 1e-4, h 1e-5, denominator floor " + num(rep.floor, 3) + ", " + num(secs, 3) + " s");
  return v;
}

// ---- 2 ----------------------------------------------------------------------
Verdict prior_correctness() {
  Verdict v;
  std::mt19937_64 rng(2);
  losses::ConsistencyConfig cfg;
  double worst_sum = 0.0, worst_oracle = 0.0, worst_sym = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t T = 3 + rng() % 62;
    std::size_t a = rng() % T, b = rng() % T;
    if (a > b) std::swap(a, b);
    const auto labels = augment::labels_from_annotation({a, b}, T);
    cfg.sigma_prior = std::uniform_real_distribution<double>(0.5, 20.0)(rng);
    const std::size_t i_prime = rng() % T;
    const auto sub = static_cast<augment::SubLabel>(rng() % 3);
    const auto w = losses::gaussian_prior_weights(i_prime, sub, labels, cfg);
    worst_sum = std::max(worst_sum, std::abs(std::accumulate(w.begin(), w.end(), 0.0) - 1.0));
    std::vector<double> pos(T);
    std::vector<bool> same(T);
    for (std::size_t j = 0; j < T; ++j) pos[j] = double(j), same[j] = labels[j] == sub;
    const auto want = oracle::prior(double(i_prime), pos, same, cfg.sigma_prior, 0.5);
    for (std::size_t j = 0; j < T; ++j) worst_oracle = std::max(worst_oracle, std::abs(w[j] - want[j]));

    // Uniform sub-labels, central anchor.
    const std::size_t To = T | 1;
    const auto uniform = augment::labels_from_annotation({0, To - 1}, To);
    const auto ws = losses::gaussian_prior_weights((To - 1) / 2, augment::SubLabel::kSeg, uniform, cfg);
    for (std::size_t j = 0; j < To; ++j) worst_sym = std::max(worst_sym, std::abs(ws[j] - ws[To - 1 - j]));
  }
  v.require(worst_sum <= 1e-9, "sum to 1 within 1e-9");
  v.require(worst_oracle <= 1e-12, "oracle agreement within 1e-12");
  v.require(worst_sym <= 1e-12, "symmetry");

  losses::ConsistencyConfig five;
  const auto ex = losses::gaussian_prior_weights(1, augment::SubLabel::kSeg,
                                                 augment::labels_from_annotation({0, 2}, 3), five);
  const double ref[3] = {0.33112, 0.33777, 0.33112};
  double ex_err = 0.0;
  for (int j = 0; j < 3; ++j) ex_err = std::max(ex_err, std::abs(ex[j] - ref[j]));
  v.require(ex_err < 5e-5, "worked example");
  v.note("1000 configs: max |sum-1| " + num(worst_sum, 2) + ", max oracle diff " + num(worst_oracle, 2) +
         ", max asymmetry " + num(worst_sym, 2) + "; T=3 example (" + num(ex[0], 8) + ", " + num(ex[1], 8) + ", " +
         num(ex[2], 8) + ")");
  return v;
}

// ---- 3 ----------------------------------------------------------------------
Verdict gibbs_bound() {
  Verdict v;
  std::mt19937_64 rng(3);
  losses::ConsistencyConfig cfg;
  double worst_gap = 1e300, worst_slack = 1e300;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t T = 2 + rng() % 40, D = 2 + rng() % 16;
    const Matrix anchor = random_matrix(1, D, rng), other = random_matrix(T, D, rng);
    std::size_t a = rng() % T, b = rng() % T;
    if (a > b) std::swap(a, b);
    cfg.sigma_prior = std::uniform_real_distribution<double>(0.3, 15.0)(rng);
    const auto w = losses::gaussian_prior_weights(rng() % T, static_cast<augment::SubLabel>(rng() % 3),
                                                  augment::labels_from_annotation({a, b}, T), cfg);
    const double loss = losses::sscl_frame_loss(Tensor(anchor), Tensor(other), w).item();
    worst_gap = std::min(worst_gap, loss - oracle::entropy(w));
    worst_slack = std::min(worst_slack, std::log(double(T)) + 2.0 - loss);
  }
  v.require(worst_gap >= -1e-9, "loss - H(w) >= -1e-9");
  v.require(worst_slack >= 0.0, "loss <= log T + 2");
  v.note("1000 pairs: min(loss - H(w)) " + num(worst_gap, 3) + ", min(log T + 2 - loss) " + num(worst_slack, 3));
  return v;
}

// ---- 4 ----------------------------------------------------------------------

// Whether any SEG frame survives the fit, from the part lengths alone.
bool seg_survives(std::size_t T, const data::SegmentAnnotation& ann, const augment::TransformParams& p,
                  std::size_t pad) {
  const auto len = [&](std::size_t n, double r) -> std::size_t {
    if (n == 0 && r == 1.0) return 0;
    const std::size_t n_in = n == 0 ? pad : n;
    return std::max<long long>(1, std::llround(r * double(n_in)));
  };
  const std::size_t L = len(ann.tau_s, p.r_left), S = len(ann.length(), p.r_seg),
                    R = len(T - ann.tau_e - 1, p.r_right);
  for (std::size_t k = 0; k < T; ++k) {
    const std::size_t c = k * (L + S + R) / T;
    if (c >= L && c < L + S) return true;
  }
  return false;
}

Verdict equivariance_bookkeeping() {
  Verdict v;
  std::mt19937_64 rng(4);
  augment::AugmentConfig cfg;  // alpha 0.8
  std::size_t ok = 0, rejected = 0, bad_interval = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t T = 8 + rng() % 57;
    data::FeatureSequence fs{random_matrix(T, 3, rng)};
    std::size_t a = rng() % T, b = rng() % T;
    if (a > b) std::swap(a, b);
    Rng r = make_rng(4, {std::uint64_t(trial)});
    try {
      const auto aug = augment::augment(fs, {a, b}, cfg, r);
      ++ok;
      for (std::size_t i = 0; i < T; ++i) {
        const bool in = i >= aug.annotation.tau_s && i <= aug.annotation.tau_e;
        if (in != (aug.tmap.sub_label[i] == augment::SubLabel::kSeg)) {
          ++bad_interval;
          break;
        }
      }
    } catch (const AugmentationError&) {
      ++rejected;
    }
  }
  v.require(bad_interval == 0, "SEG labels == [tau_s', tau_e']");

  std::size_t identity_bad = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t T = 4 + rng() % 40;
    data::FeatureSequence fs{random_matrix(T, 3, rng)};
    std::size_t a = trial % 4 == 0 ? 0 : rng() % T, b = trial % 4 == 1 ? T - 1 : rng() % T;
    if (a > b) std::swap(a, b);
    const auto id = augment::apply_temporal(fs, {a, b}, {}, T);
    bool good = id.features == fs && id.annotation == data::SegmentAnnotation{a, b};
    for (std::size_t i = 0; i < T; ++i) good = good && id.tmap.map[i] == i;
    identity_bad += !good;
  }
  v.require(identity_bad == 0, "identity law");

  // Hostile ratios: every vanishing segment must be rejected, every result
  // must agree with the independent survival count.
  std::size_t degenerate = 0, disagree = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t T = 8 + rng() % 57;
    data::FeatureSequence fs{random_matrix(T, 2, rng)};
    const std::size_t a = rng() % T, b = std::min(T - 1, a + rng() % 3);
    std::uniform_real_distribution<double> u(0.05, 4.0);
    const augment::TransformParams p{u(rng), u(rng), u(rng)};
    const bool expect = seg_survives(T, {a, b}, p, 2);
    bool got = true;
    try {
      augment::apply_temporal(fs, {a, b}, p, T);
    } catch (const DegenerateSampleError&) {
      got = false;
      ++degenerate;
    }
    disagree += got != expect;
  }
  bool nonpositive = false;
  try {
    augment::resample_subvideo(Matrix(3, 2), 0.0, 2);
  } catch (const InputError&) {
    nonpositive = true;
  }
  v.require(disagree == 0 && degenerate > 0, "degenerate augmentations rejected");
  v.require(nonpositive, "non-positive ratio rejected");
  v.note(std::to_string(ok) + " augmentations checked (" + std::to_string(rejected) +
         " rejected after retries); 200 identity cases; " + std::to_string(degenerate) +
         "/1000 hostile transforms rejected, all matching the survival count");
  return v;
}

// ---- 5 ----------------------------------------------------------------------
Verdict oracle_equivalence() {
  Verdict v;
  std::mt19937_64 rng(5);
  double d_refine = 0, d_fuse = 0, d_topn = 0, d_iou = 0, d_loss = 0;
  int n_refine = 0, n_fuse = 0, n_topn = 0, n_iou = 0, n_loss = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t T = 1 + rng() % 8, N = 1 + rng() % 5, D = 2 + rng() % 5;
    // self_refine
    model::SelfRefineConfig rc;
    rc.sigma = std::uniform_real_distribution<double>(0.5, 8.0)(rng);
    rc.iterations = 1 + rng() % 4;
    rc.row_normalize = trial % 2 == 0;
    const Matrix x = random_matrix(T, D, rng);
    d_refine = std::max(d_refine, max_abs_diff(model::self_refine(x, rc),
                                               oracle::self_refine(x, rc.sigma, int(rc.iterations), rc.row_normalize)));
    ++n_refine;
    // co_attention_fuse
    model::ModelConfig mc;
    mc.input_dim = mc.dim = D;
    mc.hidden = 1 + rng() % 3;
    mc.vocab = 8;
    Rng prng = make_rng(5, {std::uint64_t(trial)});
    const auto p = model::ModelParams::init(mc, prng);
    const Matrix vv = random_matrix(T, D, rng), qq = random_matrix(N, D, rng);
    const auto want = oracle::co_attention(vv, qq, p.w_s.value());
    const Matrix fused = oracle::affine(
        oracle::bilstm(want.concat, p.fusion_lstm.forward.wx.value(), p.fusion_lstm.forward.wh.value(),
                       p.fusion_lstm.forward.bias.value(), p.fusion_lstm.backward.wx.value(),
                       p.fusion_lstm.backward.wh.value(), p.fusion_lstm.backward.bias.value()),
        p.fusion_out.weight.value(), p.fusion_out.bias.value());
    d_fuse = std::max(d_fuse, max_abs_diff(model::co_attention_fuse(Tensor(vv), Tensor(qq), p).value(), fused));
    ++n_fuse;
    // predict_topn (integer scores on odd trials for ties)
    std::vector<double> cs(T), ce(T);
    std::uniform_int_distribution<int> small(-2, 2);
    std::normal_distribution<double> nd;
    for (auto& c : cs) c = trial % 2 ? small(rng) : nd(rng);
    for (auto& c : ce) c = trial % 2 ? small(rng) : nd(rng);
    const std::size_t n = 1 + rng() % 6;
    const auto got = model::predict_topn(cs, ce, n);
    const auto ref = oracle::topn(cs, ce, n);
    if (got.size() != ref.size()) {
      d_topn = 1e300;
    } else {
      for (std::size_t k = 0; k < got.size(); ++k) {
        if (got[k].s != ref[k].s || got[k].e != ref[k].e) d_topn = 1e300;
        d_topn = std::max(d_topn, std::abs(got[k].confidence - ref[k].c));
      }
    }
    ++n_topn;
    // temporal_iou
    for (int k = 0; k < 5; ++k) {
      std::size_t a = rng() % 8, b = rng() % 8, c = rng() % 8, d = rng() % 8;
      if (a > b) std::swap(a, b);
      if (c > d) std::swap(c, d);
      d_iou = std::max(d_iou, std::abs(train::temporal_iou({a, b}, {c, d}) - oracle::iou_frames(a, b, c, d)));
      ++n_iou;
    }
    // grounding_loss
    std::size_t ts = rng() % T, te = rng() % T;
    if (ts > te) std::swap(ts, te);
    Matrix ms(T, 1), me(T, 1);
    for (std::size_t t = 0; t < T; ++t) ms(t, 0) = cs[t], me(t, 0) = ce[t];
    const double l = losses::grounding_loss({Tensor(ms), Tensor(me)}, {ts, te}).item();
    d_loss = std::max(d_loss, std::abs(l - oracle::grounding_ce(cs, ce, ts, te)));
    ++n_loss;
  }
  const auto item = [&](const char* name, double d, int n) {
    v.require(d <= 1e-10, name);
    v.note(std::string(name) + " " + num(d, 2) + " over " + std::to_string(n));
  };
  item("self_refine", d_refine, n_refine);
  item("co_attention_fuse", d_fuse, n_fuse);
  item("predict_topn", d_topn, n_topn);
  item("temporal_iou", d_iou, n_iou);
  item("grounding_loss", d_loss, n_loss);
  return v;
}

// ---- 6 ----------------------------------------------------------------------
Verdict overfit_sanity() {
  Verdict v;
  RunConfig cfg;
  cfg.train.lambda = 5.0;
  cfg.train.lr = 1e-4;
  cfg.train.batch = 1;
  cfg.train.model.hidden = 32;
  cfg.sync();
  const double snr = cfg.data.signal / cfg.data.noise;
  const auto train_set = in_memory_samples(cfg.data, 32, 61);
  train::TrainState st = train::init_state(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  double first_raw = 0, first_excess = 0, first_tsg = 0, raw50 = 0, excess50 = 0, tsg50 = 0, recall = 0;
  std::size_t reached = 0;
  for (std::size_t e = 1; e <= 200; ++e) {
    const auto log = train::train_epoch(st, cfg.train, train_set, {});
    const double excess = log.loss.l_overall - cfg.train.lambda * log.loss.l_cons_floor;
    const double tsg = log.loss.l_tsg_aug + log.loss.l_tsg_orig;
    if (e == 1) first_raw = log.loss.l_overall, first_excess = excess, first_tsg = tsg;
    if (e == 50) raw50 = log.loss.l_overall, excess50 = excess, tsg50 = tsg;
    if (e % 5 == 0 && !reached) {
      recall = tracked(train::evaluate(train::model_scorer(st.params, cfg.train.model), train_set, {1}, {0.7}))
                   .at(1, 0.7);
      if (recall >= 0.9) reached = e;
    }
    if (reached && e >= 50) break;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double drop = 1.0 - excess50 / first_excess;
  v.require(reached > 0, "train R@1,IoU=0.7 >= 0.90 within 200 epochs");
  v.require(secs < 600.0, "wall-clock < 10 min");
  v.require(drop >= 0.5, "loss drop >= 50% over 50 epochs");
  v.note("S/N " + num(snr, 3) + ", 32 pairs, batch 1, H 32: R@1,IoU=0.7 " + num(recall, 3) +
         (reached ? " at epoch " + std::to_string(reached) : std::string(" (not reached)")) + ", " + num(secs, 3) +
         " s; epoch 1 -> 50 loss above the consistency entropy floor " + num(first_excess) + " -> " +
         num(excess50) + " (-" + num(100 * drop, 3) + "%); raw cross-entropy form " + num(first_raw) + " -> " +
         num(raw50) + " (-" + num(100 * (1 - raw50 / first_raw), 3) + "%); grounding terms " + num(first_tsg) +
         " -> " + num(tsg50) + " (-" + num(100 * (1 - tsg50 / first_tsg), 3) + "%)");
  return v;
}

// ---- 7 ----------------------------------------------------------------------
Verdict ablation_direction() {
  Verdict v;
  std::vector<double> full, no_cons, onehot;
  std::string per_seed;
  const auto t0 = std::chrono::steady_clock::now();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    RunConfig base;
    base.data.seed = seed;
    base.n_samples = 256;
    base.split = {0.5, 0.0, 0.5};
    base.test_shift.enabled = true;
    base.train.seed = seed;
    base.train.batch = 1;
    base.train.epochs = 30;
    base.train.model.hidden = 16;
    base.sync();
    const auto dir = scratch("ablation_" + std::to_string(seed));
    const auto ds = data::generate_dataset(base.data, base.n_samples, base.split, dir, base.test_shift);
    const auto tr = data::load_samples(ds.train), te = data::load_samples(ds.test);
    double r[3];
    for (int k = 0; k < 3; ++k) {
      RunConfig c = base;
      if (k == 1) c.train.lambda = 0.0;
      if (k == 2) c.train.consistency.prior = losses::PriorKind::kOneHot;
      auto st = train::init_state(c);
      train::train(c, st, tr, {});
      r[k] = tracked(train::evaluate(train::model_scorer(st.params, c.train.model), te)).at(1, 0.5);
    }
    full.push_back(r[0]);
    no_cons.push_back(r[1]);
    onehot.push_back(r[2]);
    per_seed += " " + num(r[0], 3) + "/" + num(r[1], 3) + "/" + num(r[2], 3);
    fs::remove_all(dir);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double mf = median(full), m0 = median(no_cons), m1 = median(onehot);
  v.require(mf >= m0, "full >= lambda=0");
  v.require(mf >= m1, "Gaussian prior >= one-hot prior");
  v.note("128 train / 128 shifted test, 5 seeds, median test R@1,IoU=0.5: full " + num(mf) + ", lambda=0 " +
         num(m0) + ", one-hot " + num(m1) + "; per seed full/lambda0/onehot:" + per_seed + "; " + num(secs, 3) +
         " s");
  if (mf == m0 || mf == m1) v.note("tie: direction holds without separation");
  return v;
}

// ---- 8 ----------------------------------------------------------------------
Verdict metric_harness() {
  Verdict v;
  std::mt19937_64 rng(8);
  std::size_t mismatches = 0;
  for (int i = 0; i < 10000; ++i) {
    std::size_t a = rng() % 64, b = rng() % 64, c = rng() % 64, d = rng() % 64;
    if (a > b) std::swap(a, b);
    if (c > d) std::swap(c, d);
    mismatches += train::temporal_iou({a, b}, {c, d}) != oracle::iou_frames(a, b, c, d);
  }
  v.require(mismatches == 0, "temporal_iou exact on 1e4 pairs");

  const auto samples = in_memory_samples(data::SyntheticConfig{}, 200, 81);
  const auto perfect = tracked(train::evaluate(train::oracle_scorer(), samples, {1, 5, 10}, {0.1, 0.3, 0.5, 0.7, 0.9}));
  bool all_one = true;
  for (const auto& row : perfect.recall)
    for (double r : row) all_one = all_one && r == 1.0;
  v.require(all_one, "oracle model scores 1.0");

  for (int k = 0; k < 20; ++k) {
    std::normal_distribution<double> nd;
    const train::Scorer noise = [&](const data::Sample& s) {
      train::ScoreVectors sv{std::vector<double>(s.features.length()), std::vector<double>(s.features.length())};
      for (auto& x : sv.start) x = nd(rng);
      for (auto& x : sv.end) x = nd(rng);
      return sv;
    };
    tracked(train::evaluate(noise, samples, {1, 2, 5, 10}, {0.1, 0.3, 0.5, 0.7, 0.9}));
  }
  return v;
}

// ---- 9 ----------------------------------------------------------------------
int run_cli(const std::string& cli, const std::string& args) {
  const std::string cmd = "\"" + cli + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

Verdict determinism_and_persistence(const std::string& cli) {
  Verdict v;
  RunConfig cfg;
  cfg.data.T = 24;
  cfg.data.D = 16;
  cfg.train.model.dim = 16;
  cfg.train.model.hidden = 8;
  cfg.train.batch = 4;
  cfg.train.epochs = 3;
  cfg.sync();
  const auto samples = in_memory_samples(cfg.data, 8, 91);
  std::string logs[2];
  train::TrainState states[2] = {train::init_state(cfg), train::init_state(cfg)};
  for (int k = 0; k < 2; ++k)
    for (const auto& e : train::train(cfg, states[k], samples, samples)) logs[k] += train::format_log_row(e) + "\n";
  v.require(logs[0] == logs[1], "identical training log");

  const auto dir = scratch("persist");
  train::save_checkpoint(dir / "a.ckpt", cfg, states[0]);
  const auto rec = train::load_checkpoint(dir / "a.ckpt");
  const auto text = [](const train::EvalReport& r) {
    std::ostringstream ss;
    r.write_csv(ss);
    r.write_details(ss);
    return ss.str();
  };
  const auto before = tracked(train::evaluate(train::model_scorer(states[0].params, cfg.train.model), samples));
  const auto after = tracked(train::evaluate(train::model_scorer(rec.state.params, cfg.train.model), samples));
  v.require(text(before) == text(after), "checkpoint round trip preserves evaluation");

  // Corrupted inputs through the command line.
  const std::string d = (dir / "data").string();
  const std::string sets = " --set T=16 --set D=8 --set model_dim=8 --set H=4 --set epochs=1 --set batch=4";
  bool setup = run_cli(cli, "gen-data --out \"" + d + "\" --n 10 --set T=16 --set D=8") == 0 &&
               run_cli(cli, "train --data \"" + d + "\" --out \"" + (dir / "run").string() + "\"" + sets) == 0;
  v.require(setup, "CLI setup");
  const std::string ckpt = slurp(dir / "run" / "best.ckpt");
  spit(dir / "trunc.ckpt", ckpt.substr(0, ckpt.size() / 3));
  std::string flipped = ckpt;
  flipped[flipped.size() / 2] ^= 0x01;
  spit(dir / "flip.ckpt", flipped);
  const auto eval = [&](const std::string& ckpt_path, const std::string& data) {
    return run_cli(cli, "eval --checkpoint \"" + ckpt_path + "\" --data \"" + data + "\" --report \"" +
                            (dir / "r.csv").string() + "\"");
  };
  const std::string good = (dir / "run" / "best.ckpt").string();
  const int rc_ok = eval(good, d);
  const int rc_trunc = eval((dir / "trunc.ckpt").string(), d);
  const int rc_flip = eval((dir / "flip.ckpt").string(), d);
  fs::path feat;
  for (const auto& e : fs::directory_iterator(fs::path(d) / "features")) feat = e.path();
  std::string fbytes = slurp(feat);
  spit(feat, "XXXX" + fbytes.substr(4));
  const int rc_magic = eval(good, d + "/train.tsv");
  spit(feat, fbytes.substr(0, fbytes.size() - 7));
  const int rc_short = eval(good, d + "/train.tsv");
  spit(feat, fbytes);
  spit(dir / "bad.tsv", "s0\tfeatures/none.feat\t1 2\t0\t3\t16\n");
  const int rc_manifest = eval(good, (dir / "bad.tsv").string());
  const int rc_missing = eval(good, (dir / "nope.tsv").string());
  v.require(rc_ok == 0, "clean eval exits 0");
  v.require(rc_trunc == 5 && rc_flip == 5, "corrupt checkpoint exits 5");
  v.require(rc_magic == 2 && rc_short == 2, "corrupt feature file exits 2");
  v.require(rc_manifest == 2, "corrupt manifest exits 2");
  v.require(rc_missing == 3, "missing manifest exits 3");
  v.note("exit codes: truncated ckpt " + std::to_string(rc_trunc) + ", flipped ckpt " + std::to_string(rc_flip) +
         ", bad feature magic " + std::to_string(rc_magic) + ", truncated features " + std::to_string(rc_short) +
         ", dangling manifest " + std::to_string(rc_manifest) + ", missing manifest " + std::to_string(rc_missing));
  fs::remove_all(dir);
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: acceptance <ecrl-cli>\n");
    return 2;
  }
  const std::string cli = fs::absolute(argv[1]).string();
  int failures = 0;
  const auto report = [&](int id, const char* title, const std::function<Verdict()>& fn) {
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail = std::string("exception: ") + e.what();
    }
    failures += !v.pass;
    std::printf("criterion %d %s  %s: %s\n", id, v.pass ? "PASS" : "FAIL", title, v.detail.c_str());
    std::fflush(stdout);
  };
  report(1, "gradient integrity", gradient_integrity);
  report(2, "prior correctness", prior_correctness);
  report(3, "Gibbs bound", gibbs_bound);
  report(4, "equivariance bookkeeping", equivariance_bookkeeping);
  report(5, "oracle equivalence", oracle_equivalence);
  report(6, "overfit sanity", overfit_sanity);
  report(7, "ablation direction", ablation_direction);
  report(9, "determinism and persistence", [&] { return determinism_and_persistence(cli); });
  // Last, so that the monotonicity count covers every report generated above.
  report(8, "metric harness", [&] {
    Verdict v = metric_harness();
    v.require(g_monotone == g_reports, "recall monotone on every report");
    v.note("recall monotone on " + std::to_string(g_monotone) + "/" + std::to_string(g_reports) + " reports");
    return v;
  });
  std::printf("%d criterion(s) failed\n", failures);
  return failures ? 1 : 0;
}
