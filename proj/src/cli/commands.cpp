#include "commands.hpp"

#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "ecrl/augment.hpp"
#include "ecrl/errors.hpp"
#include "ecrl/tensor/tensor.hpp"
#include "ecrl/train_eval.hpp"

namespace fs = std::filesystem;

namespace ecrl::cli {

namespace {

std::string hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw IoError("cannot write " + p.string());
  return out;
}

// A dataset directory resolves to <dir>/<split>.tsv.
fs::path manifest_path(const fs::path& data, const std::string& split) {
  return fs::is_directory(data) ? data / (split + ".tsv") : data;
}

train::Scorer scorer_for(const RunConfig& cfg, const train::TrainState& st) {
  if (cfg.train.model_kind == ModelKind::kOracle) return train::oracle_scorer();
  return train::model_scorer(st.params, cfg.train.model);
}

void write_report(const train::EvalReport& rep, const fs::path& csv) {
  auto out = open_out(csv);
  rep.write_csv(out);
  fs::path details = csv;
  details.replace_extension(".details.csv");
  auto det = open_out(details);
  rep.write_details(det);
}

void print_recall(const train::EvalReport& rep) {
  for (std::size_t a = 0; a < rep.n_list.size(); ++a)
    for (std::size_t b = 0; b < rep.m_list.size(); ++b)
      std::printf("R@%zu,IoU=%.2f  %.4f\n", rep.n_list[a], rep.m_list[b], rep.recall[a][b]);
}

void apply_sets(RunConfig& cfg, const std::vector<std::string>& sets) {
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError(s, "--set expects key=value");
    cfg.set(s.substr(0, eq), s.substr(eq + 1));
  }
}

}  // namespace

RunConfig load_config(const fs::path& path, const std::vector<std::string>& sets) {
  RunConfig cfg = path.empty() ? RunConfig{} : RunConfig::load(path);
  cfg.sync();
  apply_sets(cfg, sets);
  cfg.validate();
  return cfg;
}

int gen_data(const GenDataArgs& a) {
  RunConfig cfg = load_config(a.config, a.sets);
  if (a.n > 0) cfg.n_samples = a.n;
  cfg.validate();
  const auto ds = data::generate_dataset(cfg.data, cfg.n_samples, cfg.split, a.out, cfg.test_shift);
  std::printf("wrote %zu samples to %s: train %zu, val %zu, test %zu%s\n", cfg.n_samples, a.out.string().c_str(),
              ds.train.records.size(), ds.val.records.size(), ds.test.records.size(),
              cfg.test_shift.enabled ? " (test split shifted)" : "");
  return kOk;
}

int train(const TrainArgs& a) {
  const RunConfig cfg = load_config(a.config, a.sets);
  const auto train_set = data::load_samples(data::read_manifest(manifest_path(a.data, "train")));
  std::vector<data::Sample> val_set;
  if (fs::is_directory(a.data) && fs::exists(a.data / "val.tsv")) {
    val_set = data::load_samples(data::read_manifest(a.data / "val.tsv"));
  }
  if (train_set.empty()) throw InputError("training manifest has no records");
  for (const auto& s : train_set) {
    if (s.features.dim() != cfg.data.D) {
      throw InputError("sample " + s.id + " has D=" + std::to_string(s.features.dim()) + ", config has D=" +
                       std::to_string(cfg.data.D));
    }
  }

  fs::create_directories(a.out);
  {
    auto out = open_out(a.out / "config.txt");
    out << "# config_hash=" << hex(cfg.hash()) << '\n' << cfg.to_text();
  }
  std::printf("config_hash=%s\n", hex(cfg.hash()).c_str());

  train::TrainState st = train::init_state(cfg);
  if (a.resume && fs::exists(a.out / "last.ckpt")) {
    auto rec = train::load_checkpoint(a.out / "last.ckpt");
    if (rec.config_hash != cfg.hash()) {
      throw CheckpointError("cannot resume: checkpoint config hash " + hex(rec.config_hash) + " differs from " +
                            hex(cfg.hash()));
    }
    st = std::move(rec.state);
    std::printf("resuming after epoch %zu\n", st.epoch);
  }

  if (cfg.train.model_kind == ModelKind::kOracle) {
    // Evaluation fixture: nothing to fit.
    train::save_checkpoint(a.out / "last.ckpt", cfg, st);
    train::save_checkpoint(a.out / "best.ckpt", cfg, st);
  } else {
    const auto t0 = std::chrono::steady_clock::now();
    train::train(cfg, st, train_set, val_set,
                 {a.out, [&](const train::EpochLog& e) {
                    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                    std::printf("epoch %zu  loss %.5f (tsg %.4f/%.4f, cons %.4f)  val R@1,IoU=0.5 %.4f  [%.1fs]\n",
                                e.epoch, e.loss.l_overall, e.loss.l_tsg_aug, e.loss.l_tsg_orig, e.loss.l_cons,
                                e.val_r1_05, secs);
                    std::fflush(stdout);
                  }});
  }

  if (val_set.empty()) {
    std::printf("no validation split; skipping the final report\n");
    return kOk;
  }
  const auto best = train::load_checkpoint(a.out / "best.ckpt");
  const auto rep = train::evaluate(scorer_for(cfg, best.state), val_set);
  write_report(rep, a.out / "val_report.csv");
  std::printf("validation report (epoch %zu):\n", best.state.epoch);
  print_recall(rep);
  return kOk;
}

int eval(const EvalArgs& a) {
  const auto rec = train::load_checkpoint(a.checkpoint);
  RunConfig cfg = RunConfig::parse(rec.config_text);
  apply_sets(cfg, a.sets);
  cfg.validate();
  const auto samples = data::load_samples(data::read_manifest(manifest_path(a.data, "test")));
  const auto rep = train::evaluate(scorer_for(cfg, rec.state), samples, a.n_list, a.m_list);
  write_report(rep, a.report);
  std::printf("checkpoint epoch %zu, config_hash=%s, %zu samples\n", rec.state.epoch, hex(rec.config_hash).c_str(),
              samples.size());
  print_recall(rep);
  return kOk;
}

int augment_preview(const PreviewArgs& a) {
  const RunConfig cfg = load_config(a.config, a.sets);
  std::vector<fs::path> manifests;
  if (fs::is_directory(a.data)) {
    for (const char* split : {"train", "val", "test"})
      if (fs::exists(a.data / (std::string(split) + ".tsv"))) manifests.push_back(a.data / (std::string(split) + ".tsv"));
  } else {
    manifests.push_back(a.data);
  }
  for (const auto& path : manifests) {
    const auto m = data::read_manifest(path);
    for (const auto& r : m.records) {
      if (r.id != a.id) continue;
      const auto fs_ = data::read_features(m.feature_path(r));
      augment::AugmentedSample aug;
      if (a.identity) {
        aug = augment::apply_temporal(fs_, r.annotation, {}, fs_.length(), cfg.train.augment.pad_frames);
      } else {
        Rng rng = make_rng(a.seed, {0xA06});
        aug = augment::augment(fs_, r.annotation, cfg.train.augment, rng);
      }
      std::printf("# sample %s T=%zu tau=[%zu,%zu] ratios left=%.6f seg=%.6f right=%.6f\n", r.id.c_str(),
                  fs_.length(), r.annotation.tau_s, r.annotation.tau_e, aug.params.r_left, aug.params.r_seg,
                  aug.params.r_right);
      std::printf("t\ti'\tsub_label\n");
      for (std::size_t t = 0; t < aug.tmap.size(); ++t) {
        std::printf("%zu\t%zu\t%s\n", t, aug.tmap.map[t], augment::to_string(aug.tmap.sub_label[t]));
      }
      std::printf("tau_s'=%zu tau_e'=%zu\n", aug.annotation.tau_s, aug.annotation.tau_e);
      return kOk;
    }
  }
  throw InputError("unknown sample id '" + a.id + "'");
}

int grad_check(const GradCheckArgs& a) {
  const RunConfig cfg = load_config(a.config, a.sets);
  tensor::debug::set_corrupt_bias_gradient(a.corrupt_bias_grad);
  const auto t0 = std::chrono::steady_clock::now();
  const auto rep = train::check_overall_gradients(cfg);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  tensor::debug::set_corrupt_bias_gradient(false);
  for (const auto& e : rep.entries) {
    std::printf("%-28s max_rel_err %.3e%s\n", e.name.c_str(), e.max_rel_error,
                e.max_rel_error > rep.tolerance ? "  FAIL" : "");
  }
  std::printf("%zu parameters, tolerance %.0e, %.1fs\n", rep.entries.size(), rep.tolerance, secs);
  if (rep.passed()) {
    std::printf("gradient check passed\n");
    return kOk;
  }
  std::fprintf(stderr, "gradient check failed:\n");
  for (const auto& f : rep.failures()) std::fprintf(stderr, "  %s\n", f.c_str());
  return kGradCheck;
}

}  // namespace ecrl::cli
