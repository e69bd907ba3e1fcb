#include <CLI11.hpp>

#include <cstdio>
#include <exception>

#include "commands.hpp"
#include "ecrl/errors.hpp"

using namespace ecrl;
using namespace ecrl::cli;

namespace {

int exit_code(const std::exception& e) {
  if (dynamic_cast<const TrainingAbort*>(&e)) return kAbort;
  if (dynamic_cast<const CheckpointError*>(&e)) return kCheckpoint;
  if (dynamic_cast<const IoError*>(&e)) return kIo;
  if (dynamic_cast<const Error*>(&e)) return kInput;
  return kInternal;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ecrl: temporal sentence grounding with equivariant consistency training"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* c_gen = app.add_subcommand("gen-data", "Generate a synthetic planted-segment dataset");
  c_gen->add_option("--config", gen.config, "key=value config file");
  c_gen->add_option("--out", gen.out, "output directory")->required();
  c_gen->add_option("--n", gen.n, "number of samples (default: n_samples)");
  c_gen->add_option("--set", gen.sets, "override a config key (key=value)");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train a model");
  c_train->add_option("--config", tr.config, "key=value config file");
  c_train->add_option("--data", tr.data, "dataset directory or training manifest")->required();
  c_train->add_option("--out", tr.out, "run directory")->required();
  c_train->add_option("--set", tr.sets, "override a config key (key=value)");
  c_train->add_flag("--resume", tr.resume, "continue from <out>/last.ckpt");

  EvalArgs ev{{}, {}, {}, {1, 5}, {0.3, 0.5, 0.7}, {}};
  auto* c_eval = app.add_subcommand("eval", "Evaluate a checkpoint (R@n, IoU=m)");
  c_eval->add_option("--checkpoint", ev.checkpoint)->required();
  c_eval->add_option("--data", ev.data, "dataset directory (test split) or manifest")->required();
  c_eval->add_option("--report", ev.report, "CSV output; per-sample details go next to it")->required();
  c_eval->add_option("--n", ev.n_list, "top-n values")->delimiter(',');
  c_eval->add_option("--m", ev.m_list, "IoU thresholds")->delimiter(',');
  c_eval->add_option("--set", ev.sets, "override a config key (key=value)");

  PreviewArgs pv;
  auto* c_prev = app.add_subcommand("augment-preview", "Print the timestamp map of one augmentation");
  c_prev->add_option("--config", pv.config, "key=value config file");
  c_prev->add_option("--data", pv.data, "dataset directory or manifest")->required();
  c_prev->add_option("--id", pv.id, "sample id")->required();
  c_prev->add_option("--seed", pv.seed, "augmentation seed");
  c_prev->add_flag("--identity", pv.identity, "use unit ratios instead of sampling");
  c_prev->add_option("--set", pv.sets, "override a config key (key=value)");

  GradCheckArgs gc;
  auto* c_gc = app.add_subcommand("grad-check", "Finite-difference check of the full training loss");
  c_gc->add_option("--config", gc.config, "key=value config file");
  c_gc->add_option("--set", gc.sets, "override a config key (key=value)");
  c_gc->add_flag("--corrupt-bias-grad", gc.corrupt_bias_grad, "debug: perturb bias gradients");

  ReportArgs rp;
  auto* c_rep = app.add_subcommand("report", "Plot a training log and summarise it");
  c_rep->add_option("--log", rp.log, "train_log.csv")->required();
  c_rep->add_option("--out", rp.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInput;
  }

  try {
    if (*c_gen) return gen_data(gen);
    if (*c_train) return cli::train(tr);
    if (*c_eval) return eval(ev);
    if (*c_prev) return augment_preview(pv);
    if (*c_gc) return grad_check(gc);
    if (*c_rep) return report(rp);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code(e);
  }
  return kInternal;
}
