#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ecrl/config.hpp"

namespace ecrl::cli {

// Process exit codes.
enum Exit : int {
  kOk = 0,
  kInternal = 1,
  kInput = 2,
  kIo = 3,
  kAbort = 4,
  kCheckpoint = 5,
  kGradCheck = 6,
};

// Config file (default settings when `path` is empty) plus --set overrides,
// validated.
RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& sets);

struct GenDataArgs {
  std::filesystem::path config, out;
  std::size_t n = 0;  // 0: n_samples from the config
  std::vector<std::string> sets;
};
int gen_data(const GenDataArgs& a);

struct TrainArgs {
  std::filesystem::path config, data, out;
  std::vector<std::string> sets;
  bool resume = false;
};
int train(const TrainArgs& a);

struct EvalArgs {
  std::filesystem::path checkpoint, data, report;
  std::vector<std::size_t> n_list;
  std::vector<double> m_list;
  std::vector<std::string> sets;
};
int eval(const EvalArgs& a);

struct PreviewArgs {
  std::filesystem::path config, data;
  std::string id;
  std::uint64_t seed = 0;
  bool identity = false;
  std::vector<std::string> sets;
};
int augment_preview(const PreviewArgs& a);

struct GradCheckArgs {
  std::filesystem::path config;
  std::vector<std::string> sets;
  bool corrupt_bias_grad = false;
};
int grad_check(const GradCheckArgs& a);

struct ReportArgs {
  std::filesystem::path log, out;
};
int report(const ReportArgs& a);

}  // namespace ecrl::cli
