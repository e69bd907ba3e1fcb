#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ecrl/tensor/tensor.hpp"

namespace ecrl::tensor {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct AdamConfig {
  Real lr = 1e-4;
  Real beta1 = 0.9;
  Real beta2 = 0.999;
  Real eps = 1e-8;
};

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::int64_t step = 0;

  // Zero moments shaped like `params`.
  static AdamState for_params(std::span<const NamedTensor> params);
};

// Bias-corrected Adam update using each parameter's accumulated grad (a
// parameter with no grad is treated as having a zero gradient). Throws
// ConfigError for lr <= 0 and DimensionError when state shapes mismatch.
void adam_step(std::span<NamedTensor> params, AdamState& state, const AdamConfig& cfg);

void zero_grads(std::span<NamedTensor> params);

struct GradCheckEntry {
  std::string name;
  Real max_rel_error = 0.0;
  std::size_t worst_index = 0;
  Real analytic = 0.0;
  Real numeric = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  Real tolerance = 0.0;
  Real floor = 0.0;  // effective denominator floor
  bool passed() const;
  std::vector<std::string> failures() const;
};

struct GradCheckOptions {
  Real tolerance = 1e-4;
  Real step = 1e-5;
  // Denominator floor for the relative error |a - n| / max(|a|, |n|, floor).
  // Raised to 4 eps |L| / (step * tolerance), the roundoff resolution of the
  // difference quotient, when the loss is large.
  Real floor = 1e-6;
};

// Compares reverse-mode gradients of `loss_fn` against central finite
// differences for every entry of every parameter. `loss_fn` must build the
// scalar loss from the current parameter values and be deterministic.
GradCheckReport grad_check(const std::function<Tensor()>& loss_fn,
                           std::span<NamedTensor> params, const GradCheckOptions& opts = {});

}  // namespace ecrl::tensor
