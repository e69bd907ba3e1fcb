#include "ecrl/tensor/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "ecrl/errors.hpp"

namespace ecrl::tensor {

AdamState AdamState::for_params(std::span<const NamedTensor> params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.tensor.rows(), p.tensor.cols());
    s.v.emplace_back(p.tensor.rows(), p.tensor.cols());
  }
  return s;
}

void adam_step(std::span<NamedTensor> params, AdamState& state, const AdamConfig& cfg) {
  if (!(cfg.lr > 0.0)) throw ConfigError("lr", "learning rate must be > 0");
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw DimensionError("adam_step: optimizer state does not match parameter count");
  }
  state.step += 1;
  const Real bc1 = 1.0 - std::pow(cfg.beta1, static_cast<Real>(state.step));
  const Real bc2 = 1.0 - std::pow(cfg.beta2, static_cast<Real>(state.step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& t = params[p].tensor;
    Matrix& m = state.m[p];
    Matrix& v = state.v[p];
    if (!m.same_shape(t.value()) || !v.same_shape(t.value())) {
      throw DimensionError("adam_step: moment shape mismatch for " + params[p].name);
    }
    Matrix& w = t.mutable_value();
    const bool has = t.has_grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const Real g = has ? t.grad()[i] : 0.0;
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const Real mhat = m[i] / bc1;
      const Real vhat = v[i] / bc2;
      w[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

void zero_grads(std::span<NamedTensor> params) {
  for (auto& p : params) p.tensor.zero_grad();
}

bool GradCheckReport::passed() const {
  return std::all_of(entries.begin(), entries.end(),
                     [&](const GradCheckEntry& e) { return e.max_rel_error < tolerance; });
}

std::vector<std::string> GradCheckReport::failures() const {
  std::vector<std::string> out;
  for (const auto& e : entries) {
    if (e.max_rel_error < tolerance) continue;
    std::ostringstream os;
    os << e.name << " [" << e.worst_index << "]: rel_err=" << e.max_rel_error
       << " analytic=" << e.analytic << " numeric=" << e.numeric;
    out.push_back(os.str());
  }
  return out;
}

GradCheckReport grad_check(const std::function<Tensor()>& loss_fn,
                           std::span<NamedTensor> params, const GradCheckOptions& opts) {
  zero_grads(params);
  Real loss_value = 0.0;
  {
    Tape tape;
    TapeScope scope(tape);
    const Tensor loss = loss_fn();
    loss_value = loss.item();
    tape.backward(loss);
  }

  GradCheckReport report;
  report.tolerance = opts.tolerance;
  // Each loss evaluation carries a few ulps of |L| of roundoff, so central
  // differences cannot resolve gradients below ~kUlps eps |L| / h. Below
  // that the comparison is absolute at the tolerance.
  constexpr Real kUlps = 4.0;
  const Real resolution = kUlps * std::numeric_limits<Real>::epsilon() * std::abs(loss_value) / opts.step;
  report.floor = std::max(opts.floor, resolution / opts.tolerance);
  for (auto& p : params) {
    GradCheckEntry entry;
    entry.name = p.name;
    const Matrix analytic = p.tensor.has_grad() ? p.tensor.grad()
                                                : Matrix(p.tensor.rows(), p.tensor.cols());
    Matrix& w = p.tensor.mutable_value();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const Real saved = w[i];
      w[i] = saved + opts.step;
      const Real f_plus = loss_fn().item();
      w[i] = saved - opts.step;
      const Real f_minus = loss_fn().item();
      w[i] = saved;
      const Real numeric = (f_plus - f_minus) / (2.0 * opts.step);
      const Real a = analytic[i];
      const Real denom = std::max({std::abs(a), std::abs(numeric), report.floor});
      const Real rel = std::abs(a - numeric) / denom;
      if (i == 0 || rel > entry.max_rel_error) {
        entry.max_rel_error = rel;
        entry.worst_index = i;
        entry.analytic = a;
        entry.numeric = numeric;
      }
    }
    report.entries.push_back(std::move(entry));
  }
  zero_grads(params);
  return report;
}

}  // namespace ecrl::tensor
