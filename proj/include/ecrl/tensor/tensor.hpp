#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "ecrl/tensor/matrix.hpp"

namespace ecrl::tensor {

struct Node {
  Matrix value;
  Matrix grad;  // empty until first accumulation
  bool requires_grad = false;

  // Adds g into grad, allocating zeros on first use.
  void accumulate(const Matrix& g);
  Matrix& grad_buffer();
};

// Shared handle to a value (and, for differentiable tensors, its gradient).
// Copies alias the same node; values are not mutated after creation except
// by optimizer updates on parameters.
class Tensor {
 public:
  Tensor() = default;
  // Constant (no gradient).
  explicit Tensor(Matrix value);
  static Tensor parameter(Matrix value);

  bool defined() const { return node_ != nullptr; }
  const Matrix& value() const { return node_->value; }
  // Mutable access for optimizers and checkpoint loading.
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void zero_grad();

  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  Real item() const;

  const std::shared_ptr<Node>& node() const { return node_; }
  bool same_node(const Tensor& other) const { return node_ == other.node_; }

 private:
  friend class Tape;
  std::shared_ptr<Node> node_;
};

// Records differentiable operations for one forward pass. Install with
// TapeScope; ops executed while no tape is active (or whose inputs carry no
// gradient) are not recorded. The tape is discarded after backward().
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Currently installed tape for this thread, or nullptr.
  static Tape* current();

  // Creates the output tensor of an op. When any input requires a gradient
  // and a tape is active, the output is marked differentiable and `rule`
  // is recorded; `rule` receives the output node and must push
  // contributions into the inputs it captured.
  static Tensor record(Matrix value, std::initializer_list<const Tensor*> inputs,
                       std::function<void(const Node& out)> rule);
  static Tensor record(Matrix value, std::span<const Tensor> inputs,
                       std::function<void(const Node& out)> rule);

  std::size_t size() const { return ops_.size(); }
  // Seeds d(loss)/d(loss) = 1 and replays every recorded rule in reverse
  // order. The tape is cleared afterwards.
  void backward(const Tensor& loss);

 private:
  static Tensor record_impl(Matrix value, bool needs, std::function<void(const Node& out)> rule);

  struct Op {
    std::shared_ptr<Node> out;
    std::function<void(const Node& out)> rule;
  };
  std::vector<Op> ops_;
  friend class TapeScope;
};

class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Convenience: backward through the current tape.
void backward(const Tensor& loss);

namespace debug {
// Negative control for gradient checking: when enabled, the backward rule
// of the bias-broadcast op is scaled by 1.1.
void set_corrupt_bias_gradient(bool enabled);
bool corrupt_bias_gradient();
}  // namespace debug

}  // namespace ecrl::tensor
