#include "ecrl/tensor/tensor.hpp"

#include <atomic>

#include "ecrl/errors.hpp"

namespace ecrl::tensor {

namespace {
thread_local Tape* g_current_tape = nullptr;
std::atomic<bool> g_corrupt_bias{false};
}  // namespace

void Node::accumulate(const Matrix& g) {
  Matrix& buf = grad_buffer();
  auto& dst = buf.data();
  const auto& src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

Matrix& Node::grad_buffer() {
  if (grad.empty() && !value.empty()) grad = Matrix(value.rows(), value.cols());
  return grad;
}

Tensor::Tensor(Matrix value) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
}

Tensor Tensor::parameter(Matrix value) {
  Tensor t(std::move(value));
  t.node_->requires_grad = true;
  return t;
}

void Tensor::zero_grad() {
  if (node_) node_->grad = Matrix();
}

Real Tensor::item() const {
  if (node_->value.size() != 1) {
    throw DimensionError("item() on tensor of size " + std::to_string(node_->value.size()));
  }
  return node_->value[0];
}

Tape* Tape::current() { return g_current_tape; }

Tensor Tape::record(Matrix value, std::initializer_list<const Tensor*> inputs,
                    std::function<void(const Node& out)> rule) {
  bool needs = false;
  for (const Tensor* in : inputs) needs = needs || in->requires_grad();
  return record_impl(std::move(value), needs, std::move(rule));
}

Tensor Tape::record(Matrix value, std::span<const Tensor> inputs,
                    std::function<void(const Node& out)> rule) {
  bool needs = false;
  for (const Tensor& in : inputs) needs = needs || in.requires_grad();
  return record_impl(std::move(value), needs, std::move(rule));
}

Tensor Tape::record_impl(Matrix value, bool needs, std::function<void(const Node& out)> rule) {
  Tensor out(std::move(value));
  Tape* tape = g_current_tape;
  if (tape == nullptr || !needs) return out;
  out.node_->requires_grad = true;
  tape->ops_.push_back(Op{out.node_, std::move(rule)});
  return out;
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.value().size() != 1) {
    throw ContractError("backward() requires a scalar loss");
  }
  if (!loss.requires_grad()) {
    ops_.clear();
    return;
  }
  loss.node()->accumulate(Matrix(1, 1, 1.0));
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    const Node& out = *it->out;
    if (out.grad.empty()) continue;
    it->rule(out);
  }
  ops_.clear();
}

TapeScope::TapeScope(Tape& tape) : previous_(g_current_tape) { g_current_tape = &tape; }
TapeScope::~TapeScope() { g_current_tape = previous_; }

void backward(const Tensor& loss) {
  Tape* tape = Tape::current();
  if (tape == nullptr) throw ContractError("backward() called with no active tape");
  tape->backward(loss);
}

namespace debug {
void set_corrupt_bias_gradient(bool enabled) { g_corrupt_bias.store(enabled); }
bool corrupt_bias_gradient() { return g_corrupt_bias.load(); }
}  // namespace debug

}  // namespace ecrl::tensor
