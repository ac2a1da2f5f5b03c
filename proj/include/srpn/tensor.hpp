#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace srpn {

namespace detail {

struct TensorNode {
  std::vector<int> shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until touched by a backward pass
  bool requires_grad = false;
  bool needs_grad = false;  // requires_grad, or depends on something that does

  int numel() const { return static_cast<int>(data.size()); }

  // Gradient buffer, zero-filled on first access.
  std::vector<double>& grad_ref() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

using NodePtr = std::shared_ptr<TensorNode>;

}  // namespace detail

std::string shape_str(const std::vector<int>& shape);

// Dense row-major tensor of 64-bit floats with an optional gradient buffer.
// Copies are handles to the same buffers; operations never mutate their
// inputs' data.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value,
                     bool requires_grad = false);
  static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int numel() const { return node_->numel(); }
  bool requires_grad() const { return node_->requires_grad; }
  bool needs_grad() const { return node_->needs_grad; }

  const double* data() const { return node_->data.data(); }
  double* data() { return node_->data.data(); }
  const std::vector<double>& data_vec() const { return node_->data; }

  // Value of a single-element tensor.
  double value() const;

  double at(int i) const { return node_->data[static_cast<std::size_t>(i)]; }
  // Element of a [C,H,W] tensor.
  double at(int c, int y, int x) const;

  bool has_grad() const { return !node_->grad.empty(); }
  const std::vector<double>& grad() const;
  std::vector<double>& grad_ref() { return node_->grad_ref(); }
  void zero_grad();

  detail::NodePtr node() const { return node_; }

 private:
  explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}
  detail::NodePtr node_;
};

// Ordered record of executed operations. backward() replays the recorded
// steps in exact reverse execution order; a tape that has run its reverse
// pass refuses further use until reset().
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::function<void()> step);
  void backward(const Tensor& loss);
  void reset();

  std::size_t size() const { return steps_.size(); }
  bool consumed() const { return consumed_; }

 private:
  std::vector<std::function<void()>> steps_;
  bool consumed_ = false;
};

}  // namespace srpn
