#include "srpn/tensor.hpp"

#include <sstream>
#include <stdexcept>
#include <utility>

namespace srpn {

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

static std::size_t checked_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0)
      throw std::invalid_argument("tensor shape " + shape_str(shape) +
                                  " has a non-positive dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  auto node = std::make_shared<detail::TensorNode>();
  const std::size_t n = checked_numel(shape);
  node->shape = std::move(shape);
  node->data.assign(n, value);
  node->requires_grad = requires_grad;
  node->needs_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data,
                         bool requires_grad) {
  const std::size_t n = checked_numel(shape);
  if (data.size() != n)
    throw std::invalid_argument(
        "data length " + std::to_string(data.size()) +
        " does not match shape " + shape_str(shape));
  auto node = std::make_shared<detail::TensorNode>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  node->needs_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

double Tensor::value() const {
  if (numel() != 1)
    throw std::invalid_argument("value() on tensor of shape " +
                                shape_str(shape()));
  return node_->data[0];
}

double Tensor::at(int c, int y, int x) const {
  const auto& s = node_->shape;
  if (s.size() != 3)
    throw std::invalid_argument("at(c,y,x) on tensor of shape " +
                                shape_str(s));
  return node_->data[(static_cast<std::size_t>(c) * s[1] + y) * s[2] + x];
}

const std::vector<double>& Tensor::grad() const {
  if (node_->grad.empty())
    throw std::logic_error("gradient has not been computed for this tensor");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) node_->grad.assign(node_->data.size(), 0.0);
}

void Tape::record(std::function<void()> step) {
  if (consumed_)
    throw std::logic_error(
        "tape already ran its reverse pass; reset() before recording new "
        "operations");
  steps_.push_back(std::move(step));
}

void Tape::backward(const Tensor& loss) {
  if (consumed_)
    throw std::logic_error(
        "backward() called twice on the same tape without a new forward");
  if (!loss.defined() || loss.numel() != 1)
    throw std::invalid_argument("backward() requires a scalar loss");
  consumed_ = true;
  loss.node()->grad_ref()[0] = 1.0;
  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
}

void Tape::reset() {
  steps_.clear();
  consumed_ = false;
}

}  // namespace srpn
