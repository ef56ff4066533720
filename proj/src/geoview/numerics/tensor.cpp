#include "geoview/numerics/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "geoview/common/error.hpp"

namespace geoview::nn {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

double* TensorImpl::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad.data();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(nn::numel(shape), value);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return wrap(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  require(nn::numel(shape) == values.size(), ErrorKind::Dimension,
          "tensor shape " + shape_str(shape) + " does not match " +
              std::to_string(values.size()) + " values");
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return wrap(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

double Tensor::item() const {
  require(numel() == 1, ErrorKind::Contract,
          "item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  require(rank() == 2, ErrorKind::Dimension, "at(row, col) needs a matrix");
  return impl_->data[row * impl_->shape[1] + col];
}

std::span<double> Tensor::mutable_grad() {
  impl_->grad_buffer();
  return impl_->grad;
}

void Tensor::zero_grad() {
  std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  return from(shape(), impl_->data, impl_->requires_grad);
}

Tensor Tensor::detach() const { return from(shape(), impl_->data, false); }

namespace {

std::vector<TensorImpl*> topo_order(TensorImpl* root) {
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> seen;
  // (tensor, next input index) frames for a post-order walk.
  std::vector<std::pair<TensorImpl*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [t, idx] = stack.back();
    if (t->node && idx < t->node->inputs.size()) {
      TensorImpl* child = t->node->inputs[idx++].get();
      if (child->requires_grad && seen.insert(child).second) {
        stack.emplace_back(child, 0);
      }
      continue;
    }
    order.push_back(t);
    stack.pop_back();
  }
  return order;
}

}  // namespace

void backward(const Tensor& loss) {
  require(loss.defined() && loss.numel() == 1, ErrorKind::Contract,
          "backward() requires a scalar loss");
  TensorImpl* root = loss.impl().get();
  if (!root->requires_grad) return;
  auto order = topo_order(root);
  root->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* t = *it;
    if (t->node && t->node->backward && !t->grad.empty()) {
      t->node->backward(*t);
    }
  }
}

std::size_t graph_size(const Tensor& t) {
  if (!t.defined() || !t.requires_grad()) return 0;
  std::size_t n = 0;
  for (auto* impl : topo_order(t.impl().get())) n += impl->node ? 1 : 0;
  return n;
}

}  // namespace geoview::nn
