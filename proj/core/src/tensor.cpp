#include "ssvo/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>

#include "ssvo/errors.hpp"

namespace ssvo {

namespace {

#ifdef NDEBUG
bool g_finite_checks = false;
#else
bool g_finite_checks = true;
#endif

// Reverse topological order restricted to nodes that require grad.
std::vector<detail::Node*> topo_order(detail::Node* root) {
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;  // children before parents
}

}  // namespace

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

std::vector<double>& detail::Node::grad_buffer() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (numel(shape) != values.size()) {
    throw ShapeError(fmt::format("tensor of shape {} cannot hold {} values", to_string(shape), values.size()));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= node_->shape.size()) throw ShapeError(fmt::format("axis {} out of range for {}", axis, to_string(shape())));
  return node_->shape[axis];
}

std::size_t Tensor::size() const { return node_->value.size(); }

std::span<const double> Tensor::data() const { return node_->value; }

std::span<double> Tensor::mutable_data() { return node_->value; }

double Tensor::item() const {
  if (node_->value.size() != 1) throw ShapeError(fmt::format("item() on tensor of shape {}", to_string(shape())));
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

std::span<const double> Tensor::grad() const { return node_->grad; }

bool Tensor::has_grad() const { return node_->grad.size() == node_->value.size(); }

void Tensor::backward() const {
  if (node_->value.size() != 1) {
    throw ShapeError(fmt::format("backward() needs a scalar output, got shape {}", to_string(shape())));
  }
  if (!node_->requires_grad) return;
  auto order = topo_order(node_.get());
  for (auto* n : order) n->grad.assign(n->value.size(), 0.0);
  node_->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
}

Tensor Tensor::detach() const { return from(shape(), node_->value, false); }

Tensor Tensor::make(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                    std::function<void(detail::Node&)> backward) {
  if (g_finite_checks) {
    auto bad = std::find_if(values.begin(), values.end(), [](double v) { return !std::isfinite(v); });
    if (bad != values.end()) {
      throw NumericalError(fmt::format("non-finite value {} produced at flat index {} of tensor {}", *bad,
                                       bad - values.begin(), to_string(shape)));
    }
  }
  Tensor out = from(std::move(shape), std::move(values), false);
  const bool needs = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (needs) {
    out.node_->requires_grad = true;
    out.node_->inputs.reserve(inputs.size());
    for (auto& in : inputs) out.node_->inputs.push_back(in.node_);
    out.node_->backward = std::move(backward);
  }
  return out;
}

std::vector<std::vector<double>> gradients(const Tensor& output, std::span<const Tensor> leaves) {
  // A leaf the output never reached keeps a stale or empty buffer, so reset first.
  for (const auto& leaf : leaves) leaf.node()->grad.clear();
  output.backward();
  std::vector<std::vector<double>> result;
  result.reserve(leaves.size());
  for (const auto& leaf : leaves) {
    if (leaf.has_grad()) {
      result.emplace_back(leaf.grad().begin(), leaf.grad().end());
    } else {
      result.emplace_back(leaf.size(), 0.0);
    }
  }
  return result;
}

void set_finite_checks(bool enabled) { g_finite_checks = enabled; }
bool finite_checks_enabled() { return g_finite_checks; }

}  // namespace ssvo
