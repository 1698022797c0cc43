#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ssvo {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized lazily by the backward pass
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into inputs' grads.
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer();
};

}  // namespace detail

/// Dense row-major array of doubles that records the operations producing it.
///
/// A Tensor is a cheap handle; copies alias the same node. Values are treated
/// as immutable once an op has consumed them, with the exception of leaf
/// parameters updated by the optimizer between graph evaluations.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;

  std::span<const double> data() const;
  /// Mutable view of the values. Only meaningful for leaves (parameters,
  /// optimizer-owned buffers); mutating an interior node does not re-run ops.
  std::span<double> mutable_data();
  double item() const;

  bool requires_grad() const;
  /// Gradient from the most recent backward pass; empty if never reached.
  std::span<const double> grad() const;
  bool has_grad() const;

  /// Reverse-mode pass from a scalar output. Gradients of every node that
  /// requires grad and feeds this output are reset, then populated.
  void backward() const;

  /// Same values, cut from the graph.
  Tensor detach() const;

  const detail::Node* id() const { return node_.get(); }
  std::shared_ptr<detail::Node> node() const { return node_; }

  /// Wraps a freshly computed node. Inputs and backward are dropped when no
  /// input requires grad.
  static Tensor make(Shape shape, std::vector<double> values,
                     std::vector<Tensor> inputs,
                     std::function<void(detail::Node&)> backward);

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

/// Gradient of a scalar output w.r.t. each leaf; leaves the output does not
/// depend on get an all-zero gradient.
std::vector<std::vector<double>> gradients(const Tensor& output, std::span<const Tensor> leaves);

/// When enabled every op verifies its output is finite and throws
/// NumericalError otherwise. Defaults to on in debug builds.
void set_finite_checks(bool enabled);
bool finite_checks_enabled();

}  // namespace ssvo
