#pragma once

// Minimal reverse-mode automatic differentiation over dense double tensors.
//
// A Value is a shared handle to a node of a dynamically built graph. Leaves
// created with Value::parameter() persist across steps and accumulate
// gradients; intermediate nodes keep their inputs alive only when some input
// requires a gradient. A graph instance must stay on one thread.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fade::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

class Value {
 public:
  Value() = default;

  static Value constant(Shape shape, std::vector<double> data);
  static Value parameter(Shape shape, std::vector<double> data);
  static Value zeros(Shape shape, bool requires_grad = false);
  static Value scalar(double v, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->data.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }

  std::span<const double> data() const { return node_->data; }
  std::span<double> mutable_data() { return node_->data; }
  double item() const;

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() { node_->grad.clear(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  // Reverse pass from a single-element value with seed gradient 1.
  void backward() const;

  // Same data, no history.
  Value detach() const;
  // Fresh leaf parameter holding a copy of the data.
  Value detach_as_parameter() const;

  const std::shared_ptr<Node>& node() const { return node_; }
  explicit Value(std::shared_ptr<Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<Node> node_;
};

// Throws NumericError naming `where` if any entry is NaN or infinite.
void check_finite(std::span<const double> xs, const char* where);

// [N,C,H,W] * [O,C,K,K] (+ [O]) -> [N,O,H,W]; stride 1, zero "same" padding, odd K.
Value conv2d(const Value& input, const Value& kernel, const Value& bias = {});
// [N,I] * [O,I]^T (+ [O]) -> [N,O]
Value linear(const Value& input, const Value& weight, const Value& bias = {});
Value relu(const Value& x);
// 2x2 window, stride 2, floor on odd sizes.
Value max_pool2d(const Value& x);
Value global_avg_pool(const Value& x);
Value add(const Value& a, const Value& b);
Value add_n(const std::vector<Value>& terms);
Value scale(const Value& x, double factor);
Value add_constant(const Value& x, std::span<const double> offset);
// Softmax along the last dimension of a 1-D or 2-D value.
Value softmax(const Value& x);
// Mean cross entropy of [N,K] logits against integer labels.
Value cross_entropy(const Value& logits, std::span<const int> labels);
// max_i |x_i|; the subgradient goes to the first index attaining the maximum.
Value max_norm(const Value& x);
// Row i of a 2-D value as a 1-D value.
Value row(const Value& x, std::size_t i);
// [N,C,H,W] -> [N,out_channels,H,W] by cycling input channels.
Value tile_channels(const Value& x, std::size_t out_channels);
// weights[k] * x
Value gate(const Value& x, const Value& weights, std::size_t k);
// Forward: one-hot of the first argmax of a 1-D value. Backward: identity, so
// the gradient of the hard sample flows into the soft one.
Value straight_through_onehot(const Value& soft);
std::size_t argmax(std::span<const double> xs);

}  // namespace fade::ad
