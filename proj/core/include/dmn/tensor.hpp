#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "dmn/common.hpp"

namespace dmn {

struct TensorNode;
using TensorNodePtr = std::shared_ptr<TensorNode>;

// One node of the dynamically built computation graph. `backward_fn` reads
// this node's grad and accumulates into the parents' grads.
struct TensorNode {
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<TensorNodePtr> parents;
  std::function<void(TensorNode&)> backward_fn;

  std::size_t numel() const {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
  }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

// Value-semantics handle over a graph node.
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(TensorNodePtr n) : node_(std::move(n)) {}

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  const std::vector<int>& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->numel(); }
  std::vector<double>& data() { return node_->value; }
  const std::vector<double>& data() const { return node_->value; }
  std::vector<double>& grad() { return node_->grad; }
  const std::vector<double>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  double item() const;

  TensorNodePtr node() const { return node_; }
  bool defined() const { return node_ != nullptr; }

private:
  TensorNodePtr node_;
};

// Reverse-mode sweep from a scalar root. Zeroes the grads of every reachable
// node, seeds the root with 1, and visits each node exactly once in reverse
// topological order.
void backward(const Tensor& root);

// Graph-construction helpers shared by the layer implementations.
namespace detail {
Tensor make_op(std::vector<int> shape, std::vector<double> value,
               std::vector<TensorNodePtr> parents,
               std::function<void(TensorNode&)> backward_fn);
}

// Elementwise / reduction primitives.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor abs_op(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sum(const Tensor& a);                 // -> scalar
Tensor reshape(const Tensor& a, std::vector<int> new_shape);
Tensor concat_last(const std::vector<Tensor>& parts);

}  // namespace dmn
