#include "dmn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace dmn {

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value.assign(n->numel(), 0.0);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data,
                         bool requires_grad) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  if (n->numel() != data.size())
    throw ShapeMismatch("Tensor::from_data: data length does not match shape");
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from_data({1}, {v}, requires_grad);
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeMismatch("Tensor::item: not a scalar");
  return node_->value[0];
}

namespace detail {

Tensor make_op(std::vector<int> shape, std::vector<double> value,
               std::vector<TensorNodePtr> parents,
               std::function<void(TensorNode&)> backward_fn) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  if (n->numel() != n->value.size())
    throw ShapeMismatch("make_op: value length does not match shape");
  for (const auto& p : parents)
    if (p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(n));
}

}  // namespace detail

void backward(const Tensor& root) {
  if (!root.defined() || root.numel() != 1)
    throw ShapeMismatch("backward: root must be a defined scalar");

  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  // Iterative post-order DFS: graphs can be deep at training scale.
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode* parent = node->parents[next++].get();
      if (visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (TensorNode* n : order) {
    n->grad.assign(n->value.size(), 0.0);
    for (const auto& p : n->parents) p->ensure_grad();
  }
  root.node()->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
}

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeMismatch(std::string(op) + ": operand shapes differ");
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  auto pa = a.node(), pb = b.node();
  return detail::make_op(a.shape(), std::move(out), {pa, pb},
                         [pa, pb](TensorNode& n) {
                           for (std::size_t i = 0; i < n.grad.size(); ++i) {
                             if (pa->requires_grad) pa->grad[i] += n.grad[i];
                             if (pb->requires_grad) pb->grad[i] += n.grad[i];
                           }
                         });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  auto pa = a.node(), pb = b.node();
  return detail::make_op(a.shape(), std::move(out), {pa, pb},
                         [pa, pb](TensorNode& n) {
                           for (std::size_t i = 0; i < n.grad.size(); ++i) {
                             if (pa->requires_grad) pa->grad[i] += n.grad[i];
                             if (pb->requires_grad) pb->grad[i] -= n.grad[i];
                           }
                         });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * s;
  auto pa = a.node();
  return detail::make_op(a.shape(), std::move(out), {pa}, [pa, s](TensorNode& n) {
    for (std::size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += s * n.grad[i];
  });
}

Tensor abs_op(const Tensor& a) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(a.data()[i]);
  auto pa = a.node();
  return detail::make_op(a.shape(), std::move(out), {pa}, [pa](TensorNode& n) {
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      const double s = pa->value[i] > 0.0 ? 1.0 : (pa->value[i] < 0.0 ? -1.0 : 0.0);
      pa->grad[i] += s * n.grad[i];
    }
  });
}

Tensor square(const Tensor& a) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * a.data()[i];
  auto pa = a.node();
  return detail::make_op(a.shape(), std::move(out), {pa}, [pa](TensorNode& n) {
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      pa->grad[i] += 2.0 * pa->value[i] * n.grad[i];
  });
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  auto pa = a.node();
  return detail::make_op({1}, {acc}, {pa}, [pa](TensorNode& n) {
    const double g = n.grad[0];
    for (std::size_t i = 0; i < pa->grad.size(); ++i) pa->grad[i] += g;
  });
}

Tensor reshape(const Tensor& a, std::vector<int> new_shape) {
  std::size_t n = 1;
  for (int d : new_shape) n *= static_cast<std::size_t>(d);
  if (n != a.numel()) throw ShapeMismatch("reshape: element count mismatch");
  auto pa = a.node();
  std::vector<double> out = a.data();
  return detail::make_op(std::move(new_shape), std::move(out), {pa},
                         [pa](TensorNode& nd) {
                           for (std::size_t i = 0; i < nd.grad.size(); ++i)
                             pa->grad[i] += nd.grad[i];
                         });
}

Tensor concat_last(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw InvalidArgument("concat_last: no inputs");
  std::vector<int> lead(parts[0].shape().begin(), parts[0].shape().end() - 1);
  std::size_t rows = 1;
  for (int d : lead) rows *= static_cast<std::size_t>(d);
  int total_last = 0;
  std::vector<int> lasts;
  for (const auto& p : parts) {
    std::vector<int> pl(p.shape().begin(), p.shape().end() - 1);
    if (pl != lead)
      throw ShapeMismatch("concat_last: leading dimensions differ");
    lasts.push_back(p.shape().back());
    total_last += p.shape().back();
  }
  std::vector<int> out_shape = lead;
  out_shape.push_back(total_last);

  std::vector<double> out(rows * total_last);
  std::vector<TensorNodePtr> parents;
  for (const auto& p : parts) parents.push_back(p.node());
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t off = 0;
    for (std::size_t pi = 0; pi < parts.size(); ++pi) {
      const int w = lasts[pi];
      const auto& src = parts[pi].data();
      std::copy_n(src.begin() + r * w, w, out.begin() + r * total_last + off);
      off += w;
    }
  }
  auto lasts_copy = lasts;
  return detail::make_op(
      std::move(out_shape), std::move(out), parents,
      [parents, lasts_copy, rows, total_last](TensorNode& n) {
        for (std::size_t r = 0; r < rows; ++r) {
          std::size_t off = 0;
          for (std::size_t pi = 0; pi < parents.size(); ++pi) {
            const int w = lasts_copy[pi];
            if (parents[pi]->requires_grad) {
              for (int i = 0; i < w; ++i)
                parents[pi]->grad[r * w + i] += n.grad[r * total_last + off + i];
            }
            off += w;
          }
        }
      });
}

}  // namespace dmn
