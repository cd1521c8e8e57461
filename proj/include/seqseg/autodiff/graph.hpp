#pragma once

#include <deque>
#include <functional>
#include <utility>
#include <vector>

#include "seqseg/core/tensor.hpp"

namespace seqseg::autodiff {

struct Var {
  int id = -1;
  bool valid() const noexcept { return id >= 0; }
};

/// Learnable tensor together with its accumulated gradient.
template <typename T>
struct Parameter {
  Tensor<T> value;
  Tensor<T> grad;

  explicit Parameter(Tensor<T> v = {}) : value(std::move(v)), grad(value.channels(), value.height(), value.width()) {}
  void zero_grad() { grad.fill(T(0)); }
};

/// Reverse-mode tape. Nodes are appended in evaluation order and swept backwards.
/// A graph serves a single forward/backward pass and is not shared across threads.
template <typename T>
class Graph {
 public:
  /// Receives the op's output value and its accumulated output gradient.
  using BackwardFn = std::function<void(Graph&, const Tensor<T>&, const Tensor<T>&)>;

  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool grad_enabled() const noexcept { return grad_enabled_; }

  Var constant(Tensor<T> value) {
    Node& n = nodes_.emplace_back();
    n.owned_value = std::move(value);
    n.value = &n.owned_value;
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  /// Leaf bound to external storage; gradients accumulate straight into `p.grad`.
  Var parameter(Parameter<T>& p) {
    Node& n = nodes_.emplace_back();
    n.value = &p.value;
    if (grad_enabled_) {
      n.grad = &p.grad;
      n.requires_grad = true;
    }
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  /// Read-only leaf bound to external storage (frozen weights).
  Var constant_ref(const Tensor<T>& value) {
    Node& n = nodes_.emplace_back();
    n.value = &value;
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  bool any_requires_grad(std::initializer_list<Var> vs) const {
    if (!grad_enabled_) return false;
    for (Var v : vs) {
      if (v.valid() && nodes_[v.id].requires_grad) return true;
    }
    return false;
  }

  /// Records an op result. `backward` runs only if some parent requires a gradient.
  Var record(Tensor<T> value, bool requires_grad, BackwardFn backward) {
    Node& n = nodes_.emplace_back();
    n.owned_value = std::move(value);
    n.value = &n.owned_value;
    if (requires_grad) {
      n.requires_grad = true;
      n.backward = std::move(backward);
    }
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  const Tensor<T>& value(Var v) const { return *nodes_[v.id].value; }

  /// Gradient buffer of `v`, zero-initialized on first touch.
  Tensor<T>& grad(Var v) {
    Node& n = nodes_[v.id];
    if (!n.grad) {
      n.owned_grad = Tensor<T>(n.value->channels(), n.value->height(), n.value->width());
      n.grad = &n.owned_grad;
    }
    n.touched = true;
    return *n.grad;
  }
  bool has_grad(Var v) const { return nodes_[v.id].touched; }

  /// Adds `g` into the gradient of `v` (no-op if `v` does not require a gradient).
  void accumulate(Var v, const Tensor<T>& g) {
    if (!nodes_[v.id].requires_grad) return;
    require_same_shape(value(v), g, "accumulate");
    Tensor<T>& dst = grad(v);
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  }

  void backward() {
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.touched && n.backward) n.backward(*this, *n.value, *n.grad);
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> owned_value;
    const Tensor<T>* value = nullptr;
    Tensor<T> owned_grad;
    Tensor<T>* grad = nullptr;
    bool requires_grad = false;
    bool touched = false;
    BackwardFn backward;
  };

  bool grad_enabled_;
  std::deque<Node> nodes_;
};

}  // namespace seqseg::autodiff
