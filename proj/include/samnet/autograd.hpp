#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "samnet/tensor.hpp"

namespace samnet {

// Trainable array with its accumulated gradient.
template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)), grad(Tensor<T>::zeros_like(value)) {}
  void zero_grad() { grad = Tensor<T>::zeros_like(value); }
};

struct Var {
  int id = -1;
  bool valid() const noexcept { return id >= 0; }
};

// Reverse-mode tape. Nodes are appended in evaluation order, so a reverse sweep
// visits every node after all of its consumers.
template <class T>
class Graph {
 public:
  using Backward = std::function<void(Graph&, Var self)>;

  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool grad_enabled() const noexcept { return grad_enabled_; }

  Var input(Tensor<T> value, bool requires_grad = false) {
    return push(std::move(value), requires_grad && grad_enabled_, nullptr);
  }

  // Leaf bound to a parameter; backward() adds its gradient into p.grad.
  Var param(Parameter<T>& p) {
    Var v = push(p.value, grad_enabled_, nullptr);
    if (grad_enabled_) bindings_.emplace_back(v.id, &p);
    return v;
  }

  // Records an op result. The backward closure runs only when some parent needs a gradient.
  Var record(Tensor<T> value, const std::vector<Var>& parents, Backward backward) {
    bool needs = false;
    if (grad_enabled_)
      for (Var p : parents) needs = needs || nodes_[p.id].requires_grad;
    return push(std::move(value), needs, needs ? std::move(backward) : nullptr);
  }

  const Tensor<T>& value(Var v) const { return nodes_.at(v.id).value; }
  Tensor<T>& mutable_value(Var v) { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  // Gradient buffer of v, zero-initialized on first access.
  Tensor<T>& grad(Var v) {
    auto& n = nodes_.at(v.id);
    if (n.grad.empty() && !n.value.empty()) n.grad = Tensor<T>::zeros_like(n.value);
    return n.grad;
  }
  bool has_grad(Var v) const { return !nodes_.at(v.id).grad.empty(); }

  void backward(Var root) {
    if (!grad_enabled_) throw Error("backward() on a graph without gradient tracking");
    if (value(root).size() != 1) throw ShapeError("backward() root must be a scalar");
    grad(root)[0] = T(1);
    for (int id = root.id; id >= 0; --id) {
      auto& n = nodes_[id];
      if (n.backward && !n.grad.empty()) n.backward(*this, Var{id});
    }
    for (auto& [id, p] : bindings_)
      if (!nodes_[id].grad.empty()) p->grad += nodes_[id].grad;
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    Backward backward;
    bool requires_grad = false;
  };

  Var push(Tensor<T> value, bool requires_grad, Backward backward) {
    nodes_.push_back(Node{std::move(value), {}, std::move(backward), requires_grad});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  std::vector<Node> nodes_;
  std::vector<std::pair<int, Parameter<T>*>> bindings_;
  bool grad_enabled_;
};

}  // namespace samnet
