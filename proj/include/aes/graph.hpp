#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "aes/tensor.hpp"

namespace aes {

class Graph;

struct Node {
  Tensor value;
  Tensor grad;  // allocated only when requires_grad
  std::function<void()> backprop;
  bool requires_grad = false;
};

// Handle to a node on a Graph. Cheap to copy; lifetime bound to the graph.
class Var {
 public:
  Var() = default;
  Var(Graph* g, Node* n) : graph_(g), node_(n) {}

  const Tensor& value() const { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  Node* node() const { return node_; }
  Graph* graph() const { return graph_; }
  bool requires_grad() const { return node_->requires_grad; }
  explicit operator bool() const { return node_ != nullptr; }

  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }

 private:
  Graph* graph_ = nullptr;
  Node* node_ = nullptr;
};

// Tape of primitive applications. Creation order is a topological order, so
// the backward pass visits each recorded application exactly once by walking
// the tape in reverse. One forward pass per Graph instance.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaf with gradient tracking (parameters).
  Var leaf(Tensor value);
  // Value that never needs a gradient (inputs, masks, detached memory).
  Var constant(Tensor value);
  // Internal node; requires_grad is inherited from parents. The backprop
  // closure reads the node's grad and accumulates into the parents'.
  Var make(Tensor value, const std::vector<Node*>& parents,
           std::function<void(Node&)> backprop);

  // Seeds d(loss)/d(loss) = 1 and replays the tape in reverse.
  void backward(const Var& loss);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  std::vector<std::unique_ptr<Node>> nodes_;
};

}  // namespace aes
