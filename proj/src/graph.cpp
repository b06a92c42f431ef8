#include "aes/graph.hpp"

namespace aes {

Var Graph::leaf(Tensor value) {
  auto node = std::make_unique<Node>();
  node->grad = Tensor(value.shape());
  node->value = std::move(value);
  node->requires_grad = true;
  Node* raw = node.get();
  nodes_.push_back(std::move(node));
  return Var(this, raw);
}

Var Graph::constant(Tensor value) {
  auto node = std::make_unique<Node>();
  node->value = std::move(value);
  node->requires_grad = false;
  Node* raw = node.get();
  nodes_.push_back(std::move(node));
  return Var(this, raw);
}

Var Graph::make(Tensor value, const std::vector<Node*>& parents,
                std::function<void(Node&)> backprop) {
  auto node = std::make_unique<Node>();
  bool needs = false;
  for (Node* p : parents) needs = needs || p->requires_grad;
  node->requires_grad = needs;
  node->value = std::move(value);
  Node* raw = node.get();
  if (needs) {
    node->grad = Tensor(raw->value.shape());
    node->backprop = [raw, fn = std::move(backprop)]() { fn(*raw); };
  }
  nodes_.push_back(std::move(node));
  return Var(this, raw);
}

void Graph::backward(const Var& loss) {
  if (loss.value().size() != 1) {
    throw ShapeError("backward expects a scalar loss, got " +
                     shape_str(loss.value().shape()));
  }
  if (!loss.requires_grad()) return;
  loss.node()->grad[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node* n = it->get();
    if (n->requires_grad && n->backprop) n->backprop();
  }
}

}  // namespace aes
