#include "cartoonize/autograd.hpp"

#include <unordered_set>

#include "cartoonize/errors.hpp"

namespace ctz {

namespace {
const Tensor kEmpty;

detail::Node& deref(const std::shared_ptr<detail::Node>& node) {
  if (!node) raise(ErrorKind::argument, "use of an undefined Var");
  return *node;
}
}  // namespace

const Tensor& Var::value() const { return deref(node_).value; }

double Var::item() const {
  const Tensor& v = value();
  if (v.size() != 1) raise(ErrorKind::shape, "item() on tensor of shape " + shape_string(v.shape()));
  return v[0];
}

bool Var::requires_grad() const { return deref(node_).requires_grad; }
bool Var::is_leaf() const { return deref(node_).leaf; }

void Var::set_requires_grad(bool on) {
  auto& node = deref(node_);
  if (!node.leaf) raise(ErrorKind::argument, "set_requires_grad on a non-leaf Var");
  node.requires_grad = on;
}

Tensor& Var::mutable_value() {
  auto& node = deref(node_);
  if (!node.leaf) raise(ErrorKind::argument, "mutable_value on a non-leaf Var");
  return node.value;
}

bool Var::has_grad() const { return !deref(node_).grad.empty(); }

const Tensor& Var::grad() const {
  const auto& node = deref(node_);
  return node.grad.empty() ? kEmpty : node.grad;
}

void Var::zero_grad() { deref(node_).grad = Tensor(); }

Var Var::detach() const { return constant(value()); }

Var constant(Tensor value) {
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var parameter(Tensor value) {
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

Var make_op(Tensor value, std::vector<Var> inputs, BackwardFn fn) {
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  node->leaf = false;
  bool needs = false;
  for (const auto& in : inputs) needs = needs || (in.defined() && in.requires_grad());
  if (needs) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward = std::move(fn);
  }
  return Var(std::move(node));
}

Tensor* grad_sink(const Var& v) {
  if (!v.defined() || !v.node_->requires_grad) return nullptr;
  auto& node = *v.node_;
  if (node.grad.empty()) node.grad = Tensor(node.value.shape());
  return &node.grad;
}

void backward(const Var& output) {
  if (output.value().size() != 1) {
    raise(ErrorKind::shape, "backward() needs a single-element output, got " + shape_string(output.shape()));
  }
  if (!output.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(output.node_.get(), 0);
  seen.insert(output.node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node* child = node->inputs[next++].node_.get();
      if (child && child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  auto* root = output.node_.get();
  if (root->grad.empty()) root->grad = Tensor(root->value.shape());
  root->grad[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->leaf || node->grad.empty() || !node->backward) continue;
    node->backward(node->grad, node->inputs);
    node->grad = Tensor();
  }
}

}  // namespace ctz
