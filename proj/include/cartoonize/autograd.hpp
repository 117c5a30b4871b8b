#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "cartoonize/tensor.hpp"

namespace ctz {

namespace detail {
struct Node;
}

/// Handle to a value in the computation graph. Copies share the node.
class Var {
 public:
  Var() = default;

  bool defined() const noexcept { return node_ != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  double item() const;

  bool requires_grad() const;
  bool is_leaf() const;
  // Only leaves may toggle; used to freeze a network for half of a step.
  void set_requires_grad(bool on);

  // Leaves only. Optimizers write through this.
  Tensor& mutable_value();

  bool has_grad() const;
  const Tensor& grad() const;
  void zero_grad();

  Var detach() const;

 private:
  friend Var make_op(Tensor, std::vector<Var>, std::function<void(const Tensor&, std::span<Var>)>);
  friend Var constant(Tensor);
  friend Var parameter(Tensor);
  friend void backward(const Var&);
  friend Tensor* grad_sink(const Var&);

  explicit Var(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

namespace detail {
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  bool leaf = true;
  std::vector<Var> inputs;
  std::function<void(const Tensor&, std::span<Var>)> backward;
};
}  // namespace detail

using BackwardFn = std::function<void(const Tensor& out_grad, std::span<Var> inputs)>;

Var constant(Tensor value);
Var parameter(Tensor value);

// Builds an interior node. When no input requires a gradient the result is a
// constant and `fn` is dropped.
Var make_op(Tensor value, std::vector<Var> inputs, BackwardFn fn);

// Gradient accumulator for `v`, zero-initialized on first use; nullptr when
// `v` does not require a gradient.
Tensor* grad_sink(const Var& v);

// Reverse sweep from a single-element output. Interior gradients are released
// as soon as they have been propagated; leaves accumulate.
void backward(const Var& output);

}  // namespace ctz
