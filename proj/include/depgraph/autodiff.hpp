#pragma once

// Minimal reverse-mode automatic differentiation over dense double tensors.
//
// Every op returns a Var that owns its value and, while gradient recording is
// enabled, a closure that pushes its output gradient back to its parents.
// backward() walks the recorded graph in reverse topological order.

#include <cstdint>
#include <functional>
#include <memory>
#include <string_view>
#include <vector>

#include "depgraph/tensor.hpp"

namespace depgraph::ad {

struct Node {
  std::vector<double> value;
  std::vector<double> grad;
  Shape shape;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
  bool requires_grad = false;
  std::string_view op = "leaf";

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
  }
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var constant(Tensor t);
  static Var constant(Shape shape, std::vector<double> values);
  static Var scalar(double v);
  // Trainable leaf; its gradient is available after backward().
  static Var leaf(Tensor t, bool requires_grad = true);

  const std::vector<double>& value() const { return node_->value; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->value.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  double item() const;
  const std::vector<double>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  std::string_view op() const { return node_->op; }
  Tensor tensor() const { return Tensor(node_->shape, node_->value); }

  const std::shared_ptr<Node>& node() const { return node_; }
  bool valid() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Seeds d(root)/d(root) = 1 and accumulates gradients into every reachable leaf.
void backward(const Var& root);

// Throws NumericError naming `where` if any entry of v is not finite.
void check_finite(const Var& v, std::string_view where);

// Elementwise, equal shapes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);
// a * s where s is a scalar Var of shape {1}.
Var mul_scalar(const Var& a, const Var& s);
Var add_scalar(const Var& a, double c);
Var relu(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var square(const Var& a);

// Reductions to a scalar of shape {1}.
Var sum(const Var& a);
Var mean(const Var& a);
Var dot(const Var& a, const Var& b);

Var reshape(const Var& a, Shape shape);
// Flat concatenation; result is 1-D.
Var concat(const std::vector<Var>& parts);
// Flat range [offset, offset + length); result is 1-D.
Var slice(const Var& a, std::size_t offset, std::size_t length);

// 2-D matrix product [m,k] x [k,n].
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
// [n] x [m] -> [n,m] outer product.
Var outer(const Var& u, const Var& v);
// x: [in] or [n,in]; w: [out,in]; b: [out] (may be invalid for no bias).
Var linear(const Var& x, const Var& w, const Var& b);
// Row-wise softmax of a 2-D tensor. When mask is given (row-major, same size),
// zero entries are excluded and receive probability 0; every row needs at
// least one unmasked entry.
Var softmax_rows(const Var& a, const std::vector<std::uint8_t>* mask = nullptr);
// [n] (+) [m] -> [n,m] with out(i,j) = u(i) + v(j).
Var outer_add(const Var& u, const Var& v);
// [n,f] + b[f] broadcast over rows.
Var add_rowwise(const Var& x, const Var& b);
// [n,a] | [n,b] | ... -> [n, a+b+...].
Var concat_cols(const std::vector<Var>& parts);
// Mean over the rows of [n,f] -> [f].
Var mean_rows(const Var& a);

// Volumes are channel-first [C,T,H,W].
// Stride 1, zero "same" padding; odd kernel extents. w: [Co,C,kt,kh,kw], b: [Co].
Var conv3d(const Var& x, const Var& w, const Var& b);
// Non-overlapping spatial average pooling by an integer factor.
Var avg_pool_spatial(const Var& x, std::size_t factor);
// [C,T,H,W] -> [T,C], averaging over H and W.
Var spatial_mean(const Var& x);
// Sequences are time-major [T,C].
// [T,C] -> [T/factor,C]; frame j is the mean of frames [j*factor, (j+1)*factor).
Var temporal_mean_pool(const Var& x, std::size_t factor);
// Stride 1, zero "same" padding, odd kernel. x: [T,C], w: [Co,C,k], b: [Co] -> [T,Co].
Var conv1d(const Var& x, const Var& w, const Var& b);

}  // namespace depgraph::ad
