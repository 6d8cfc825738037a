#include "depgraph/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <unordered_set>

#include "depgraph/errors.hpp"

namespace depgraph::ad {

namespace {

thread_local bool g_grad_enabled = true;

using NodePtr = std::shared_ptr<Node>;

void require(bool ok, const char* op, const std::string& what) {
  if (!ok) throw DomainError(std::string(op) + ": " + what);
}

// Builds an output node. The backward closure is only attached when recording
// is on and some parent needs a gradient.
Var make(std::string_view op, Shape shape, std::vector<double> value, std::vector<NodePtr> parents,
         std::function<void(Node&)> bw) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->shape = std::move(shape);
  n->value = std::move(value);
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) needs = needs || (p && p->requires_grad);
  }
  if (needs) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward = std::move(bw);
  }
  return Var(std::move(n));
}

// Accumulates into a parent only when it tracks gradients.
inline bool wants(const NodePtr& p) { return p && p->requires_grad; }

// Valid output range for one kernel tap under "same" zero padding.
inline void tap_range(std::size_t n, std::size_t tap, std::size_t pad, std::size_t& lo, std::size_t& hi) {
  // input = out + tap - pad must lie in [0, n)
  lo = tap < pad ? pad - tap : 0;
  hi = tap > pad ? n - (tap - pad) : n;
  if (tap > pad && tap - pad >= n) hi = 0;
  if (lo > hi) lo = hi;
}

}  // namespace

Var Var::constant(Tensor t) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(t.shape);
  n->value = std::move(t.data);
  return Var(std::move(n));
}

Var Var::constant(Shape shape, std::vector<double> values) {
  return constant(Tensor(std::move(shape), std::move(values)));
}

Var Var::scalar(double v) { return constant(Shape{1}, {v}); }

Var Var::leaf(Tensor t, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(t.shape);
  n->value = std::move(t.data);
  n->requires_grad = requires_grad;
  return Var(std::move(n));
}

double Var::item() const {
  if (node_->value.size() != 1) throw DomainError("item(): tensor is not a scalar");
  return node_->value[0];
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

void backward(const Var& root) {
  require(root.valid() && root.size() == 1, "backward", "root must be a scalar");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS for a topological ordering.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p && p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  Node& r = *root.node();
  r.ensure_grad();
  r.grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

void check_finite(const Var& v, std::string_view where) {
  for (double x : v.value()) {
    if (!std::isfinite(x)) throw NumericError("non-finite activation in " + std::string(where));
  }
}

Var add(const Var& a, const Var& b) {
  require(a.shape() == b.shape(), "add", "shape mismatch " + shape_to_string(a.shape()) + " vs " +
                                             shape_to_string(b.shape()));
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  NodePtr pa = a.node(), pb = b.node();
  return make("add", a.shape(), std::move(out), {pa, pb}, [pa, pb](Node& n) {
    for (const auto& p : {pa, pb}) {
      if (!wants(p)) continue;
      p->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) p->grad[i] += n.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require(a.shape() == b.shape(), "sub", "shape mismatch");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  NodePtr pa = a.node(), pb = b.node();
  return make("sub", a.shape(), std::move(out), {pa, pb}, [pa, pb](Node& n) {
    if (wants(pa)) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += n.grad[i];
    }
    if (wants(pb)) {
      pb->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) pb->grad[i] -= n.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require(a.shape() == b.shape(), "mul", "shape mismatch");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  NodePtr pa = a.node(), pb = b.node();
  return make("mul", a.shape(), std::move(out), {pa, pb}, [pa, pb](Node& n) {
    if (wants(pa)) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += n.grad[i] * pb->value[i];
    }
    if (wants(pb)) {
      pb->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) pb->grad[i] += n.grad[i] * pa->value[i];
    }
  });
}

Var scale(const Var& a, double c) {
  std::vector<double> out(a.value());
  for (double& v : out) v *= c;
  NodePtr pa = a.node();
  return make("scale", a.shape(), std::move(out), {pa}, [pa, c](Node& n) {
    pa->ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += c * n.grad[i];
  });
}

Var mul_scalar(const Var& a, const Var& s) {
  require(s.size() == 1, "mul_scalar", "scale must be a scalar");
  const double c = s.value()[0];
  std::vector<double> out(a.value());
  for (double& v : out) v *= c;
  NodePtr pa = a.node(), ps = s.node();
  return make("mul_scalar", a.shape(), std::move(out), {pa, ps}, [pa, ps](Node& n) {
    const double c = ps->value[0];
    if (wants(pa)) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += c * n.grad[i];
    }
    if (wants(ps)) {
      ps->ensure_grad();
      double acc = 0.0;
      for (std::size_t i = 0; i < n.grad.size(); ++i) acc += pa->value[i] * n.grad[i];
      ps->grad[0] += acc;
    }
  });
}

Var add_scalar(const Var& a, double c) {
  std::vector<double> out(a.value());
  for (double& v : out) v += c;
  NodePtr pa = a.node();
  return make("add_scalar", a.shape(), std::move(out), {pa}, [pa](Node& n) {
    pa->ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += n.grad[i];
  });
}

Var relu(const Var& a) { return leaky_relu(a, 0.0); }

Var leaky_relu(const Var& a, double slope) {
  std::vector<double> out(a.value());
  for (double& v : out) v = v > 0.0 ? v : slope * v;
  NodePtr pa = a.node();
  return make(slope == 0.0 ? "relu" : "leaky_relu", a.shape(), std::move(out), {pa}, [pa, slope](Node& n) {
    pa->ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      pa->grad[i] += pa->value[i] > 0.0 ? n.grad[i] : slope * n.grad[i];
    }
  });
}

Var square(const Var& a) {
  std::vector<double> out(a.value());
  for (double& v : out) v *= v;
  NodePtr pa = a.node();
  return make("square", a.shape(), std::move(out), {pa}, [pa](Node& n) {
    pa->ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += 2.0 * pa->value[i] * n.grad[i];
  });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value()) s += v;
  NodePtr pa = a.node();
  return make("sum", Shape{1}, {s}, {pa}, [pa](Node& n) {
    pa->ensure_grad();
    for (double& g : pa->grad) g += n.grad[0];
  });
}

Var mean(const Var& a) {
  require(a.size() > 0, "mean", "empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Var dot(const Var& a, const Var& b) {
  require(a.size() == b.size(), "dot", "size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.value()[i] * b.value()[i];
  NodePtr pa = a.node(), pb = b.node();
  return make("dot", Shape{1}, {s}, {pa, pb}, [pa, pb](Node& n) {
    const double g = n.grad[0];
    if (wants(pa)) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < pa->value.size(); ++i) pa->grad[i] += g * pb->value[i];
    }
    if (wants(pb)) {
      pb->ensure_grad();
      for (std::size_t i = 0; i < pb->value.size(); ++i) pb->grad[i] += g * pa->value[i];
    }
  });
}

Var reshape(const Var& a, Shape shape) {
  require(numel(shape) == a.size(), "reshape", "element count mismatch");
  NodePtr pa = a.node();
  return make("reshape", std::move(shape), a.value(), {pa}, [pa](Node& n) {
    pa->ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += n.grad[i];
  });
}

Var concat(const std::vector<Var>& parts) {
  std::vector<double> out;
  std::vector<NodePtr> parents;
  for (const auto& p : parts) {
    out.insert(out.end(), p.value().begin(), p.value().end());
    parents.push_back(p.node());
  }
  const std::size_t total = out.size();
  return make("concat", Shape{total}, std::move(out), parents, [parents](Node& n) {
    std::size_t off = 0;
    for (const auto& p : parents) {
      const std::size_t len = p->value.size();
      if (wants(p)) {
        p->ensure_grad();
        for (std::size_t i = 0; i < len; ++i) p->grad[i] += n.grad[off + i];
      }
      off += len;
    }
  });
}

Var slice(const Var& a, std::size_t offset, std::size_t length) {
  require(offset + length <= a.size(), "slice", "range out of bounds");
  std::vector<double> out(a.value().begin() + static_cast<std::ptrdiff_t>(offset),
                          a.value().begin() + static_cast<std::ptrdiff_t>(offset + length));
  NodePtr pa = a.node();
  return make("slice", Shape{length}, std::move(out), {pa}, [pa, offset](Node& n) {
    pa->ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) pa->grad[offset + i] += n.grad[i];
  });
}

Var matmul(const Var& a, const Var& b) {
  require(a.shape().size() == 2 && b.shape().size() == 2, "matmul", "operands must be 2-D");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  require(b.dim(0) == k, "matmul", "inner dimension mismatch " + shape_to_string(a.shape()) + " x " +
                                       shape_to_string(b.shape()));
  std::vector<double> out(m * n, 0.0);
  const auto& A = a.value();
  const auto& B = b.value();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * B[p * n + j];
    }
  }
  NodePtr pa = a.node(), pb = b.node();
  return make("matmul", Shape{m, n}, std::move(out), {pa, pb}, [pa, pb, m, k, n](Node& node) {
    const auto& G = node.grad;
    if (wants(pa)) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += G[i * n + j] * pb->value[p * n + j];
          pa->grad[i * k + p] += s;
        }
    }
    if (wants(pb)) {
      pb->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av = pa->value[i * k + p];
          for (std::size_t j = 0; j < n; ++j) pb->grad[p * n + j] += av * G[i * n + j];
        }
    }
  });
}

Var transpose(const Var& a) {
  require(a.shape().size() == 2, "transpose", "operand must be 2-D");
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a.value()[i * c + j];
  NodePtr pa = a.node();
  return make("transpose", Shape{c, r}, std::move(out), {pa}, [pa, r, c](Node& n) {
    pa->ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) pa->grad[i * c + j] += n.grad[j * r + i];
  });
}

Var outer(const Var& u, const Var& v) {
  require(u.shape().size() == 1 && v.shape().size() == 1, "outer", "operands must be 1-D");
  return matmul(reshape(u, Shape{u.size(), 1}), reshape(v, Shape{1, v.size()}));
}

Var linear(const Var& x, const Var& w, const Var& b) {
  require(w.shape().size() == 2, "linear", "weight must be [out,in]");
  const std::size_t out_dim = w.dim(0), in_dim = w.dim(1);
  const bool vector_in = x.shape().size() == 1;
  const std::size_t rows = vector_in ? 1 : x.dim(0);
  require((vector_in ? x.dim(0) : x.dim(1)) == in_dim && (vector_in || x.shape().size() == 2), "linear",
          "input " + shape_to_string(x.shape()) + " does not match weight " + shape_to_string(w.shape()));
  const bool has_bias = b.valid();
  require(!has_bias || b.size() == out_dim, "linear", "bias size mismatch");

  std::vector<double> out(rows * out_dim);
  const auto& X = x.value();
  const auto& W = w.value();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t o = 0; o < out_dim; ++o) {
      double s = has_bias ? b.value()[o] : 0.0;
      const double* wrow = &W[o * in_dim];
      const double* xrow = &X[r * in_dim];
      for (std::size_t i = 0; i < in_dim; ++i) s += wrow[i] * xrow[i];
      out[r * out_dim + o] = s;
    }
  }
  Shape shape = vector_in ? Shape{out_dim} : Shape{rows, out_dim};
  NodePtr px = x.node(), pw = w.node(), pb = has_bias ? b.node() : nullptr;
  return make("linear", std::move(shape), std::move(out), {px, pw, pb},
              [px, pw, pb, rows, in_dim, out_dim](Node& n) {
                const auto& G = n.grad;
                if (wants(px)) {
                  px->ensure_grad();
                  for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t o = 0; o < out_dim; ++o) {
                      const double g = G[r * out_dim + o];
                      if (g == 0.0) continue;
                      for (std::size_t i = 0; i < in_dim; ++i)
                        px->grad[r * in_dim + i] += g * pw->value[o * in_dim + i];
                    }
                }
                if (wants(pw)) {
                  pw->ensure_grad();
                  for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t o = 0; o < out_dim; ++o) {
                      const double g = G[r * out_dim + o];
                      if (g == 0.0) continue;
                      for (std::size_t i = 0; i < in_dim; ++i)
                        pw->grad[o * in_dim + i] += g * px->value[r * in_dim + i];
                    }
                }
                if (wants(pb)) {
                  pb->ensure_grad();
                  for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t o = 0; o < out_dim; ++o) pb->grad[o] += G[r * out_dim + o];
                }
              });
}

Var softmax_rows(const Var& a, const std::vector<std::uint8_t>* mask) {
  require(a.shape().size() == 2, "softmax_rows", "operand must be 2-D");
  const std::size_t r = a.dim(0), c = a.dim(1);
  require(!mask || mask->size() == r * c, "softmax_rows", "mask size mismatch");
  std::vector<double> out(r * c, 0.0);
  const auto& A = a.value();
  for (std::size_t i = 0; i < r; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j)
      if (!mask || (*mask)[i * c + j]) mx = std::max(mx, A[i * c + j]);
    require(std::isfinite(mx) || mx > 0, "softmax_rows", "row has no unmasked entry");
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      if (mask && !(*mask)[i * c + j]) continue;
      out[i * c + j] = std::exp(A[i * c + j] - mx);
      z += out[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= z;
  }
  NodePtr pa = a.node();
  auto self_value = std::make_shared<std::vector<double>>(out);
  return make("softmax_rows", Shape{r, c}, std::move(out), {pa}, [pa, r, c, self_value](Node& n) {
    pa->ensure_grad();
    const auto& P = *self_value;
    for (std::size_t i = 0; i < r; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < c; ++j) s += n.grad[i * c + j] * P[i * c + j];
      for (std::size_t j = 0; j < c; ++j) pa->grad[i * c + j] += P[i * c + j] * (n.grad[i * c + j] - s);
    }
  });
}

Var outer_add(const Var& u, const Var& v) {
  require(u.shape().size() == 1 && v.shape().size() == 1, "outer_add", "operands must be 1-D");
  const std::size_t n = u.size(), m = v.size();
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = u.value()[i] + v.value()[j];
  NodePtr pu = u.node(), pv = v.node();
  return make("outer_add", Shape{n, m}, std::move(out), {pu, pv}, [pu, pv, n, m](Node& node) {
    if (wants(pu)) pu->ensure_grad();
    if (wants(pv)) pv->ensure_grad();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        const double g = node.grad[i * m + j];
        if (wants(pu)) pu->grad[i] += g;
        if (wants(pv)) pv->grad[j] += g;
      }
  });
}

Var add_rowwise(const Var& x, const Var& b) {
  require(x.shape().size() == 2 && b.shape().size() == 1 && b.size() == x.dim(1), "add_rowwise",
          "expected [n,f] and [f], got " + shape_to_string(x.shape()) + " and " + shape_to_string(b.shape()));
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<double> out(x.value());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += b.value()[j];
  NodePtr px = x.node(), pb = b.node();
  return make("add_rowwise", x.shape(), std::move(out), {px, pb}, [px, pb, r, c](Node& n) {
    if (wants(px)) {
      px->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) px->grad[i] += n.grad[i];
    }
    if (wants(pb)) {
      pb->ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) pb->grad[j] += n.grad[i * c + j];
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_cols", "no operands");
  if (parts.size() == 1) return parts.front();
  const std::size_t rows = parts.front().dim(0);
  std::vector<Var> transposed;
  std::size_t cols = 0;
  for (const auto& p : parts) {
    require(p.shape().size() == 2 && p.dim(0) == rows, "concat_cols", "row count mismatch");
    transposed.push_back(transpose(p));
    cols += p.dim(1);
  }
  return transpose(reshape(concat(transposed), Shape{cols, rows}));
}

Var mean_rows(const Var& a) {
  require(a.shape().size() == 2 && a.dim(0) > 0, "mean_rows", "operand must be non-empty 2-D");
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<double> out(c, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += a.value()[i * c + j];
  for (double& v : out) v /= static_cast<double>(r);
  NodePtr pa = a.node();
  return make("mean_rows", Shape{c}, std::move(out), {pa}, [pa, r, c](Node& n) {
    pa->ensure_grad();
    const double inv = 1.0 / static_cast<double>(r);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) pa->grad[i * c + j] += n.grad[j] * inv;
  });
}

Var conv3d(const Var& x, const Var& w, const Var& b) {
  require(x.shape().size() == 4, "conv3d", "input must be [C,T,H,W]");
  require(w.shape().size() == 5, "conv3d", "weight must be [Co,C,kt,kh,kw]");
  const std::size_t C = x.dim(0), T = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Co = w.dim(0), kt = w.dim(2), kh = w.dim(3), kw = w.dim(4);
  require(w.dim(1) == C, "conv3d", "channel mismatch " + shape_to_string(x.shape()) + " vs " +
                                       shape_to_string(w.shape()));
  require(kt % 2 == 1 && kh % 2 == 1 && kw % 2 == 1, "conv3d", "kernel extents must be odd");
  require(!b.valid() || b.size() == Co, "conv3d", "bias size mismatch");
  const std::size_t pt = kt / 2, ph = kh / 2, pw = kw / 2;
  const std::size_t plane = H * W, vol = T * plane;

  std::vector<double> out(Co * vol, 0.0);
  const auto& X = x.value();
  const auto& K = w.value();
  for (std::size_t co = 0; co < Co; ++co) {
    double* o = &out[co * vol];
    if (b.valid()) std::fill(o, o + vol, b.value()[co]);
    for (std::size_t ci = 0; ci < C; ++ci) {
      const double* xi = &X[ci * vol];
      for (std::size_t a = 0; a < kt; ++a) {
        std::size_t t0, t1;
        tap_range(T, a, pt, t0, t1);
        for (std::size_t bh = 0; bh < kh; ++bh) {
          std::size_t h0, h1;
          tap_range(H, bh, ph, h0, h1);
          for (std::size_t cw = 0; cw < kw; ++cw) {
            std::size_t w0, w1;
            tap_range(W, cw, pw, w0, w1);
            const double k = K[(((co * C + ci) * kt + a) * kh + bh) * kw + cw];
            if (k == 0.0) continue;
            for (std::size_t t = t0; t < t1; ++t) {
              const std::size_t ti = t + a - pt;
              for (std::size_t h = h0; h < h1; ++h) {
                const std::size_t hi = h + bh - ph;
                double* orow = o + t * plane + h * W;
                const double* irow = xi + ti * plane + hi * W;
                for (std::size_t ww = w0; ww < w1; ++ww) orow[ww] += k * irow[ww + cw - pw];
              }
            }
          }
        }
      }
    }
  }

  NodePtr px = x.node(), pk = w.node(), pb = b.valid() ? b.node() : nullptr;
  return make("conv3d", Shape{Co, T, H, W}, std::move(out), {px, pk, pb},
              [=](Node& n) {
                const auto& G = n.grad;
                if (wants(pb)) {
                  pb->ensure_grad();
                  for (std::size_t co = 0; co < Co; ++co) {
                    double s = 0.0;
                    for (std::size_t i = 0; i < vol; ++i) s += G[co * vol + i];
                    pb->grad[co] += s;
                  }
                }
                const bool gx = wants(px), gk = wants(pk);
                if (gx) px->ensure_grad();
                if (gk) pk->ensure_grad();
                if (!gx && !gk) return;
                for (std::size_t co = 0; co < Co; ++co) {
                  const double* g = &G[co * vol];
                  for (std::size_t ci = 0; ci < C; ++ci) {
                    const double* xi = &px->value[ci * vol];
                    double* dxi = gx ? &px->grad[ci * vol] : nullptr;
                    for (std::size_t a = 0; a < kt; ++a) {
                      std::size_t t0, t1;
                      tap_range(T, a, pt, t0, t1);
                      for (std::size_t bh = 0; bh < kh; ++bh) {
                        std::size_t h0, h1;
                        tap_range(H, bh, ph, h0, h1);
                        for (std::size_t cw = 0; cw < kw; ++cw) {
                          std::size_t w0, w1;
                          tap_range(W, cw, pw, w0, w1);
                          const std::size_t kidx = (((co * C + ci) * kt + a) * kh + bh) * kw + cw;
                          const double k = pk->value[kidx];
                          double acc = 0.0;
                          for (std::size_t t = t0; t < t1; ++t) {
                            const std::size_t ti = t + a - pt;
                            for (std::size_t h = h0; h < h1; ++h) {
                              const std::size_t hi = h + bh - ph;
                              const double* grow = g + t * plane + h * W;
                              const std::size_t ibase = ti * plane + hi * W;
                              if (gk) {
                                const double* irow = xi + ibase;
                                for (std::size_t ww = w0; ww < w1; ++ww) acc += grow[ww] * irow[ww + cw - pw];
                              }
                              if (gx && k != 0.0) {
                                double* drow = dxi + ibase;
                                for (std::size_t ww = w0; ww < w1; ++ww) drow[ww + cw - pw] += k * grow[ww];
                              }
                            }
                          }
                          if (gk) pk->grad[kidx] += acc;
                        }
                      }
                    }
                  }
                }
              });
}

Var avg_pool_spatial(const Var& x, std::size_t factor) {
  require(x.shape().size() == 4, "avg_pool_spatial", "input must be [C,T,H,W]");
  require(factor >= 1, "avg_pool_spatial", "factor must be >= 1");
  const std::size_t C = x.dim(0), T = x.dim(1), H = x.dim(2), W = x.dim(3);
  require(H % factor == 0 && W % factor == 0, "avg_pool_spatial",
          "factor " + std::to_string(factor) + " does not divide " + std::to_string(H) + "x" + std::to_string(W));
  if (factor == 1) return x;
  const std::size_t Ho = H / factor, Wo = W / factor;
  const double inv = 1.0 / static_cast<double>(factor * factor);
  std::vector<double> out(C * T * Ho * Wo, 0.0);
  const auto& X = x.value();
  for (std::size_t ct = 0; ct < C * T; ++ct)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t w = 0; w < W; ++w)
        out[(ct * Ho + h / factor) * Wo + w / factor] += X[(ct * H + h) * W + w] * inv;
  NodePtr px = x.node();
  return make("avg_pool_spatial", Shape{C, T, Ho, Wo}, std::move(out), {px}, [=](Node& n) {
    px->ensure_grad();
    for (std::size_t ct = 0; ct < C * T; ++ct)
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t w = 0; w < W; ++w)
          px->grad[(ct * H + h) * W + w] += n.grad[(ct * Ho + h / factor) * Wo + w / factor] * inv;
  });
}

Var spatial_mean(const Var& x) {
  require(x.shape().size() == 4, "spatial_mean", "input must be [C,T,H,W]");
  const std::size_t C = x.dim(0), T = x.dim(1), plane = x.dim(2) * x.dim(3);
  const double inv = 1.0 / static_cast<double>(plane);
  std::vector<double> out(T * C, 0.0);
  const auto& X = x.value();
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t t = 0; t < T; ++t) {
      double s = 0.0;
      const double* p = &X[(c * T + t) * plane];
      for (std::size_t i = 0; i < plane; ++i) s += p[i];
      out[t * C + c] = s * inv;
    }
  NodePtr px = x.node();
  return make("spatial_mean", Shape{T, C}, std::move(out), {px}, [=](Node& n) {
    px->ensure_grad();
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < T; ++t) {
        const double g = n.grad[t * C + c] * inv;
        double* p = &px->grad[(c * T + t) * plane];
        for (std::size_t i = 0; i < plane; ++i) p[i] += g;
      }
  });
}

Var temporal_mean_pool(const Var& x, std::size_t factor) {
  require(x.shape().size() == 2, "temporal_mean_pool", "input must be [T,C]");
  require(factor >= 1, "temporal_mean_pool", "factor must be >= 1");
  const std::size_t T = x.dim(0), C = x.dim(1);
  require(T % factor == 0, "temporal_mean_pool",
          "factor " + std::to_string(factor) + " does not divide length " + std::to_string(T));
  const std::size_t To = T / factor;
  const double inv = 1.0 / static_cast<double>(factor);
  std::vector<double> out(To * C, 0.0);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t c = 0; c < C; ++c) out[(t / factor) * C + c] += x.value()[t * C + c] * inv;
  NodePtr px = x.node();
  return make("temporal_mean_pool", Shape{To, C}, std::move(out), {px}, [=](Node& n) {
    px->ensure_grad();
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t c = 0; c < C; ++c) px->grad[t * C + c] += n.grad[(t / factor) * C + c] * inv;
  });
}

Var conv1d(const Var& x, const Var& w, const Var& b) {
  require(x.shape().size() == 2, "conv1d", "input must be [T,C]");
  require(w.shape().size() == 3, "conv1d", "weight must be [Co,C,k]");
  const std::size_t T = x.dim(0), C = x.dim(1), Co = w.dim(0), k = w.dim(2);
  require(w.dim(1) == C, "conv1d", "channel mismatch " + shape_to_string(x.shape()) + " vs " +
                                       shape_to_string(w.shape()));
  require(k % 2 == 1, "conv1d", "kernel length must be odd");
  require(!b.valid() || b.size() == Co, "conv1d", "bias size mismatch");
  const std::size_t pad = k / 2;
  std::vector<double> out(T * Co, 0.0);
  const auto& X = x.value();
  const auto& K = w.value();
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t co = 0; co < Co; ++co) {
      double s = b.valid() ? b.value()[co] : 0.0;
      for (std::size_t a = 0; a < k; ++a) {
        if (t + a < pad || t + a - pad >= T) continue;
        const std::size_t ti = t + a - pad;
        for (std::size_t ci = 0; ci < C; ++ci) s += K[(co * C + ci) * k + a] * X[ti * C + ci];
      }
      out[t * Co + co] = s;
    }
  NodePtr px = x.node(), pk = w.node(), pb = b.valid() ? b.node() : nullptr;
  return make("conv1d", Shape{T, Co}, std::move(out), {px, pk, pb}, [=](Node& n) {
    const bool gx = wants(px), gk = wants(pk), gb = wants(pb);
    if (gx) px->ensure_grad();
    if (gk) pk->ensure_grad();
    if (gb) pb->ensure_grad();
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t co = 0; co < Co; ++co) {
        const double g = n.grad[t * Co + co];
        if (gb) pb->grad[co] += g;
        if (g == 0.0) continue;
        for (std::size_t a = 0; a < k; ++a) {
          if (t + a < pad || t + a - pad >= T) continue;
          const std::size_t ti = t + a - pad;
          for (std::size_t ci = 0; ci < C; ++ci) {
            if (gk) pk->grad[(co * C + ci) * k + a] += g * px->value[ti * C + ci];
            if (gx) px->grad[ti * C + ci] += g * pk->value[(co * C + ci) * k + a];
          }
        }
      }
  });
}

}  // namespace depgraph::ad
