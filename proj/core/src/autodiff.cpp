// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#include "sleeptl/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "sleeptl/error.hpp"

namespace sleeptl::ad {

using detail::Node;

namespace {

#ifdef NDEBUG
std::atomic<bool> g_finite_checks{false};
#else
std::atomic<bool> g_finite_checks{true};
#endif

void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  require(t.rank() == rank, std::string(op) + ": expected rank " + std::to_string(rank) +
                                " tensor, got " + shape_str(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                      " vs " + shape_str(b.shape()));
}

// Splits a shape around `axis` into (outer, axis extent, inner).
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

template <typename F>
Tensor unary(const Tensor& x, const char* op, F&& f,
             std::function<void(const std::vector<double>& x, const std::vector<double>& y,
                                const std::vector<double>& dy, std::vector<double>& dx)>
                 grad_rule) {
  const auto& xv = x.data();
  std::vector<double> y(xv.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(xv[i]);
  auto* xn = &Node::of(x);
  return make_result(x.shape(), std::move(y), {&x},
                     [xn, grad_rule](Node& self) {
                       if (!xn->requires_grad) return;
                       grad_rule(xn->value, self.value, self.grad, Node::grad_of(*xn));
                     },
                     op);
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ']';
  return os.str();
}

std::vector<double>& Node::grad_of(Node& n) {
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return filled(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::filled(Shape shape, double value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value.assign(shape_numel(shape), value);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("from_data: shape " + shape_str(shape) + " needs " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(data.size()));
  }
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::dim(std::size_t axis) const { return node_->shape.at(axis); }
std::size_t Tensor::numel() const { return node_->value.size(); }
std::span<const double> Tensor::data() const { return node_->value; }
std::span<double> Tensor::mutable_data() { return node_->value; }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
void Tensor::set_requires_grad(bool on) { node_->requires_grad = on; }
bool Tensor::is_leaf() const { return !node_->backward_fn; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }
std::span<const double> Tensor::grad() const { return node_->grad; }
std::span<double> Tensor::mutable_grad() { return Node::grad_of(*node_); }

void Tensor::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return from_data(shape(), node_->value, false); }

// ---------------------------------------------------------------------------
// Graph plumbing

void set_finite_checks(bool enabled) { g_finite_checks = enabled; }
bool finite_checks() { return g_finite_checks; }

Tensor make_result(Shape shape, std::vector<double> value, std::vector<const Tensor*> inputs,
                   std::function<void(Node&)> backward_fn, const char* op) {
  if (g_finite_checks) {
    for (double v : value) {
      if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite output");
    }
  }
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  for (const auto* in : inputs) {
    if (in->requires_grad()) n->requires_grad = true;
  }
  if (n->requires_grad) {
    n->inputs.reserve(inputs.size());
    for (const auto* in : inputs) n->inputs.push_back(in->node_);
    n->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(n));
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));
  }
  Node* root = loss.node_.get();
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order (inputs first).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.push_back({child, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (n->backward_fn) n->grad.assign(n->value.size(), 0.0);
  }
  Node::grad_of(*root)[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

// ---------------------------------------------------------------------------
// Linear algebra and elementwise

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  require(b.dim(0) == k, "matmul: inner dimensions differ " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = bv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  auto* an = &Node::of(a);
  auto* bn = &Node::of(b);
  return make_result(
      {m, n}, std::move(c), {&a, &b},
      [an, bn, m, k, n](Node& self) {
        const auto& dc = self.grad;
        if (an->requires_grad) {
          auto& da = Node::grad_of(*an);
          const auto& bv = bn->value;
          for (std::size_t i = 0; i < m; ++i) {
            const double* dcrow = dc.data() + i * n;
            for (std::size_t p = 0; p < k; ++p) {
              const double* brow = bv.data() + p * n;
              double acc = 0.0;
              for (std::size_t j = 0; j < n; ++j) acc += dcrow[j] * brow[j];
              da[i * k + p] += acc;
            }
          }
        }
        if (bn->requires_grad) {
          auto& db = Node::grad_of(*bn);
          const auto& av = an->value;
          for (std::size_t i = 0; i < m; ++i) {
            const double* dcrow = dc.data() + i * n;
            for (std::size_t p = 0; p < k; ++p) {
              const double aip = av[i * k + p];
              if (aip == 0.0) continue;
              double* dbrow = db.data() + p * n;
              for (std::size_t j = 0; j < n; ++j) dbrow[j] += aip * dcrow[j];
            }
          }
        }
      },
      "matmul");
}

namespace {

template <typename Fwd, typename GradA, typename GradB>
Tensor binary(const Tensor& a, const Tensor& b, const char* op, Fwd f, GradA ga, GradB gb) {
  require_same_shape(a, b, op);
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> y(av.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(av[i], bv[i]);
  auto* an = &Node::of(a);
  auto* bn = &Node::of(b);
  return make_result(a.shape(), std::move(y), {&a, &b},
                     [an, bn, ga, gb](Node& self) {
                       const auto& dy = self.grad;
                       if (an->requires_grad) {
                         auto& da = Node::grad_of(*an);
                         for (std::size_t i = 0; i < dy.size(); ++i) {
                           da[i] += ga(an->value[i], bn->value[i], dy[i]);
                         }
                       }
                       if (bn->requires_grad) {
                         auto& db = Node::grad_of(*bn);
                         for (std::size_t i = 0; i < dy.size(); ++i) {
                           db[i] += gb(an->value[i], bn->value[i], dy[i]);
                         }
                       }
                     },
                     op);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double g) { return g; }, [](double, double, double g) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double g) { return g; }, [](double, double, double g) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y, double g) { return g * y; },
      [](double x, double, double g) { return g * x; });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require(x.rank() >= 1 && bias.numel() == x.shape().back(),
          "add_bias: bias of shape " + shape_str(bias.shape()) + " does not match trailing dim of " +
              shape_str(x.shape()));
  const std::size_t n = bias.numel();
  const std::size_t rows = x.numel() / n;
  const auto xv = x.data();
  const auto bv = bias.data();
  std::vector<double> y(xv.begin(), xv.end());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < n; ++j) y[r * n + j] += bv[j];
  }
  auto* xn = &Node::of(x);
  auto* bn = &Node::of(bias);
  return make_result(x.shape(), std::move(y), {&x, &bias},
                     [xn, bn, rows, n](Node& self) {
                       const auto& dy = self.grad;
                       if (xn->requires_grad) {
                         auto& dx = Node::grad_of(*xn);
                         for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
                       }
                       if (bn->requires_grad) {
                         auto& db = Node::grad_of(*bn);
                         for (std::size_t r = 0; r < rows; ++r) {
                           for (std::size_t j = 0; j < n; ++j) db[j] += dy[r * n + j];
                         }
                       }
                     },
                     "add_bias");
}

Tensor mul_col(const Tensor& x, const Tensor& col) {
  require_rank(x, 2, "mul_col");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  require(col.numel() == rows, "mul_col: column of " + std::to_string(col.numel()) +
                                   " values for " + std::to_string(rows) + " rows");
  const auto xv = x.data();
  const auto cv = col.data();
  std::vector<double> y(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < cols; ++j) y[r * cols + j] = xv[r * cols + j] * cv[r];
  }
  auto* xn = &Node::of(x);
  auto* cn = &Node::of(col);
  return make_result(x.shape(), std::move(y), {&x, &col},
                     [xn, cn, rows, cols](Node& self) {
                       const auto& dy = self.grad;
                       if (xn->requires_grad) {
                         auto& dx = Node::grad_of(*xn);
                         for (std::size_t r = 0; r < rows; ++r) {
                           const double c = cn->value[r];
                           for (std::size_t j = 0; j < cols; ++j) dx[r * cols + j] += dy[r * cols + j] * c;
                         }
                       }
                       if (cn->requires_grad) {
                         auto& dc = Node::grad_of(*cn);
                         for (std::size_t r = 0; r < rows; ++r) {
                           double acc = 0.0;
                           for (std::size_t j = 0; j < cols; ++j) {
                             acc += dy[r * cols + j] * xn->value[r * cols + j];
                           }
                           dc[r] += acc;
                         }
                       }
                     },
                     "mul_col");
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, "scale", [factor](double v) { return v * factor; },
      [factor](const auto&, const auto&, const auto& dy, auto& dx) {
        for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * factor;
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, "sigmoid",
      [](double v) {
        // Split by sign so exp never overflows.
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](const auto&, const auto& y, const auto& dy, auto& dx) {
        for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * y[i] * (1.0 - y[i]);
      });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, "tanh", [](double v) { return std::tanh(v); },
      [](const auto&, const auto& y, const auto& dy, auto& dx) {
        for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * (1.0 - y[i] * y[i]);
      });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, "relu", [](double v) { return v > 0 ? v : 0.0; },
      [](const auto& xv, const auto&, const auto& dy, auto& dx) {
        for (std::size_t i = 0; i < dy.size(); ++i) {
          if (xv[i] > 0) dx[i] += dy[i];
        }
      });
}

Tensor log(const Tensor& x, double floor) {
  return unary(
      x, "log", [floor](double v) { return std::log(std::max(v, floor)); },
      [floor](const auto& xv, const auto&, const auto& dy, auto& dx) {
        for (std::size_t i = 0; i < dy.size(); ++i) {
          if (xv[i] > floor) dx[i] += dy[i] / xv[i];
        }
      });
}

Tensor softmax(const Tensor& x) {
  require(x.rank() >= 1, "softmax: scalar input");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.numel() / n;
  const auto xv = x.data();
  std::vector<double> y(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * n;
    double* out = y.data() + r * n;
    const double mx = *std::max_element(in, in + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out[j] = std::exp(in[j] - mx);
      total += out[j];
    }
    for (std::size_t j = 0; j < n; ++j) out[j] /= total;
  }
  auto* xn = &Node::of(x);
  return make_result(x.shape(), std::move(y), {&x},
                     [xn, rows, n](Node& self) {
                       if (!xn->requires_grad) return;
                       auto& dx = Node::grad_of(*xn);
                       const auto& yv = self.value;
                       const auto& dy = self.grad;
                       for (std::size_t r = 0; r < rows; ++r) {
                         double dot = 0.0;
                         for (std::size_t j = 0; j < n; ++j) dot += dy[r * n + j] * yv[r * n + j];
                         for (std::size_t j = 0; j < n; ++j) {
                           dx[r * n + j] += yv[r * n + j] * (dy[r * n + j] - dot);
                         }
                       }
                     },
                     "softmax");
}

Tensor dropout(const Tensor& x, double p, bool train, std::mt19937_64& rng) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout probability must be in [0, 1)");
  if (!train || p == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - p);
  const double s = 1.0 / (1.0 - p);
  std::vector<double> mask(x.numel());
  for (auto& m : mask) m = keep(rng) ? s : 0.0;
  const auto xv = x.data();
  std::vector<double> y(xv.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] * mask[i];
  auto* xn = &Node::of(x);
  return make_result(x.shape(), std::move(y), {&x},
                     [xn, mask = std::move(mask)](Node& self) {
                       if (!xn->requires_grad) return;
                       auto& dx = Node::grad_of(*xn);
                       for (std::size_t i = 0; i < mask.size(); ++i) dx[i] += self.grad[i] * mask[i];
                     },
                     "dropout");
}

// ---------------------------------------------------------------------------
// Shape ops

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  require(!parts.empty(), "concat: no inputs");
  const Shape& first = parts.front().shape();
  require(axis < first.size(), "concat: axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    require(p.rank() == first.size(), "concat: rank mismatch");
    for (std::size_t d = 0; d < first.size(); ++d) {
      require(d == axis || p.dim(d) == first[d],
              "concat: shape mismatch " + shape_str(first) + " vs " + shape_str(p.shape()));
    }
    out_shape[axis] += p.dim(axis);
  }
  const auto split = split_at(out_shape, axis);
  std::vector<double> y(shape_numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t block = p.dim(axis) * split.inner;
    const auto pv = p.data();
    for (std::size_t o = 0; o < split.outer; ++o) {
      std::copy_n(pv.data() + o * block, block,
                  y.data() + o * split.extent * split.inner + off * split.inner);
    }
    off += p.dim(axis);
  }
  std::vector<const Tensor*> ins;
  std::vector<Node*> nodes;
  std::vector<std::size_t> extents;
  for (const auto& p : parts) {
    ins.push_back(&p);
    nodes.push_back(&Node::of(p));
    extents.push_back(p.dim(axis));
  }
  return make_result(std::move(out_shape), std::move(y), ins,
                     [nodes, offsets, extents, split](Node& self) {
                       for (std::size_t k = 0; k < nodes.size(); ++k) {
                         if (!nodes[k]->requires_grad) continue;
                         auto& dp = Node::grad_of(*nodes[k]);
                         const std::size_t block = extents[k] * split.inner;
                         for (std::size_t o = 0; o < split.outer; ++o) {
                           const double* src = self.grad.data() + o * split.extent * split.inner +
                                               offsets[k] * split.inner;
                           double* dst = dp.data() + o * block;
                           for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
                         }
                       }
                     },
                     "concat");
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  require(axis < x.rank(), "slice: axis out of range");
  require(begin <= end && end <= x.dim(axis),
          "slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
              ") out of bounds for " + shape_str(x.shape()));
  const auto split = split_at(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape[axis] = end - begin;
  const std::size_t block = (end - begin) * split.inner;
  const auto xv = x.data();
  std::vector<double> y(split.outer * block);
  for (std::size_t o = 0; o < split.outer; ++o) {
    std::copy_n(xv.data() + o * split.extent * split.inner + begin * split.inner, block,
                y.data() + o * block);
  }
  auto* xn = &Node::of(x);
  return make_result(std::move(out_shape), std::move(y), {&x},
                     [xn, split, begin, block](Node& self) {
                       if (!xn->requires_grad) return;
                       auto& dx = Node::grad_of(*xn);
                       for (std::size_t o = 0; o < split.outer; ++o) {
                         double* dst = dx.data() + o * split.extent * split.inner + begin * split.inner;
                         const double* src = self.grad.data() + o * block;
                         for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
                       }
                     },
                     "slice");
}

Tensor reshape(const Tensor& x, Shape shape) {
  require(shape_numel(shape) == x.numel(),
          "reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  auto xv = x.data();
  auto* xn = &Node::of(x);
  return make_result(std::move(shape), std::vector<double>(xv.begin(), xv.end()), {&x},
                     [xn](Node& self) {
                       if (!xn->requires_grad) return;
                       auto& dx = Node::grad_of(*xn);
                       for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += self.grad[i];
                     },
                     "reshape");
}

Tensor transpose(const Tensor& x) {
  require_rank(x, 2, "transpose");
  const std::size_t r = x.dim(0), c = x.dim(1);
  const auto xv = x.data();
  std::vector<double> y(xv.size());
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) y[j * r + i] = xv[i * c + j];
  }
  auto* xn = &Node::of(x);
  return make_result({c, r}, std::move(y), {&x},
                     [xn, r, c](Node& self) {
                       if (!xn->requires_grad) return;
                       auto& dx = Node::grad_of(*xn);
                       for (std::size_t i = 0; i < r; ++i) {
                         for (std::size_t j = 0; j < c; ++j) dx[i * c + j] += self.grad[j * r + i];
                       }
                     },
                     "transpose");
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  auto* xn = &Node::of(x);
  return make_result({1}, {total}, {&x},
                     [xn](Node& self) {
                       if (!xn->requires_grad) return;
                       auto& dx = Node::grad_of(*xn);
                       const double g = self.grad[0];
                       for (auto& d : dx) d += g;
                     },
                     "sum");
}

Tensor sum_axis0(const Tensor& x) {
  require(x.rank() >= 2, "sum_axis0: need rank >= 2, got " + shape_str(x.shape()));
  const std::size_t n = x.dim(0);
  const std::size_t inner = x.numel() / n;
  const auto xv = x.data();
  std::vector<double> y(inner, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < inner; ++j) y[j] += xv[r * inner + j];
  }
  Shape out(x.shape().begin() + 1, x.shape().end());
  auto* xn = &Node::of(x);
  return make_result(std::move(out), std::move(y), {&x},
                     [xn, n, inner](Node& self) {
                       if (!xn->requires_grad) return;
                       auto& dx = Node::grad_of(*xn);
                       for (std::size_t r = 0; r < n; ++r) {
                         for (std::size_t j = 0; j < inner; ++j) dx[r * inner + j] += self.grad[j];
                       }
                     },
                     "sum_axis0");
}

Tensor sum_squares(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v * v;
  auto* xn = &Node::of(x);
  return make_result({1}, {total}, {&x},
                     [xn](Node& self) {
                       if (!xn->requires_grad) return;
                       auto& dx = Node::grad_of(*xn);
                       const double g = 2.0 * self.grad[0];
                       for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g * xn->value[i];
                     },
                     "sum_squares");
}

// ---------------------------------------------------------------------------
// Convolution and pooling

std::size_t conv_output_length(std::size_t length, std::size_t kernel, std::size_t stride,
                               Padding padding) {
  if (stride == 0 || kernel == 0) throw ConfigError("kernel and stride must be positive");
  if (padding == Padding::Same) return (length + stride - 1) / stride;
  if (length < kernel) return 0;
  return (length - kernel) / stride + 1;
}

namespace {

// Left padding for TensorFlow-style SAME padding.
std::size_t left_pad(std::size_t length, std::size_t kernel, std::size_t stride,
                     std::size_t out_len, Padding padding) {
  if (padding == Padding::Valid) return 0;
  const std::size_t needed = (out_len - 1) * stride + kernel;
  return needed > length ? (needed - length) / 2 : 0;
}

}  // namespace

Tensor conv1d(const Tensor& x, const Tensor& w, std::size_t stride, Padding padding) {
  require_rank(x, 3, "conv1d input");
  require_rank(w, 3, "conv1d kernel");
  const std::size_t batch = x.dim(0), cin = x.dim(1), len = x.dim(2);
  const std::size_t cout = w.dim(0), klen = w.dim(2);
  require(w.dim(1) == cin, "conv1d: kernel expects " + std::to_string(w.dim(1)) +
                               " input channels, got " + std::to_string(cin));
  const std::size_t out_len = conv_output_length(len, klen, stride, padding);
  require(out_len > 0, "conv1d: input length " + std::to_string(len) +
                           " shorter than kernel " + std::to_string(klen));
  const std::size_t pad = left_pad(len, klen, stride, out_len, padding);

  // Output positions t for which input index t*stride + k - pad is in range.
  auto t_range = [=](std::size_t k) {
    // t*stride + k >= pad  and  t*stride + k - pad < len
    std::size_t lo = 0;
    if (k < pad) lo = (pad - k + stride - 1) / stride;
    std::size_t hi = 0;  // exclusive
    if (len + pad > k) hi = std::min(out_len, (len + pad - k - 1) / stride + 1);
    return std::pair{lo, std::max(lo, hi)};
  };

  const auto xv = x.data();
  const auto wv = w.data();
  std::vector<double> y(batch * cout * out_len, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t o = 0; o < cout; ++o) {
      double* yrow = y.data() + (b * cout + o) * out_len;
      for (std::size_t c = 0; c < cin; ++c) {
        const double* xrow = xv.data() + (b * cin + c) * len;
        const double* wrow = wv.data() + (o * cin + c) * klen;
        for (std::size_t k = 0; k < klen; ++k) {
          const double wk = wrow[k];
          auto [lo, hi] = t_range(k);
          const std::ptrdiff_t shift =
              static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(pad);
          for (std::size_t t = lo; t < hi; ++t) {
            yrow[t] += wk * xrow[static_cast<std::ptrdiff_t>(t * stride) + shift];
          }
        }
      }
    }
  }
  auto* xn = &Node::of(x);
  auto* wn = &Node::of(w);
  return make_result(
      {batch, cout, out_len}, std::move(y), {&x, &w},
      [=](Node& self) {
        const auto& dy = self.grad;
        const auto& xv = xn->value;
        const auto& wv = wn->value;
        std::vector<double>* dx = xn->requires_grad ? &Node::grad_of(*xn) : nullptr;
        std::vector<double>* dw = wn->requires_grad ? &Node::grad_of(*wn) : nullptr;
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t o = 0; o < cout; ++o) {
            const double* dyrow = dy.data() + (b * cout + o) * out_len;
            for (std::size_t c = 0; c < cin; ++c) {
              const std::size_t xoff = (b * cin + c) * len;
              const std::size_t woff = (o * cin + c) * klen;
              for (std::size_t k = 0; k < klen; ++k) {
                auto [lo, hi] = t_range(k);
                const std::ptrdiff_t shift =
                    static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(pad);
                if (dx) {
                  const double wk = wv[woff + k];
                  double* dxrow = dx->data() + xoff;
                  for (std::size_t t = lo; t < hi; ++t) {
                    dxrow[static_cast<std::ptrdiff_t>(t * stride) + shift] += wk * dyrow[t];
                  }
                }
                if (dw) {
                  const double* xrow = xv.data() + xoff;
                  double acc = 0.0;
                  for (std::size_t t = lo; t < hi; ++t) {
                    acc += dyrow[t] * xrow[static_cast<std::ptrdiff_t>(t * stride) + shift];
                  }
                  (*dw)[woff + k] += acc;
                }
              }
            }
          }
        }
      },
      "conv1d");
}

Tensor maxpool1d(const Tensor& x, std::size_t size, std::size_t stride, Padding padding) {
  require_rank(x, 3, "maxpool1d");
  const std::size_t batch = x.dim(0), ch = x.dim(1), len = x.dim(2);
  const std::size_t out_len = conv_output_length(len, size, stride, padding);
  require(out_len > 0, "maxpool1d: input length " + std::to_string(len) +
                           " shorter than window " + std::to_string(size));
  const std::size_t pad = left_pad(len, size, stride, out_len, padding);
  const auto xv = x.data();
  std::vector<double> y(batch * ch * out_len);
  std::vector<std::size_t> argmax(y.size());
  for (std::size_t r = 0; r < batch * ch; ++r) {
    const double* in = xv.data() + r * len;
    for (std::size_t t = 0; t < out_len; ++t) {
      const std::ptrdiff_t start =
          static_cast<std::ptrdiff_t>(t * stride) - static_cast<std::ptrdiff_t>(pad);
      std::size_t best = SIZE_MAX;
      double best_v = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < size; ++k) {
        const std::ptrdiff_t i = start + static_cast<std::ptrdiff_t>(k);
        if (i < 0 || i >= static_cast<std::ptrdiff_t>(len)) continue;
        const double v = in[i];
        if (best == SIZE_MAX || v > best_v) {
          best_v = v;
          best = static_cast<std::size_t>(i);
        }
      }
      y[r * out_len + t] = best_v;
      argmax[r * out_len + t] = r * len + best;
    }
  }
  auto* xn = &Node::of(x);
  return make_result({batch, ch, out_len}, std::move(y), {&x},
                     [xn, argmax = std::move(argmax)](Node& self) {
                       if (!xn->requires_grad) return;
                       auto& dx = Node::grad_of(*xn);
                       for (std::size_t i = 0; i < argmax.size(); ++i) dx[argmax[i]] += self.grad[i];
                     },
                     "maxpool1d");
}

// ---------------------------------------------------------------------------
// Batch normalization

Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                 Tensor& running_var, const BatchNormOptions& opts) {
  require(opts.axis < x.rank(), "batchnorm: feature axis out of range");
  const auto split = split_at(x.shape(), opts.axis);
  const std::size_t feat = split.extent;
  require(gamma.numel() == feat && beta.numel() == feat && running_mean.numel() == feat &&
              running_var.numel() == feat,
          "batchnorm: parameter size does not match " + std::to_string(feat) + " features");
  const std::size_t count = split.outer * split.inner;
  if (opts.train && count < 2) {
    throw ShapeError("batchnorm: train mode needs at least 2 values per feature, got " +
                     std::to_string(count));
  }

  const auto xv = x.data();
  auto for_feature = [&](std::size_t f, auto&& fn) {
    for (std::size_t o = 0; o < split.outer; ++o) {
      const std::size_t base = (o * feat + f) * split.inner;
      for (std::size_t i = 0; i < split.inner; ++i) fn(base + i);
    }
  };

  std::vector<double> mean(feat), inv_std(feat);
  if (opts.train) {
    for (std::size_t f = 0; f < feat; ++f) {
      double m = 0.0;
      for_feature(f, [&](std::size_t idx) { m += xv[idx]; });
      m /= static_cast<double>(count);
      double v = 0.0;
      for_feature(f, [&](std::size_t idx) {
        const double d = xv[idx] - m;
        v += d * d;
      });
      v /= static_cast<double>(count);
      mean[f] = m;
      inv_std[f] = 1.0 / std::sqrt(v + opts.eps);
      if (opts.update_running) {
        auto rm = running_mean.mutable_data();
        auto rv = running_var.mutable_data();
        rm[f] = opts.momentum * rm[f] + (1.0 - opts.momentum) * m;
        rv[f] = opts.momentum * rv[f] + (1.0 - opts.momentum) * v;
      }
    }
  } else {
    const auto rm = running_mean.data();
    const auto rv = running_var.data();
    for (std::size_t f = 0; f < feat; ++f) {
      mean[f] = rm[f];
      inv_std[f] = 1.0 / std::sqrt(rv[f] + opts.eps);
    }
  }

  const auto gv = gamma.data();
  const auto bv = beta.data();
  std::vector<double> xhat(xv.size()), y(xv.size());
  for (std::size_t f = 0; f < feat; ++f) {
    for_feature(f, [&](std::size_t idx) {
      xhat[idx] = (xv[idx] - mean[f]) * inv_std[f];
      y[idx] = gv[f] * xhat[idx] + bv[f];
    });
  }

  auto* xn = &Node::of(x);
  auto* gn = &Node::of(gamma);
  auto* bn = &Node::of(beta);
  const bool train = opts.train;
  return make_result(
      x.shape(), std::move(y), {&x, &gamma, &beta},
      [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        const auto& dy = self.grad;
        auto each = [&](std::size_t f, auto&& fn) {
          for (std::size_t o = 0; o < split.outer; ++o) {
            const std::size_t base = (o * feat + f) * split.inner;
            for (std::size_t i = 0; i < split.inner; ++i) fn(base + i);
          }
        };
        std::vector<double>* dx = xn->requires_grad ? &Node::grad_of(*xn) : nullptr;
        std::vector<double>* dg = gn->requires_grad ? &Node::grad_of(*gn) : nullptr;
        std::vector<double>* db = bn->requires_grad ? &Node::grad_of(*bn) : nullptr;
        const double n = static_cast<double>(count);
        for (std::size_t f = 0; f < feat; ++f) {
          double sum_dy = 0.0, sum_dy_xhat = 0.0;
          each(f, [&](std::size_t idx) {
            sum_dy += dy[idx];
            sum_dy_xhat += dy[idx] * xhat[idx];
          });
          if (dg) (*dg)[f] += sum_dy_xhat;
          if (db) (*db)[f] += sum_dy;
          if (!dx) continue;
          const double g = gn->value[f] * inv_std[f];
          if (train) {
            const double mdy = sum_dy / n, mdyx = sum_dy_xhat / n;
            each(f, [&](std::size_t idx) { (*dx)[idx] += g * (dy[idx] - mdy - xhat[idx] * mdyx); });
          } else {
            each(f, [&](std::size_t idx) { (*dx)[idx] += g * dy[idx]; });
          }
        }
      },
      "batchnorm");
}

}  // namespace sleeptl::ad
