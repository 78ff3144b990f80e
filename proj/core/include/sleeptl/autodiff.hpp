// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

/// Minimal reverse-mode automatic differentiation over dense row-major
/// tensors. Every op records its inputs and a backward rule when at least one
/// input requires a gradient; `backward()` walks the recorded graph in reverse
/// topological order. A graph and its tensors belong to one thread.
namespace sleeptl::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  /// Writable view of the values. Intended for leaves (parameters, buffers);
  /// mutating a recorded intermediate invalidates its backward rule.
  std::span<double> mutable_data();
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool is_leaf() const;

  bool has_grad() const;
  /// Empty span when no gradient has been accumulated yet.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Same values, no history.
  Tensor detach() const;

  const detail::Node* node() const { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  friend struct detail::Node;
  friend Tensor make_result(Shape, std::vector<double>, std::vector<const Tensor*>,
                            std::function<void(detail::Node&)>, const char*);
  friend void backward(const Tensor& loss);

  std::shared_ptr<detail::Node> node_;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  /// Propagates `grad` of this node into its inputs' grads.
  std::function<void(Node&)> backward_fn;

  /// Gradient buffer of an input, allocated on first use.
  static std::vector<double>& grad_of(Node& n);
  static Node& of(const Tensor& t) { return *t.node_; }
};

}  // namespace detail

/// Builds an op result; records history only when an input needs gradients.
Tensor make_result(Shape shape, std::vector<double> value, std::vector<const Tensor*> inputs,
                   std::function<void(detail::Node&)> backward_fn, const char* op);

/// NaN/Inf detection after every forward op. Off by default in release builds.
void set_finite_checks(bool enabled);
bool finite_checks();

/// Accumulates d(loss)/d(leaf) into every leaf that requires a gradient.
/// Intermediate gradients are recomputed from scratch on every call, so
/// calling twice without zeroing doubles leaf gradients.
void backward(const Tensor& loss);

// Linear algebra and elementwise ops.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// x[..., n] + bias[n]
Tensor add_bias(const Tensor& x, const Tensor& bias);
/// x[r, c] * col[r] for a 2-D x and a column of length rows(x).
Tensor mul_col(const Tensor& x, const Tensor& col);
Tensor scale(const Tensor& x, double factor);

Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
/// log(max(x, floor)); the gradient is zero where the floor is active.
Tensor log(const Tensor& x, double floor = 0.0);
/// Softmax over the last axis.
Tensor softmax(const Tensor& x);
/// Inverted dropout: identity when `train` is false or p == 0.
Tensor dropout(const Tensor& x, double p, bool train, std::mt19937_64& rng);

// Shape ops.
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& x, Shape shape);
/// 2-D transpose.
Tensor transpose(const Tensor& x);

// Reductions.
Tensor sum(const Tensor& x);
/// Sums over axis 0: [n, rest...] -> [rest...].
Tensor sum_axis0(const Tensor& x);
Tensor sum_squares(const Tensor& x);

// Convolution and pooling over [batch, channels, length].
enum class Padding { Same, Valid };

std::size_t conv_output_length(std::size_t length, std::size_t kernel, std::size_t stride,
                               Padding padding);

/// x[B, Cin, N] * w[Cout, Cin, K] -> [B, Cout, N'] (no bias).
Tensor conv1d(const Tensor& x, const Tensor& w, std::size_t stride,
              Padding padding = Padding::Same);
Tensor maxpool1d(const Tensor& x, std::size_t size, std::size_t stride,
                 Padding padding = Padding::Same);

struct BatchNormOptions {
  /// Feature axis; statistics pool over every other axis.
  std::size_t axis = 1;
  bool train = false;
  /// Update running statistics (train mode only).
  bool update_running = true;
  double momentum = 0.9;
  double eps = 1e-7;
};

/// Batch normalization. `running_mean` / `running_var` are leaf buffers of
/// length dim(axis) updated in place as m <- momentum * m + (1 - momentum) * batch.
Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                 Tensor& running_var, const BatchNormOptions& opts);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

}  // namespace sleeptl::ad
