// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "hafx/tensor.hpp"

namespace hafx {

/// A named model weight with its gradient accumulator. Only trainable
/// parameters receive gradients when they enter a tape.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = false;

  void zero_grad();
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while the tape lives.
class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  const Tensor& value() const;
  /// Gradient accumulated by Tape::backward (empty if the node got none).
  const Tensor& grad() const;
  bool requires_grad() const;
  std::size_t id() const { return id_; }
  Tape& tape() const { return *tape_; }

  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so the list is
/// topologically sorted by construction and backward walks it once in reverse.
class Tape {
 public:
  /// Receives the gradient of the node's output and pushes it to its inputs
  /// via grad_slot().
  using Backward = std::function<void(Tape&, const Tensor& grad_out)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Constant that aliases caller-owned storage; the tensor must outlive the tape.
  Var constant_ref(const Tensor& value);
  Var leaf(Tensor value, bool requires_grad = true);
  /// Aliases p.value; backward adds into p.grad when p is trainable.
  Var param(Parameter& p);

  /// Appends an op result. The backward rule is kept only if some input
  /// requires a gradient. Non-finite outputs throw NumericalError naming `op`.
  Var record(const char* op, Tensor value, std::initializer_list<Var> inputs, Backward fn);
  Var record(const char* op, Tensor value, std::span<const Var> inputs, Backward fn);

  /// Propagates d(loss)/d(node) to every node. Loss must be a single element.
  void backward(const Var& loss);

  const Tensor& value(std::size_t id) const;
  const Tensor& grad(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Zero-initialised gradient buffer for `id`, or nullptr if it needs none.
  Tensor* grad_slot(std::size_t id);

  std::size_t size() const { return nodes_.size(); }
  bool grad_enabled() const { return grad_enabled_; }

 private:
  struct Node {
    const char* op = "";
    Tensor owned;
    const Tensor* ref = nullptr;
    Tensor grad;
    bool requires_grad = false;
    Backward backward;
    Parameter* param = nullptr;

    const Tensor& value() const { return ref ? *ref : owned; }
  };

  Var push(Node node);

  std::vector<Node> nodes_;
  bool grad_enabled_;
  bool backward_done_ = false;
};

Var detach(const Var& x);

// Elementwise (operands must share a shape).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var neg(const Var& a);
Var square(const Var& a);
Var exp(const Var& a);
Var relu(const Var& a);
/// 1 + ELU(x)
Var one_plus_elu(const Var& a);
/// tanh-approximated GELU.
Var gelu(const Var& a);
/// log(x + eps)
Var log_eps(const Var& a, double eps);

/// Adds a length-n bias to every row of an m x n matrix.
Var add_bias(const Var& x, const Var& bias);

Var matmul(const Var& a, const Var& b);
/// a * b^T
Var matmul_nt(const Var& a, const Var& b);
Var transpose(const Var& a);

Var row_softmax(const Var& x);
/// y_ij = x_ij / max(sum_j x_ij, eps)
Var row_normalize(const Var& x, double eps);
/// Zeroes entries (i, j) with j > i - lag of a square matrix.
Var causal_mask(const Var& x, std::size_t lag);

Var concat_cols(std::span<const Var> parts);
Var slice_cols(const Var& x, std::size_t begin, std::size_t count);

Var sum(const Var& x);
Var mean(const Var& x);
Var mse(const Var& a, const Var& b);

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);
Var embedding(const Var& table, std::span<const int> tokens);
/// Mean token cross-entropy over positions whose target is >= 0.
Var cross_entropy(const Var& logits, std::span<const int> targets);

}  // namespace hafx
