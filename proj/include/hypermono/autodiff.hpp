#pragma once

// Reverse-mode differentiation over Tensor values. A Tape records every
// kernel application in insertion order; backward() walks it in reverse.

#include <cstdint>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "hypermono/tensor.hpp"

namespace hypermono::ad {

class Tape;

// Handle to a tape node.
struct Var {
  Tape* tape = nullptr;
  std::int32_t id = -1;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  double item() const { return value().item(); }
  bool valid() const { return tape != nullptr && id >= 0; }
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, std::int32_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Leaf bound to a parameter; repeated calls reuse one node.
  Var param(Parameter& p);

  const Tensor& value(std::int32_t id) const;
  // Gradient buffer of a node, allocated as zeros on first access.
  Tensor& grad(std::int32_t id);
  bool has_grad(std::int32_t id) const { return nodes_[static_cast<std::size_t>(id)].grad_ready; }
  bool requires_grad(std::int32_t id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

  Var record(Tensor value, std::initializer_list<Var> inputs, Backward backward);
  Var record(Tensor value, std::span<const Var> inputs, Backward backward);

  // Seeds d(loss)/d(loss) = 1, accumulates into Parameter::grad, clears the tape.
  void backward(Var loss);
  void clear();
  std::size_t size() const { return nodes_.size(); }

  // Counter-based dropout key source: (step, layer) pairs are hashed by the caller.
  std::uint64_t step = 0;

 private:
  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    Tensor grad;
    bool grad_ready = false;
    bool requires_grad = false;
    Parameter* param = nullptr;
    Backward backward;
  };
  std::vector<Node> nodes_;
  std::unordered_map<Parameter*, std::int32_t> param_nodes_;
};

// Kernel set. Shape mismatches raise ShapeError naming the kernel and shapes.

// a [.., k] times b [k, n] -> [.., n]
Var matmul(Var a, Var b);
// a [.., k] times b[n, k]^T -> [.., n]
Var matmul_nt(Var a, Var b);
Var transpose(Var a);

// Elementwise with broadcasting: one operand's shape must be a suffix of the
// other's (a scalar broadcasts everywhere).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);

Var concat(std::span<const Var> parts);  // along the last axis
Var concat(std::initializer_list<Var> parts);
Var stack(std::span<const Var> parts);  // new leading axis
Var slice_last(Var a, Index begin, Index count);
Var reshape(Var a, Shape shape);
Var gather_rows(Var table, std::span<const Index> rows);
Var row(Var a, Index r);

Var sum(Var a, Index axis);
Var mean(Var a, Index axis);
Var min(Var a, Index axis);
Var sum_all(Var a);

Var softmax(Var a);  // last axis
Var tanh(Var a);
Var sigmoid(Var a);
Var gelu(Var a);
Var sin(Var a);
Var cos(Var a);
Var atan2(Var y, Var x);
// Maps angles into [-pi, pi); gradient passes through unchanged.
Var wrap_angle(Var a);

Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
// Inverted dropout driven by a counter-based hash of `key`; identity when
// !train or rate == 0.
Var dropout(Var a, double rate, std::uint64_t key, bool train);

// Softmax attention weights for q [Lq, dh], k [Lk, dh].
Var attention_weights(Var q, Var k);
// Scaled dot-product attention over `heads` column blocks of q, k, v.
Var multi_head_attention(Var q, Var k, Var v, Index heads);

// Mean over rows of label-smoothed cross-entropy. logits [N] or [B, N]; the
// target distribution puts 1 - s on the true class and s / (N - 1) elsewhere.
Var cross_entropy(Var logits, std::span<const Index> targets, double smoothing);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double c, Var a) { return scale(a, c); }

std::uint64_t mix_key(std::uint64_t a, std::uint64_t b);

}  // namespace hypermono::ad
