#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tldr/tensor.hpp"

namespace tldr {

enum class OpKind {
  leaf,
  conv2d,
  relu,
  max_pool2,
  avg_pool2,
  bilinear_upsample,
  matmul,
  batched_matmul,
  transpose,
  add,
  sub,
  mul,
  scalar_mul,
  sum,
  mean,
  frobenius_norm,
  reshape,
  cross_entropy,
};

std::string_view op_name(OpKind kind);

// Per-primitive attributes. Only the fields a primitive reads are meaningful.
struct OpAttrs {
  std::size_t stride = 1;       // conv2d
  std::size_t pad = 0;          // conv2d
  double scalar = 1.0;          // scalar_mul
  Shape shape;                  // reshape target
  std::size_t out_h = 0;        // bilinear_upsample
  std::size_t out_w = 0;        // bilinear_upsample
  std::vector<int> labels;      // cross_entropy, one per pixel (N*H*W)
  int ignore_index = 255;       // cross_entropy
};

class Tape;

// Handle to a node recorded on a Tape. Valid only while its tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  std::size_t id() const noexcept { return id_; }
  Tape* tape() const noexcept { return tape_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Result of backward(): node-id -> d(loss)/d(node).
class Gradients {
 public:
  bool contains(Var v) const { return grads_.contains(v.id()); }
  const Tensor& at(Var v) const;
  // Gradient of v, or zeros of v's shape when no gradient reached it.
  Tensor get_or_zero(Var v) const;
  std::size_t size() const noexcept { return grads_.size(); }

 private:
  friend class Tape;
  std::unordered_map<std::size_t, Tensor> grads_;
};

// Define-by-run record of applied primitives. One tape per training step;
// discard after backward. Not thread-safe; confine to one thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);

  Var apply(OpKind kind, std::span<const Var> inputs, const OpAttrs& attrs = {});

  // Reverse sweep from a scalar root. Shared subexpressions accumulate.
  Gradients backward(Var loss) const;

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    OpKind kind = OpKind::leaf;
    std::vector<std::size_t> inputs;
    Tensor value;
    bool requires_grad = false;
    OpAttrs attrs;
    std::vector<double> saved;        // softmax probs, norms
    std::vector<std::size_t> index;   // max-pool argmax
  };

  Var push(Node node);
  void backprop_node(const Node& node, const Tensor& grad_out,
                     std::vector<Tensor*>& input_grads) const;

  std::vector<Node> nodes_;
};

// Detached copy of v as a constant on the same tape.
Var detach(Var v);

namespace ops {

// x: N x Ci x H x W, w: Co x Ci x k x k, b: Co (optional).
Var conv2d(Var x, Var w, Var b, std::size_t stride = 1, std::size_t pad = 0);
Var conv2d(Var x, Var w, std::size_t stride = 1, std::size_t pad = 0);
Var relu(Var x);
Var max_pool2(Var x);
Var avg_pool2(Var x);
// Half-pixel-centred bilinear resize of the last two axes.
Var upsample_bilinear(Var x, std::size_t out_h, std::size_t out_w);
Var matmul(Var a, Var b);
Var batched_matmul(Var a, Var b);
// Swaps the last two axes of a rank-2 or rank-3 tensor.
Var transpose(Var x);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double s);
Var sum(Var x);
Var mean(Var x);
Var frobenius_norm(Var x);
Var reshape(Var x, Shape shape);

}  // namespace ops

// Mean over non-ignored pixels of -log softmax(logits)[label].
// logits: N x C x H x W; labels: N*H*W row-major.
Var cross_entropy(Var logits, std::span<const int> labels, int ignore_index = 255);

// Worst |analytic - central difference| / max(1, |analytic|) over all
// coordinates of input.
using ScalarFunction = std::function<Var(Tape&, Var)>;
double finite_difference_check(const ScalarFunction& f, const Tensor& input,
                               double epsilon = 1e-5);

}  // namespace tldr
