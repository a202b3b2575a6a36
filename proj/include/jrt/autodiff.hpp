#pragma once

// Reverse-mode autodiff over a fixed primitive set. A Tape records nodes in
// creation order, so inputs always precede their consumers and backward() is a
// single reverse sweep. Row-stacked batches are supported by the sequence ops:
// `seq_len` splits the rows into independent sequences of equal length.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "jrt/tensor.hpp"

namespace jrt {

struct Var {
  std::size_t id = 0;
};

template <typename T>
class Tape {
 public:
  // A value that never receives a gradient.
  Var leaf(Tensor<T> value);
  // A value whose gradient is reported by grad().
  Var parameter(Tensor<T> value);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var add_bias(Var x, Var bias);  // x: rows x cols, bias: [cols]
  Var mul(Var a, Var b);
  Var scale(Var a, T factor);
  Var sum(Var a);
  Var cumsum_rows(Var x, std::size_t seq_len);
  // Depthwise filter over each sequence: out[t,c] = sum_w filter[w,c] * x[t-w,c].
  // Causal mode treats t-w < 0 as zero; otherwise the index wraps (circular).
  Var conv1d(Var x, Var filter, std::size_t seq_len, bool causal);
  Var gelu(Var x);
  Var silu(Var x);
  Var embedding(Var table, std::span<const int> ids);
  Var gather_rows(Var x, std::span<const std::size_t> rows);
  // Per-head second-order Taylor features; input columns are heads * f.
  Var taylor2(Var x, std::size_t heads);
  // Multi-head linear attention over row-stacked sequences. phi_q/phi_k hold
  // heads * D columns, v holds heads * d. causal=false sums over the whole
  // sequence.
  Var linear_attention(Var phi_q, Var phi_k, Var v, std::size_t heads, std::size_t seq_len,
                       bool causal);
  // Linear attention whose per-sequence state also includes the encoder terms
  // phi_ke (x) v_e over the first `encoder_len` rows of each sequence.
  Var prefix_linear_attention(Var phi_q, Var phi_k, Var v, Var phi_ke, Var v_e,
                              std::size_t heads, std::size_t seq_len, std::size_t encoder_len);
  // Mean cross-entropy over rows whose label is not kIgnoreLabel.
  Var softmax_cross_entropy(Var logits, std::span<const int> labels);

  const Tensor<T>& value(Var v) const { return nodes_.at(v.id).value; }
  // Gradient of the last backward() loss. Throws if `v` is not on a path to it.
  const Tensor<T>& grad(Var v) const;
  bool has_grad(Var v) const;

  // Throws ShapeError if `loss` does not hold exactly one value.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    bool reached = false;
    std::vector<std::size_t> inputs;
    std::function<void(Tape&, std::size_t)> backward;
  };

  Var push(Tensor<T> value, std::vector<std::size_t> inputs,
           std::function<void(Tape&, std::size_t)> backward);
  Tensor<T>& accum(std::size_t id);
  bool needs(std::size_t id) const { return nodes_[id].requires_grad; }
  Var attention_node(Var phi_q, Var phi_k, Var v, const Var* phi_ke, const Var* v_e,
                     std::size_t heads, std::size_t seq_len, bool causal,
                     std::size_t encoder_len);

  std::vector<Node> nodes_;
};

// Central differences (f(p + h e) - f(p - h e)) / 2h for every coordinate of
// every parameter. `params` is perturbed in place and restored.
template <typename T>
std::vector<Tensor<T>> finite_diff_grad(const std::function<T(std::vector<Tensor<T>>&)>& fn,
                                        std::vector<Tensor<T>>& params, T h);

}  // namespace jrt
