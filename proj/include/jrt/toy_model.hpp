#pragma once

// Small Based-style recall model: token embeddings, then blocks of
// [gated convolution, MLP, linear attention, MLP], each sublayer added back to
// the residual stream, then an untied unembedding. The causal flag selects
// causal convolutions and prefix-sum attention; otherwise convolutions wrap
// around the sequence and attention sums over every position.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "jrt/autodiff.hpp"
#include "jrt/set_disjointness.hpp"
#include "jrt/tensor.hpp"

namespace jrt {

enum class Precision { fp32, fp64 };

std::size_t bytes_per_element(Precision p);
Precision parse_precision(const std::string& name);

struct ToyConfig {
  std::size_t n_layers = 4;  // gated-conv and attention layers alternate
  std::size_t d_model = 16;
  std::size_t feature_dim = 4;  // per-head projection width before the Taylor map
  std::size_t n_heads = 2;
  std::size_t conv_filter = 3;
  bool causal = true;
  int vocab = 256;
  Precision precision = Precision::fp32;

  std::size_t blocks() const { return n_layers / 2; }
  std::size_t head_dim() const { return d_model / n_heads; }
  std::size_t mlp_hidden() const { return 2 * d_model; }
  // Taylor feature width: 1 + f + f^2.
  std::size_t state_feature_dim() const;
  // Throws std::invalid_argument on an unusable shape.
  void validate() const;
};

// Recurrent state carried while decoding: per attention layer n_heads (S, Z)
// pairs, per convolution layer the last (filter - 1) inputs of every channel.
std::size_t state_size_bytes(const ToyConfig& cfg);

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> value;
  bool decay = false;  // AdamW weight decay applies
};

template <typename T>
class ToyModel {
 public:
  // Every tensor is drawn from uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  ToyModel(const ToyConfig& cfg, std::uint64_t seed);
  ToyModel(const ToyConfig& cfg, std::vector<NamedTensor<T>> params);

  const ToyConfig& config() const { return cfg_; }
  std::vector<NamedTensor<T>>& params() { return params_; }
  const std::vector<NamedTensor<T>>& params() const { return params_; }
  std::size_t parameter_count() const;

  struct Graph {
    std::vector<Var> params;  // parallel to params()
    std::vector<Var> hidden;  // residual stream after every sublayer
    Var logits;
  };

  // Records the forward pass for `tokens`, a stack of sequences of length
  // `seq_len`. Logits cover `rows` of the stack, or every row when empty.
  // Throws std::out_of_range on an id outside [0, vocab).
  Graph build(Tape<T>& tape, std::span<const int> tokens, std::size_t seq_len,
              std::span<const std::size_t> rows = {}, bool trainable = false) const;

  // Logits for every position of one sequence.
  Tensor<T> forward(std::span<const int> tokens) const;

 private:
  ToyConfig cfg_;
  std::vector<NamedTensor<T>> params_;
};

// Predicted answer token at the final position of each instance. Instances are
// batched by length; the result follows the input order.
template <typename T>
std::vector<int> predict_answers(const ToyModel<T>& model, const std::vector<SDInstance>& data,
                                 std::size_t batch_size = 64);

struct TrainOptions {
  double lr = 5e-4;
  std::size_t epochs = 1;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;  // batch order
  double beta1 = 0.9;
  double beta2 = 0.95;
  double adam_eps = 1e-8;
  double weight_decay = 0.1;
  double warmup_fraction = 0.05;  // linear warmup, then cosine decay
  double final_lr_fraction = 0.1;  // lr multiplier at the last step; 1 keeps lr constant
  double grad_clip = 1.0;         // global L2 norm; 0 disables
};

struct TrainResult {
  bool diverged = false;
  std::size_t steps = 0;
  std::vector<double> epoch_loss;  // mean batch loss per finished epoch
};

// AdamW on the cross-entropy at each instance's answer position. A non-finite
// loss marks the run diverged and stops it. Throws std::invalid_argument on an
// empty dataset.
template <typename T>
TrainResult train(ToyModel<T>& model, const std::vector<SDInstance>& data,
                  const TrainOptions& opts);

struct SlicedAccuracy {
  double overall = 0.0;
  double a_smaller = 0.0;  // instances with |A| < |B|
  double b_smaller = 0.0;  // instances with |B| < |A|
  std::size_t n_overall = 0, n_a_smaller = 0, n_b_smaller = 0;
};

// Accuracy of `predictions` against each instance's target, overall and per
// slice. Throws std::invalid_argument if either slice is empty.
SlicedAccuracy eval_sliced(const std::vector<SDInstance>& data, std::span<const int> predictions);

template <typename T>
SlicedAccuracy eval_sliced(const ToyModel<T>& model, const std::vector<SDInstance>& data);

}  // namespace jrt
