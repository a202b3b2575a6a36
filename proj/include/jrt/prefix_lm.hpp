#pragma once

// One-layer prefix language model: token embeddings, a single prefix linear
// attention head with separate encoder key/value projections, a residual
// output projection and an unembedding. It exercises the parallel, two-pass
// and decode paths of prefix attention end to end.

#include <cstdint>
#include <span>
#include <vector>

#include "jrt/autodiff.hpp"
#include "jrt/objective.hpp"
#include "jrt/prefix_attention.hpp"

namespace jrt {

struct PrefixLMConfig {
  int vocab = 32;
  std::size_t d_model = 8;
  std::size_t feature_dim = 4;
  std::size_t encoder_len = 4;  // M
};

template <typename T>
class PrefixLM {
 public:
  PrefixLM(const PrefixLMConfig& cfg, std::uint64_t seed);

  const PrefixLMConfig& config() const { return cfg_; }
  std::vector<Tensor<T>>& params() { return params_; }
  const std::vector<Tensor<T>>& params() const { return params_; }

  struct Graph {
    std::vector<Var> params;
    Var logits;
  };

  // Parallel pass over one sequence; the encoder covers its first
  // min(M, length) tokens.
  Graph build(Tape<T>& tape, std::span<const int> tokens, bool trainable = false) const;
  Tensor<T> forward(std::span<const int> tokens) const;

  // Greedy prediction after the last token, via a full parallel pass.
  int next_token(const std::vector<int>& tokens) const;

  // Greedy generation from a two-pass prefill of `prompt` followed by
  // constant-memory decode steps. Requires prompt length >= M.
  std::vector<int> generate(const std::vector<int>& prompt, std::size_t n_tokens) const;

  // Combined objective on one sequence: the first M tokens are masked with
  // probability P, NTP covers rows >= M.
  Var objective(Tape<T>& tape, std::span<const int> tokens, const LossWeights& w,
                std::uint64_t mask_seed, Graph* graph = nullptr) const;

 private:
  struct Rows {
    Tensor<T> q, k, v, k_enc, v_enc;
  };
  Rows project(std::span<const int> tokens) const;
  std::vector<T> logits_row(int token, std::span<const T> attn) const;

  PrefixLMConfig cfg_;
  std::vector<Tensor<T>> params_;  // embed, wq, wk, wv, wk_enc, wv_enc, wo, unembed
};

}  // namespace jrt
