#pragma once

// Prefix linear attention: decoder rows attend causally to their own keys and,
// in addition, to every unmasked encoder key of the first M positions.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "jrt/linear_attention.hpp"

namespace jrt {

enum class PadStrategy { left_pad, read_twice, iterative };

PadStrategy parse_pad_strategy(const std::string& name);

struct PLAConfig {
  std::size_t encoder_len = 0;  // M
  int pad_token = 0;
  PadStrategy strategy = PadStrategy::left_pad;
};

template <typename T>
struct PLAInputs {
  Tensor<T> q_dec, k_dec, v_dec;  // N x d_in, N x d_in, N x d
  Tensor<T> k_enc, v_enc;         // M x d_in, M x d
  std::vector<std::uint8_t> pad_mask;  // M entries, 1 = real token

  std::size_t encoder_len() const { return k_enc.rank() == 2 ? k_enc.rows() : 0; }
  // All-real mask over M positions.
  static std::vector<std::uint8_t> unmasked(std::size_t m) { return std::vector<std::uint8_t>(m, 1); }
};

struct PLAOptions {
  std::optional<double> denom_eps;
  Exec exec = Exec::serial;
};

template <typename T>
Tensor<T> pla_parallel(const PLAInputs<T>& in, const FeatureMap& phi, const PLAOptions& opts = {});

// Encoder-only sums: the state after the first pass of two_pass_prefill.
template <typename T>
LAState<T> pla_encoder_state(const PLAInputs<T>& in, const FeatureMap& phi,
                             const PLAOptions& opts = {});

// State after position M: encoder sums plus decoder sums over the first M rows.
template <typename T>
LAState<T> pla_init_state(const PLAInputs<T>& in, const FeatureMap& phi);

// Pass 1 folds encoder keys into the state without queries; pass 2 runs the
// causal decoder scan seeded from it. The returned state covers all N rows.
template <typename T>
Prefill<T> two_pass_prefill(const PLAInputs<T>& in, const FeatureMap& phi,
                            const PLAOptions& opts = {});

struct PreparedPrompt {
  std::vector<int> tokens;
  std::vector<std::uint8_t> mask;  // same length as tokens, 1 = real token
};

// Pads a short prompt up to the encoder length. left_pad and iterative prepend
// pad tokens; read_twice prepends the most recent prompt tokens and falls back
// to pad tokens only when two copies are still shorter than M.
PreparedPrompt prepare_prompt(const std::vector<int>& tokens, const PLAConfig& cfg);

struct IterativeResult {
  std::vector<int> generated;
  std::uint64_t parallel_tokens = 0;  // total sequence length over all parallel passes
};

// Re-runs a full parallel pass over prompt + generated tokens for every new
// token. `next_token` maps a whole sequence to the prediction after its end.
IterativeResult iterative_decode(const std::function<int(const std::vector<int>&)>& next_token,
                                 const std::vector<int>& prefill, std::size_t n_tokens);

// Extra work over causal linear attention: (B M H D, 3 B M H d D).
FlopCounts flops_pla(const FlopParams& p);

}  // namespace jrt
