#pragma once

// Single-head linear attention y_i = phi(q_i) S_i / (phi(q_i) Z_i + eps) in two
// views: a parallel view built from outer products and prefix sums, and a
// recurrent view that carries (S, Z) one token at a time.

#include <cstdint>
#include <optional>
#include <span>

#include "jrt/feature_maps.hpp"
#include "jrt/tensor.hpp"

namespace jrt {

template <typename T>
struct LAState {
  Tensor<T> s;  // feature_dim x head_dim
  Tensor<T> z;  // feature_dim
  std::size_t position = 0;

  static LAState empty(std::size_t feature_dim, std::size_t head_dim) {
    return {Tensor<T>({feature_dim, head_dim}), Tensor<T>({feature_dim}), 0};
  }
  std::size_t feature_dim() const { return z.size(); }
  std::size_t head_dim() const { return s.cols(); }
  // Bytes carried between decode steps; independent of sequence length.
  std::size_t footprint_bytes() const { return (s.size() + z.size()) * sizeof(T); }
};

struct LAOptions {
  bool causal = true;
  std::optional<double> denom_eps;  // defaults to FeatureMap::default_denom_eps()
  Exec exec = Exec::serial;
};

template <typename T>
struct Prefill {
  Tensor<T> y;
  LAState<T> state;
};

// Throws NumericError when a denominator is zero (possible only for non-taylor2 maps).
template <typename T>
Tensor<T> la_parallel(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                      const FeatureMap& phi, const LAOptions& opts = {});

template <typename T>
Prefill<T> la_prefill(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                      const FeatureMap& phi, const LAOptions& opts = {});

// Folds one token into `state` and returns its output row.
template <typename T>
std::vector<T> la_decode_step(LAState<T>& state, std::span<const T> q, std::span<const T> k,
                              std::span<const T> v, const FeatureMap& phi,
                              std::optional<double> denom_eps = std::nullopt);

// Token-by-token rollout from an empty state.
template <typename T>
Tensor<T> la_recurrent(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                       const FeatureMap& phi, std::optional<double> denom_eps = std::nullopt);

// Heads laid out side by side in the columns; each head runs independently.
template <typename T>
Tensor<T> la_parallel_heads(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                            std::size_t heads, const FeatureMap& phi, const LAOptions& opts = {});

struct FlopParams {
  std::uint64_t B = 1, N = 1, M = 0, H = 1, d = 1, D = 1;
};

struct FlopCounts {
  std::uint64_t feature = 0;  // applying the feature map to keys and queries
  std::uint64_t core = 0;     // state updates and query contractions
  friend bool operator==(const FlopCounts&, const FlopCounts&) = default;
};

// (2 B N H D, 4 B N H d D). Throws std::invalid_argument if B, N, H, d or D is zero.
FlopCounts flops_causal_la(const FlopParams& p);

}  // namespace jrt
