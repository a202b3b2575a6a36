#pragma once

// Combined next-token / masked-token objective for prefix models: NTP over the
// decoder region plus MLM over masked encoder positions, mixed by two weights.

#include <cstdint>
#include <span>
#include <vector>

#include "jrt/autodiff.hpp"
#include "jrt/tensor.hpp"

namespace jrt {

struct LossWeights {
  double ntp_scale = 1.0;   // w1
  double mlm_scale = 0.25;  // w2
  double mask_prob = 0.15;  // P
  std::size_t encoder_len = 0;  // M
  int mask_token = 0;

  // Throws std::invalid_argument unless w1, w2 >= 0, w1 + w2 > 0 and P in [0, 1].
  void validate() const;
};

struct MaskedTokens {
  std::vector<int> tokens;              // copy of the input with masked slots replaced
  std::vector<std::size_t> positions;   // masked positions, ascending, all < M
  std::vector<int> targets;             // original token at each masked position
};

// Masks each of the first M positions independently with probability P.
// Throws std::invalid_argument if M exceeds the sequence length or P is outside [0, 1].
MaskedTokens mlm_mask(std::span<const int> tokens, std::size_t encoder_len, double mask_prob,
                      int mask_token, std::uint64_t seed);

// (w1 L_ntp + w2 L_mlm) / (w1 + w2). Throws std::invalid_argument when the
// weights sum to zero and NumericError on non-finite losses.
double combined_loss(double ntp_loss, double mlm_loss, const LossWeights& w);

template <typename T>
Var combined_loss(Tape<T>& tape, Var ntp_loss, Var mlm_loss, const LossWeights& w);

// Both cross-entropies read the same logits (the MLM head shares the
// unembedding) and are mixed by combined_loss.
template <typename T>
Var combined_objective(Tape<T>& tape, Var logits, std::span<const int> ntp_labels,
                       std::span<const int> mlm_labels, const LossWeights& w);

// Labels for the NTP term: row i predicts tokens[i + 1] for M <= i < N - 1;
// all other rows carry kIgnoreLabel.
std::vector<int> ntp_labels(std::span<const int> tokens, std::size_t encoder_len);

// Labels for the MLM term: the original token at each masked row, ignore elsewhere.
std::vector<int> mlm_labels(const MaskedTokens& masked, std::size_t length);

// Mean cross-entropy over rows i >= M, where targets[i] is the token that row i
// predicts (kIgnoreLabel rows are skipped). Throws std::invalid_argument if M >= N.
template <typename T>
T ntp_region_loss(const Tensor<T>& logits, std::span<const int> targets, std::size_t encoder_len);

}  // namespace jrt
