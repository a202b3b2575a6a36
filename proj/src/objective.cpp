#include "jrt/objective.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace jrt {

void LossWeights::validate() const {
  if (!(ntp_scale >= 0.0 && mlm_scale >= 0.0)) {
    throw std::invalid_argument("loss weights must be non-negative");
  }
  if (!(ntp_scale + mlm_scale > 0.0)) throw std::invalid_argument("loss weights sum to zero");
  if (!(mask_prob >= 0.0 && mask_prob <= 1.0)) {
    throw std::invalid_argument("mask probability must lie in [0, 1]");
  }
}

MaskedTokens mlm_mask(std::span<const int> tokens, std::size_t encoder_len, double mask_prob,
                      int mask_token, std::uint64_t seed) {
  if (encoder_len > tokens.size()) {
    throw std::invalid_argument("mlm_mask: encoder length " + std::to_string(encoder_len) +
                                " exceeds sequence length " + std::to_string(tokens.size()));
  }
  if (!(mask_prob >= 0.0 && mask_prob <= 1.0)) {
    throw std::invalid_argument("mlm_mask: mask probability must lie in [0, 1]");
  }
  MaskedTokens out;
  out.tokens.assign(tokens.begin(), tokens.end());
  std::mt19937_64 gen(seed);
  std::bernoulli_distribution coin(mask_prob);
  for (std::size_t i = 0; i < encoder_len; ++i) {
    if (!coin(gen)) continue;
    out.positions.push_back(i);
    out.targets.push_back(tokens[i]);
    out.tokens[i] = mask_token;
  }
  return out;
}

double combined_loss(double ntp_loss, double mlm_loss, const LossWeights& w) {
  if (!(w.ntp_scale + w.mlm_scale != 0.0)) throw std::invalid_argument("loss weights sum to zero");
  if (!std::isfinite(ntp_loss) || !std::isfinite(mlm_loss)) {
    throw NumericError("combined_loss: non-finite input loss");
  }
  return (w.ntp_scale * ntp_loss + w.mlm_scale * mlm_loss) / (w.ntp_scale + w.mlm_scale);
}

template <typename T>
Var combined_loss(Tape<T>& tape, Var ntp_loss, Var mlm_loss, const LossWeights& w) {
  if (!(w.ntp_scale + w.mlm_scale != 0.0)) throw std::invalid_argument("loss weights sum to zero");
  const T total = static_cast<T>(w.ntp_scale + w.mlm_scale);
  const Var mixed = tape.add(tape.scale(ntp_loss, static_cast<T>(w.ntp_scale)),
                             tape.scale(mlm_loss, static_cast<T>(w.mlm_scale)));
  return tape.scale(mixed, T{1} / total);
}

template <typename T>
Var combined_objective(Tape<T>& tape, Var logits, std::span<const int> ntp_labels,
                       std::span<const int> mlm_labels, const LossWeights& w) {
  const Var ntp = tape.softmax_cross_entropy(logits, ntp_labels);
  const Var mlm = tape.softmax_cross_entropy(logits, mlm_labels);
  return combined_loss(tape, ntp, mlm, w);
}

std::vector<int> ntp_labels(std::span<const int> tokens, std::size_t encoder_len) {
  std::vector<int> labels(tokens.size(), kIgnoreLabel);
  for (std::size_t i = encoder_len; i + 1 < tokens.size(); ++i) labels[i] = tokens[i + 1];
  return labels;
}

std::vector<int> mlm_labels(const MaskedTokens& masked, std::size_t length) {
  std::vector<int> labels(length, kIgnoreLabel);
  for (std::size_t j = 0; j < masked.positions.size(); ++j) {
    labels.at(masked.positions[j]) = masked.targets[j];
  }
  return labels;
}

template <typename T>
T ntp_region_loss(const Tensor<T>& logits, std::span<const int> targets,
                  std::size_t encoder_len) {
  if (logits.rank() != 2 || logits.rows() != targets.size()) {
    throw ShapeError("ntp_region_loss: logits " + shape_string(logits.shape()) + " vs " +
                     std::to_string(targets.size()) + " targets");
  }
  if (encoder_len >= targets.size()) {
    throw std::invalid_argument("ntp_region_loss: encoder length " + std::to_string(encoder_len) +
                                " leaves no decoder positions");
  }
  std::vector<int> region(targets.begin(), targets.end());
  for (std::size_t i = 0; i < encoder_len; ++i) region[i] = kIgnoreLabel;
  return softmax_cross_entropy(logits, region).loss;
}

template Var combined_loss<float>(Tape<float>&, Var, Var, const LossWeights&);
template Var combined_loss<double>(Tape<double>&, Var, Var, const LossWeights&);
template Var combined_objective<float>(Tape<float>&, Var, std::span<const int>,
                                       std::span<const int>, const LossWeights&);
template Var combined_objective<double>(Tape<double>&, Var, std::span<const int>,
                                        std::span<const int>, const LossWeights&);
template float ntp_region_loss<float>(const Tensor<float>&, std::span<const int>, std::size_t);
template double ntp_region_loss<double>(const Tensor<double>&, std::span<const int>, std::size_t);

}  // namespace jrt
