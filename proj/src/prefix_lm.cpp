#include "jrt/prefix_lm.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace jrt {
namespace {

enum Slot : std::size_t { kEmbed, kWq, kWk, kWv, kWkEnc, kWvEnc, kWo, kUnembed, kSlots };

}  // namespace

template <typename T>
PrefixLM<T>::PrefixLM(const PrefixLMConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg.vocab < 2 || cfg.d_model == 0 || cfg.feature_dim == 0) {
    throw std::invalid_argument("prefix lm: vocabulary and widths must be positive");
  }
  const auto V = static_cast<std::size_t>(cfg.vocab);
  const std::size_t d = cfg.d_model, f = cfg.feature_dim;
  const std::vector<std::vector<std::size_t>> shapes = {{V, d}, {d, f}, {d, f}, {d, d},
                                                        {d, f}, {d, d}, {d, d}, {d, V}};
  std::mt19937_64 gen(seed);
  for (std::size_t i = 0; i < kSlots; ++i) {
    const double fan_in = i == kEmbed ? 1.0 : static_cast<double>(shapes[i][0]);
    std::uniform_real_distribution<double> dist(-1.0 / std::sqrt(fan_in), 1.0 / std::sqrt(fan_in));
    Tensor<T> t(shapes[i]);
    for (T& x : t.data()) x = static_cast<T>(dist(gen));
    params_.push_back(std::move(t));
  }
}

template <typename T>
typename PrefixLM<T>::Graph PrefixLM<T>::build(Tape<T>& tape, std::span<const int> tokens,
                                                bool trainable) const {
  if (tokens.empty()) throw std::invalid_argument("prefix lm: empty sequence");
  Graph g;
  for (const auto& p : params_) g.params.push_back(trainable ? tape.parameter(p) : tape.leaf(p));
  const std::size_t n = tokens.size(), m = std::min(cfg_.encoder_len, n);
  const Var x = tape.embedding(g.params[kEmbed], tokens);
  const Var phi_q = tape.taylor2(tape.matmul(x, g.params[kWq]), 1);
  const Var phi_k = tape.taylor2(tape.matmul(x, g.params[kWk]), 1);
  const Var phi_ke = tape.taylor2(tape.matmul(x, g.params[kWkEnc]), 1);
  const Var v = tape.matmul(x, g.params[kWv]);
  const Var v_e = tape.matmul(x, g.params[kWvEnc]);
  const Var attn = tape.prefix_linear_attention(phi_q, phi_k, v, phi_ke, v_e, 1, n, m);
  const Var h = tape.add(x, tape.matmul(attn, g.params[kWo]));
  g.logits = tape.matmul(h, g.params[kUnembed]);
  return g;
}

template <typename T>
Tensor<T> PrefixLM<T>::forward(std::span<const int> tokens) const {
  Tape<T> tape;
  return tape.value(build(tape, tokens).logits);
}

template <typename T>
int PrefixLM<T>::next_token(const std::vector<int>& tokens) const {
  const Tensor<T> logits = forward(tokens);
  const auto row = logits.row(logits.rows() - 1);
  return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
}

template <typename T>
typename PrefixLM<T>::Rows PrefixLM<T>::project(std::span<const int> tokens) const {
  const std::size_t d = cfg_.d_model;
  Tensor<T> x({tokens.size(), d});
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] < 0 || tokens[i] >= cfg_.vocab) {
      throw std::out_of_range("prefix lm: token id " + std::to_string(tokens[i]) + " out of range");
    }
    const auto src = params_[kEmbed].row(static_cast<std::size_t>(tokens[i]));
    std::copy(src.begin(), src.end(), x.row(i).begin());
  }
  return {matmul(x, params_[kWq]), matmul(x, params_[kWk]), matmul(x, params_[kWv]),
          matmul(x, params_[kWkEnc]), matmul(x, params_[kWvEnc])};
}

template <typename T>
std::vector<T> PrefixLM<T>::logits_row(int token, std::span<const T> attn) const {
  const std::size_t d = cfg_.d_model;
  const auto V = static_cast<std::size_t>(cfg_.vocab);
  std::vector<T> h(params_[kEmbed].row(static_cast<std::size_t>(token)).begin(),
                   params_[kEmbed].row(static_cast<std::size_t>(token)).end());
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t c = 0; c < d; ++c) h[c] += attn[a] * params_[kWo](a, c);
  std::vector<T> logits(V, T{0});
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t c = 0; c < V; ++c) logits[c] += h[a] * params_[kUnembed](a, c);
  return logits;
}

template <typename T>
std::vector<int> PrefixLM<T>::generate(const std::vector<int>& prompt,
                                       std::size_t n_tokens) const {
  const std::size_t m = cfg_.encoder_len;
  if (prompt.size() < m || prompt.empty()) {
    throw std::invalid_argument("prefix lm: prompt of " + std::to_string(prompt.size()) +
                                " tokens is shorter than the encoder length " +
                                std::to_string(m));
  }
  const FeatureMap phi = FeatureMap::taylor2(cfg_.feature_dim);
  Rows rows = project(prompt);
  PLAInputs<T> in;
  in.q_dec = std::move(rows.q);
  in.k_dec = std::move(rows.k);
  in.v_dec = std::move(rows.v);
  in.k_enc = Tensor<T>({m, cfg_.feature_dim});
  in.v_enc = Tensor<T>({m, cfg_.d_model});
  for (std::size_t j = 0; j < m; ++j) {
    std::copy(rows.k_enc.row(j).begin(), rows.k_enc.row(j).end(), in.k_enc.row(j).begin());
    std::copy(rows.v_enc.row(j).begin(), rows.v_enc.row(j).end(), in.v_enc.row(j).begin());
  }
  in.pad_mask = PLAInputs<T>::unmasked(m);
  Prefill<T> pre = two_pass_prefill(in, phi);

  auto argmax = [](const std::vector<T>& v) {
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
  };
  std::vector<int> out;
  if (n_tokens == 0) return out;
  int tok = argmax(logits_row(prompt.back(), pre.y.row(pre.y.rows() - 1)));
  out.push_back(tok);
  while (out.size() < n_tokens) {
    const int single[1] = {tok};
    const Rows r = project(single);
    const std::vector<T> y =
        la_decode_step<T>(pre.state, r.q.row(0), r.k.row(0), r.v.row(0), phi);
    tok = argmax(logits_row(tok, y));
    out.push_back(tok);
  }
  return out;
}

template <typename T>
Var PrefixLM<T>::objective(Tape<T>& tape, std::span<const int> tokens, const LossWeights& w,
                           std::uint64_t mask_seed, Graph* graph) const {
  w.validate();
  if (w.encoder_len != cfg_.encoder_len) {
    throw std::invalid_argument("prefix lm: loss encoder length differs from the model's");
  }
  const std::size_t m = std::min(cfg_.encoder_len, tokens.size());
  const MaskedTokens masked = mlm_mask(tokens, m, w.mask_prob, w.mask_token, mask_seed);
  Graph g = build(tape, masked.tokens, true);
  const std::vector<int> ntp = ntp_labels(tokens, m);
  const std::vector<int> mlm = mlm_labels(masked, tokens.size());
  const Var loss = combined_objective(tape, g.logits, ntp, mlm, w);
  if (graph != nullptr) *graph = std::move(g);
  return loss;
}

template class PrefixLM<float>;
template class PrefixLM<double>;

}  // namespace jrt
