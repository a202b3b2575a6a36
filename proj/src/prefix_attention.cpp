#include "jrt/prefix_attention.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace jrt {
namespace {

template <typename T>
void check_inputs(const PLAInputs<T>& in, const FeatureMap& phi) {
  const auto& q = in.q_dec;
  if (q.rank() != 2 || !q.same_shape(in.k_dec) || in.v_dec.rank() != 2 ||
      in.v_dec.rows() != q.rows()) {
    throw ShapeError("prefix attention: decoder q " + shape_string(q.shape()) + " k " +
                     shape_string(in.k_dec.shape()) + " v " + shape_string(in.v_dec.shape()));
  }
  if (q.cols() != phi.input_dim()) {
    throw ShapeError("prefix attention: feature map expects width " +
                     std::to_string(phi.input_dim()));
  }
  const std::size_t m = in.encoder_len();
  if (m > 0 && (in.k_enc.cols() != q.cols() || in.v_enc.rank() != 2 || in.v_enc.rows() != m ||
                in.v_enc.cols() != in.v_dec.cols())) {
    throw ShapeError("prefix attention: encoder k " + shape_string(in.k_enc.shape()) + " v " +
                     shape_string(in.v_enc.shape()));
  }
  if (in.pad_mask.size() != m) {
    throw ShapeError("prefix attention: mask has " + std::to_string(in.pad_mask.size()) +
                     " entries for encoder length " + std::to_string(m));
  }
  if (m > q.rows()) {
    throw ShapeError("prefix attention: encoder length " + std::to_string(m) +
                     " exceeds sequence length " + std::to_string(q.rows()));
  }
}

template <typename T>
T resolve_eps(const FeatureMap& phi, std::optional<double> eps) {
  const double e = eps.value_or(phi.default_denom_eps());
  if (!(e >= 0.0)) throw std::invalid_argument("prefix attention: denom_eps must be >= 0");
  return static_cast<T>(e);
}

template <typename T>
bool bad_denominator(T raw, T eps) {
  return raw + eps == T{0} || std::abs(raw) < eps || !std::isfinite(raw);
}

// Unmasked encoder rows, lifted, with their values.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> real_encoder_rows(const PLAInputs<T>& in, const FeatureMap& phi) {
  const std::size_t m = in.encoder_len();
  const std::size_t kept = static_cast<std::size_t>(
      std::count_if(in.pad_mask.begin(), in.pad_mask.end(), [](std::uint8_t b) { return b != 0; }));
  const std::size_t din = in.q_dec.cols(), d = in.v_dec.cols();
  Tensor<T> k({kept, din}), v({kept, d});
  for (std::size_t j = 0, r = 0; j < m; ++j) {
    if (!in.pad_mask[j]) continue;
    std::copy(in.k_enc.row(j).begin(), in.k_enc.row(j).end(), k.row(r).begin());
    std::copy(in.v_enc.row(j).begin(), in.v_enc.row(j).end(), v.row(r).begin());
    ++r;
  }
  return {phi.apply_rows(k), std::move(v)};
}

// Folds rows [0, n) of (phi_k, v) into state without producing outputs.
template <typename T>
void fold_rows(LAState<T>& state, const Tensor<T>& phi_k, const Tensor<T>& v, std::size_t n,
               Exec exec) {
  kernels::ScanArgs<T> args;
  args.phi_k = phi_k.data().data();
  args.v = v.data().data();
  args.s = state.s.data().data();
  args.z = state.z.data().data();
  args.n = n;
  args.D = state.feature_dim();
  args.d = state.head_dim();
  args.phi_ld = phi_k.cols();
  args.v_ld = v.cols();
  kernels::causal_scan(exec, args);
}

}  // namespace

PadStrategy parse_pad_strategy(const std::string& name) {
  if (name == "left_pad") return PadStrategy::left_pad;
  if (name == "read_twice") return PadStrategy::read_twice;
  if (name == "iterative") return PadStrategy::iterative;
  throw std::invalid_argument("unknown pad strategy: " + name);
}

template <typename T>
Tensor<T> pla_parallel(const PLAInputs<T>& in, const FeatureMap& phi, const PLAOptions& opts) {
  check_inputs(in, phi);
  const T eps = resolve_eps<T>(phi, opts.denom_eps);
  const std::size_t n = in.q_dec.rows(), d = in.v_dec.cols(), D = phi.feature_dim();
  const Tensor<T> pq = phi.apply_rows(in.q_dec);
  const Tensor<T> pk = phi.apply_rows(in.k_dec);

  // Encoder sums over real positions.
  const auto [pke, ve] = real_encoder_rows(in, phi);
  Tensor<T> kv_enc({pke.rows(), D * d});
  for (std::size_t j = 0; j < pke.rows(); ++j)
    for (std::size_t a = 0; a < D; ++a)
      for (std::size_t c = 0; c < d; ++c) kv_enc(j, a * d + c) = pke(j, a) * ve(j, c);
  const Tensor<T> s_enc = column_sums(kv_enc);
  const Tensor<T> z_enc = column_sums(pke);

  // Decoder prefix sums.
  Tensor<T> kv({n, D * d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < D; ++a)
      for (std::size_t c = 0; c < d; ++c) kv(i, a * d + c) = pk(i, a) * in.v_dec(i, c);
  const Tensor<T> S = cumsum_rows(kv, opts.exec);
  const Tensor<T> Z = cumsum_rows(pk, opts.exec);

  Tensor<T> y({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    T raw = T{0};
    for (std::size_t a = 0; a < D; ++a) raw += pq(i, a) * (Z(i, a) + z_enc[a]);
    if (bad_denominator(raw, eps)) {
      throw NumericError("prefix attention: zero denominator at row " + std::to_string(i));
    }
    const T den = raw + eps;
    for (std::size_t a = 0; a < D; ++a) {
      const T qa = pq(i, a);
      for (std::size_t c = 0; c < d; ++c) y(i, c) += qa * (S(i, a * d + c) + s_enc[a * d + c]);
    }
    for (std::size_t c = 0; c < d; ++c) y(i, c) /= den;
  }
  return y;
}

template <typename T>
LAState<T> pla_encoder_state(const PLAInputs<T>& in, const FeatureMap& phi,
                             const PLAOptions& opts) {
  check_inputs(in, phi);
  auto state = LAState<T>::empty(phi.feature_dim(), in.v_dec.cols());
  const auto [pke, ve] = real_encoder_rows(in, phi);
  fold_rows(state, pke, ve, pke.rows(), opts.exec);
  return state;
}

template <typename T>
LAState<T> pla_init_state(const PLAInputs<T>& in, const FeatureMap& phi) {
  auto state = pla_encoder_state(in, phi);
  const std::size_t m = in.encoder_len();
  const Tensor<T> pk = phi.apply_rows(in.k_dec);
  fold_rows(state, pk, in.v_dec, m, Exec::serial);
  state.position = m;
  return state;
}

template <typename T>
Prefill<T> two_pass_prefill(const PLAInputs<T>& in, const FeatureMap& phi,
                            const PLAOptions& opts) {
  Prefill<T> out{Tensor<T>({in.q_dec.rows(), in.v_dec.cols()}),
                 pla_encoder_state(in, phi, opts)};
  const Tensor<T> pq = phi.apply_rows(in.q_dec);
  const Tensor<T> pk = phi.apply_rows(in.k_dec);
  kernels::ScanArgs<T> args;
  args.phi_q = pq.data().data();
  args.phi_k = pk.data().data();
  args.v = in.v_dec.data().data();
  args.y = out.y.data().data();
  args.s = out.state.s.data().data();
  args.z = out.state.z.data().data();
  args.n = in.q_dec.rows();
  args.D = phi.feature_dim();
  args.d = in.v_dec.cols();
  args.phi_ld = args.D;
  args.v_ld = args.d;
  args.y_ld = args.d;
  args.denom_eps = resolve_eps<T>(phi, opts.denom_eps);
  const std::size_t bad = kernels::causal_scan(opts.exec, args);
  if (bad < args.n) {
    throw NumericError("prefix attention: zero denominator at row " + std::to_string(bad));
  }
  out.state.position = args.n;
  return out;
}

PreparedPrompt prepare_prompt(const std::vector<int>& tokens, const PLAConfig& cfg) {
  const std::size_t m = cfg.encoder_len, p = tokens.size();
  if (p >= m) return {tokens, std::vector<std::uint8_t>(p, 1)};
  PreparedPrompt out;
  std::size_t missing = m - p;
  if (cfg.strategy == PadStrategy::read_twice) {
    const std::size_t copied = std::min(missing, p);
    const std::size_t pads = missing - copied;
    out.tokens.assign(pads, cfg.pad_token);
    out.mask.assign(pads, 0);
    out.tokens.insert(out.tokens.end(), tokens.end() - static_cast<std::ptrdiff_t>(copied),
                      tokens.end());
    out.mask.insert(out.mask.end(), copied, 1);
  } else {
    out.tokens.assign(missing, cfg.pad_token);
    out.mask.assign(missing, 0);
  }
  out.tokens.insert(out.tokens.end(), tokens.begin(), tokens.end());
  out.mask.insert(out.mask.end(), p, 1);
  return out;
}

IterativeResult iterative_decode(const std::function<int(const std::vector<int>&)>& next_token,
                                 const std::vector<int>& prefill, std::size_t n_tokens) {
  if (n_tokens == 0) throw std::invalid_argument("iterative_decode: n_tokens must be >= 1");
  IterativeResult out;
  std::vector<int> seq = prefill;
  for (std::size_t t = 0; t < n_tokens; ++t) {
    out.parallel_tokens += seq.size();
    const int tok = next_token(seq);
    out.generated.push_back(tok);
    seq.push_back(tok);
  }
  return out;
}

FlopCounts flops_pla(const FlopParams& p) {
  if (p.B == 0 || p.N == 0 || p.H == 0 || p.d == 0 || p.D == 0) {
    throw std::invalid_argument("flops_pla: B, N, H, d and D must be positive");
  }
  if (p.M > p.N) throw std::invalid_argument("flops_pla: encoder length exceeds N");
  return {p.B * p.M * p.H * p.D, 3 * p.B * p.M * p.H * p.d * p.D};
}

#define JRT_INSTANTIATE_PLA(T)                                                              \
  template Tensor<T> pla_parallel(const PLAInputs<T>&, const FeatureMap&, const PLAOptions&); \
  template LAState<T> pla_encoder_state(const PLAInputs<T>&, const FeatureMap&,             \
                                        const PLAOptions&);                                 \
  template LAState<T> pla_init_state(const PLAInputs<T>&, const FeatureMap&);               \
  template Prefill<T> two_pass_prefill(const PLAInputs<T>&, const FeatureMap&,              \
                                       const PLAOptions&);

JRT_INSTANTIATE_PLA(float)
JRT_INSTANTIATE_PLA(double)

#undef JRT_INSTANTIATE_PLA

}  // namespace jrt
