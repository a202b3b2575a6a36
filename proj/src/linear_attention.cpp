#include "jrt/linear_attention.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace jrt {
namespace {

template <typename T>
void check_qkv(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, const FeatureMap& phi) {
  if (q.rank() != 2 || !q.same_shape(k) || v.rank() != 2 || v.rows() != q.rows()) {
    throw ShapeError("linear attention: q " + shape_string(q.shape()) + " k " +
                     shape_string(k.shape()) + " v " + shape_string(v.shape()));
  }
  if (q.cols() != phi.input_dim()) {
    throw ShapeError("linear attention: feature map expects width " +
                     std::to_string(phi.input_dim()) + ", got " + std::to_string(q.cols()));
  }
}

template <typename T>
T resolve_eps(const FeatureMap& phi, std::optional<double> eps) {
  const double e = eps.value_or(phi.default_denom_eps());
  if (!(e >= 0.0)) throw std::invalid_argument("linear attention: denom_eps must be >= 0");
  return static_cast<T>(e);
}

template <typename T>
bool bad_denominator(T raw, T eps) {
  return raw + eps == T{0} || std::abs(raw) < eps || !std::isfinite(raw);
}

[[noreturn]] void zero_denominator(std::size_t row) {
  throw NumericError("linear attention: zero denominator at row " + std::to_string(row));
}

template <typename T>
Tensor<T> column_slice(const Tensor<T>& x, std::size_t begin, std::size_t width) {
  Tensor<T> out({x.rows(), width});
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < width; ++j) out(i, j) = x(i, begin + j);
  return out;
}

}  // namespace

template <typename T>
Tensor<T> la_parallel(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                      const FeatureMap& phi, const LAOptions& opts) {
  check_qkv(q, k, v, phi);
  const T eps = resolve_eps<T>(phi, opts.denom_eps);
  const std::size_t n = q.rows(), d = v.cols(), D = phi.feature_dim();
  const Tensor<T> pq = phi.apply_rows(q);
  const Tensor<T> pk = phi.apply_rows(k);

  // Row i of kv is vec(phi(k_i)^T v_i); its prefix sums are the KV-states S_i.
  Tensor<T> kv({n, D * d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < D; ++a)
      for (std::size_t c = 0; c < d; ++c) kv(i, a * d + c) = pk(i, a) * v(i, c);

  Tensor<T> S, Z;
  if (opts.causal) {
    S = cumsum_rows(kv, opts.exec);
    Z = cumsum_rows(pk, opts.exec);
  } else {
    const Tensor<T> s_all = column_sums(kv);
    const Tensor<T> z_all = column_sums(pk);
    S = Tensor<T>({n, D * d});
    Z = Tensor<T>({n, D});
    for (std::size_t i = 0; i < n; ++i) {
      std::copy(s_all.data().begin(), s_all.data().end(), S.row(i).begin());
      std::copy(z_all.data().begin(), z_all.data().end(), Z.row(i).begin());
    }
  }

  Tensor<T> y({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    T raw = T{0};
    for (std::size_t a = 0; a < D; ++a) raw += pq(i, a) * Z(i, a);
    if (bad_denominator(raw, eps)) zero_denominator(i);
    const T den = raw + eps;
    for (std::size_t a = 0; a < D; ++a) {
      const T qa = pq(i, a);
      for (std::size_t c = 0; c < d; ++c) y(i, c) += qa * S(i, a * d + c);
    }
    for (std::size_t c = 0; c < d; ++c) y(i, c) /= den;
  }
  return y;
}

template <typename T>
Prefill<T> la_prefill(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                      const FeatureMap& phi, const LAOptions& opts) {
  check_qkv(q, k, v, phi);
  const std::size_t n = q.rows(), d = v.cols(), D = phi.feature_dim();
  const Tensor<T> pq = phi.apply_rows(q);
  const Tensor<T> pk = phi.apply_rows(k);
  Prefill<T> out{Tensor<T>({n, d}), LAState<T>::empty(D, d)};
  kernels::ScanArgs<T> args;
  args.phi_q = pq.data().data();
  args.phi_k = pk.data().data();
  args.v = v.data().data();
  args.y = out.y.data().data();
  args.s = out.state.s.data().data();
  args.z = out.state.z.data().data();
  args.n = n;
  args.D = D;
  args.d = d;
  args.phi_ld = D;
  args.v_ld = d;
  args.y_ld = d;
  args.denom_eps = resolve_eps<T>(phi, opts.denom_eps);
  const std::size_t bad = kernels::causal_scan(opts.exec, args);
  if (bad < n) zero_denominator(bad);
  out.state.position = n;
  return out;
}

template <typename T>
std::vector<T> la_decode_step(LAState<T>& state, std::span<const T> q, std::span<const T> k,
                              std::span<const T> v, const FeatureMap& phi,
                              std::optional<double> denom_eps) {
  const std::size_t D = state.feature_dim(), d = state.head_dim();
  if (q.size() != phi.input_dim() || k.size() != phi.input_dim() || v.size() != d ||
      phi.feature_dim() != D) {
    throw ShapeError("la_decode_step: token shapes do not match the state");
  }
  const T eps = resolve_eps<T>(phi, denom_eps);
  const std::vector<T> pq = phi.apply(q);
  const std::vector<T> pk = phi.apply(k);
  for (std::size_t a = 0; a < D; ++a) {
    state.z[a] += pk[a];
    for (std::size_t c = 0; c < d; ++c) state.s(a, c) += pk[a] * v[c];
  }
  T raw = T{0};
  for (std::size_t a = 0; a < D; ++a) raw += pq[a] * state.z[a];
  if (bad_denominator(raw, eps)) zero_denominator(state.position);
  const T den = raw + eps;
  std::vector<T> y(d, T{0});
  for (std::size_t a = 0; a < D; ++a)
    for (std::size_t c = 0; c < d; ++c) y[c] += pq[a] * state.s(a, c);
  for (T& x : y) x /= den;
  ++state.position;
  return y;
}

template <typename T>
Tensor<T> la_recurrent(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                       const FeatureMap& phi, std::optional<double> denom_eps) {
  check_qkv(q, k, v, phi);
  auto state = LAState<T>::empty(phi.feature_dim(), v.cols());
  Tensor<T> y({q.rows(), v.cols()});
  for (std::size_t i = 0; i < q.rows(); ++i) {
    const auto yi = la_decode_step<T>(state, q.row(i), k.row(i), v.row(i), phi, denom_eps);
    std::copy(yi.begin(), yi.end(), y.row(i).begin());
  }
  return y;
}

template <typename T>
Tensor<T> la_parallel_heads(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                            std::size_t heads, const FeatureMap& phi, const LAOptions& opts) {
  if (heads == 0 || q.rank() != 2 || v.rank() != 2 || q.cols() % heads != 0 ||
      v.cols() % heads != 0) {
    throw ShapeError("la_parallel_heads: columns do not split into " + std::to_string(heads) +
                     " heads");
  }
  const std::size_t dq = q.cols() / heads, dv = v.cols() / heads;
  Tensor<T> y({q.rows(), v.cols()});
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor<T> yh = la_parallel(column_slice(q, h * dq, dq), column_slice(k, h * dq, dq),
                                     column_slice(v, h * dv, dv), phi, opts);
    for (std::size_t i = 0; i < y.rows(); ++i)
      for (std::size_t c = 0; c < dv; ++c) y(i, h * dv + c) = yh(i, c);
  }
  return y;
}

FlopCounts flops_causal_la(const FlopParams& p) {
  if (p.B == 0 || p.N == 0 || p.H == 0 || p.d == 0 || p.D == 0) {
    throw std::invalid_argument("flops_causal_la: B, N, H, d and D must be positive");
  }
  return {2 * p.B * p.N * p.H * p.D, 4 * p.B * p.N * p.H * p.d * p.D};
}

#define JRT_INSTANTIATE_LA(T)                                                                  \
  template Tensor<T> la_parallel(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,         \
                                 const FeatureMap&, const LAOptions&);                         \
  template Prefill<T> la_prefill(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,         \
                                 const FeatureMap&, const LAOptions&);                         \
  template std::vector<T> la_decode_step(LAState<T>&, std::span<const T>, std::span<const T>,  \
                                         std::span<const T>, const FeatureMap&,                \
                                         std::optional<double>);                               \
  template Tensor<T> la_recurrent(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,        \
                                  const FeatureMap&, std::optional<double>);                   \
  template Tensor<T> la_parallel_heads(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,   \
                                       std::size_t, const FeatureMap&, const LAOptions&);

JRT_INSTANTIATE_LA(float)
JRT_INSTANTIATE_LA(double)

#undef JRT_INSTANTIATE_LA

}  // namespace jrt
