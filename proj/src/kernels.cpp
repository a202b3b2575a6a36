#include "jrt/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace jrt::kernels {
namespace {

template <typename T>
constexpr T kInvSqrt2 = T(0.70710678118654752440084436210484903928L);

template <typename T>
bool bad_denominator(T raw, T eps) {
  return raw + eps == T{0} || std::abs(raw) < eps || !std::isfinite(raw);
}

constexpr std::size_t kRowBlock = 4;

// Rows [i0, i0 + rows) of c, rows <= kRowBlock. Each b row is loaded once per
// block; every c[i][j] still accumulates over p in order, as in a plain loop.
template <typename T>
void matmul_rows(const T* a, const T* b, T* c, std::size_t i0, std::size_t rows, std::size_t k,
                 std::size_t n) {
  T* crow[kRowBlock];
  const T* arow[kRowBlock];
  for (std::size_t r = 0; r < rows; ++r) {
    crow[r] = c + (i0 + r) * n;
    arow[r] = a + (i0 + r) * k;
    for (std::size_t j = 0; j < n; ++j) crow[r][j] = T{0};
  }
  if (rows == kRowBlock) {
    for (std::size_t p = 0; p < k; ++p) {
      const T a0 = arow[0][p], a1 = arow[1][p], a2 = arow[2][p], a3 = arow[3][p];
      const T* brow = b + p * n;
      T* c0 = crow[0];
      T* c1 = crow[1];
      T* c2 = crow[2];
      T* c3 = crow[3];
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) {
        const T bj = brow[j];
        c0[j] += a0 * bj;
        c1[j] += a1 * bj;
        c2[j] += a2 * bj;
        c3[j] += a3 * bj;
      }
    }
    return;
  }
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = arow[r][p];
      const T* brow = b + p * n;
      T* cr = crow[r];
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) cr[j] += aip * brow[j];
    }
  }
}

template <typename T>
void taylor2_row(const T* x, T* out, std::size_t heads, std::size_t f) {
  const std::size_t D = taylor2_dim(f);
  for (std::size_t h = 0; h < heads; ++h) {
    const T* xh = x + h * f;
    T* oh = out + h * D;
    oh[0] = T{1};
    for (std::size_t a = 0; a < f; ++a) oh[1 + a] = xh[a];
    T* second = oh + 1 + f;
    for (std::size_t a = 0; a < f; ++a) {
      const T xa = xh[a] * kInvSqrt2<T>;
      for (std::size_t b = 0; b < f; ++b) second[a * f + b] = xa * xh[b];
    }
  }
}

}  // namespace

namespace serial {

template <typename T>
void matmul(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; i += kRowBlock)
    matmul_rows(a, b, c, i, std::min(kRowBlock, m - i), k, n);
}

template <typename T>
void cumsum_rows(const T* x, T* out, std::size_t n, std::size_t d) {
  if (n == 0) return;
  for (std::size_t j = 0; j < d; ++j) out[j] = x[j];
  for (std::size_t i = 1; i < n; ++i) {
    const T* prev = out + (i - 1) * d;
    const T* xi = x + i * d;
    T* oi = out + i * d;
    for (std::size_t j = 0; j < d; ++j) oi[j] = prev[j] + xi[j];
  }
}

template <typename T>
void taylor2_rows(const T* x, T* out, std::size_t rows, std::size_t heads, std::size_t f) {
  const std::size_t D = taylor2_dim(f);
  for (std::size_t r = 0; r < rows; ++r) taylor2_row(x + r * heads * f, out + r * heads * D, heads, f);
}

template <typename T>
std::size_t causal_scan(const ScanArgs<T>& args) {
  const std::size_t D = args.D, d = args.d;
  std::size_t first_bad = args.n;
  std::vector<T> acc(d);
  for (std::size_t i = 0; i < args.n; ++i) {
    const T* pk = args.phi_k + i * args.phi_ld;
    const T* vi = args.v + i * args.v_ld;
    for (std::size_t a = 0; a < D; ++a) {
      const T ka = pk[a];
      args.z[a] += ka;
      T* srow = args.s + a * d;
      for (std::size_t j = 0; j < d; ++j) srow[j] += ka * vi[j];
    }
    if (args.y == nullptr) continue;
    const T* pq = args.phi_q + i * args.phi_ld;
    T raw = T{0};
    for (std::size_t a = 0; a < D; ++a) raw += pq[a] * args.z[a];
    T* yi = args.y + i * args.y_ld;
    if (bad_denominator(raw, args.denom_eps)) {
      if (first_bad == args.n) first_bad = i;
      for (std::size_t j = 0; j < d; ++j) yi[j] = T{0};
      continue;
    }
    const T den = raw + args.denom_eps;
    for (std::size_t j = 0; j < d; ++j) acc[j] = T{0};
    for (std::size_t a = 0; a < D; ++a) {
      const T qa = pq[a];
      const T* srow = args.s + a * d;
      for (std::size_t j = 0; j < d; ++j) acc[j] += qa * srow[j];
    }
    for (std::size_t j = 0; j < d; ++j) yi[j] = acc[j] / den;
  }
  return first_bad;
}

}  // namespace serial

namespace omp {

template <typename T>
void matmul(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  const std::size_t blocks = (m + kRowBlock - 1) / kRowBlock;
#pragma omp parallel for schedule(static)
  for (std::size_t blk = 0; blk < blocks; ++blk) {
    const std::size_t i = blk * kRowBlock;
    matmul_rows(a, b, c, i, std::min(kRowBlock, m - i), k, n);
  }
}

template <typename T>
void cumsum_rows(const T* x, T* out, std::size_t n, std::size_t d) {
  if (n == 0) return;
#pragma omp parallel for schedule(static)
  for (std::size_t j = 0; j < d; ++j) {
    T run = x[j];
    out[j] = run;
    for (std::size_t i = 1; i < n; ++i) {
      run = run + x[i * d + j];
      out[i * d + j] = run;
    }
  }
}

template <typename T>
void taylor2_rows(const T* x, T* out, std::size_t rows, std::size_t heads, std::size_t f) {
  const std::size_t D = taylor2_dim(f);
#pragma omp parallel for schedule(static)
  for (std::size_t r = 0; r < rows; ++r) taylor2_row(x + r * heads * f, out + r * heads * D, heads, f);
}

template <typename T>
std::size_t causal_scan(const ScanArgs<T>& args) {
  const std::size_t D = args.D, d = args.d, n = args.n;
  // Denominators depend only on (phi_q, phi_k); fold z serially first.
  std::vector<T> den(n, T{0});
  std::vector<unsigned char> bad(n, 0);
  std::size_t first_bad = n;
  for (std::size_t i = 0; i < n; ++i) {
    const T* pk = args.phi_k + i * args.phi_ld;
    for (std::size_t a = 0; a < D; ++a) args.z[a] += pk[a];
    if (args.y == nullptr) continue;
    const T* pq = args.phi_q + i * args.phi_ld;
    T raw = T{0};
    for (std::size_t a = 0; a < D; ++a) raw += pq[a] * args.z[a];
    if (bad_denominator(raw, args.denom_eps)) {
      bad[i] = 1;
      if (first_bad == n) first_bad = i;
    }
    den[i] = raw + args.denom_eps;
  }
#pragma omp parallel for schedule(static)
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      const T* pk = args.phi_k + i * args.phi_ld;
      const T vij = args.v[i * args.v_ld + j];
      for (std::size_t a = 0; a < D; ++a) args.s[a * d + j] += pk[a] * vij;
      if (args.y == nullptr) continue;
      T& out = args.y[i * args.y_ld + j];
      if (bad[i]) {
        out = T{0};
        continue;
      }
      const T* pq = args.phi_q + i * args.phi_ld;
      T acc = T{0};
      for (std::size_t a = 0; a < D; ++a) acc += pq[a] * args.s[a * d + j];
      out = acc / den[i];
    }
  }
  return first_bad;
}

}  // namespace omp

#define JRT_INSTANTIATE_KERNELS(T, NS)                                                    \
  template void NS::matmul<T>(const T*, const T*, T*, std::size_t, std::size_t, std::size_t); \
  template void NS::cumsum_rows<T>(const T*, T*, std::size_t, std::size_t);                   \
  template void NS::taylor2_rows<T>(const T*, T*, std::size_t, std::size_t, std::size_t);    \
  template std::size_t NS::causal_scan<T>(const ScanArgs<T>&);

JRT_INSTANTIATE_KERNELS(float, serial)
JRT_INSTANTIATE_KERNELS(double, serial)
JRT_INSTANTIATE_KERNELS(float, omp)
JRT_INSTANTIATE_KERNELS(double, omp)

#undef JRT_INSTANTIATE_KERNELS

}  // namespace jrt::kernels
