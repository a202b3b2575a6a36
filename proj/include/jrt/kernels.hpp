#pragma once

// Raw-pointer compute kernels. Every kernel has a serial reference in
// `kernels::serial` and an OpenMP variant in `kernels::omp` with the same
// signature. The OpenMP variants only split work across independent rows,
// columns or heads, so each output element is accumulated in the same order
// as the serial reference and results are bitwise identical.

#include <cstddef>

namespace jrt {

enum class Exec { serial, parallel };

namespace kernels {

// Single-head linear attention scan. Features and values are addressed with
// leading dimensions so a head can be a column slice of a wider matrix.
template <typename T>
struct ScanArgs {
  const T* phi_q = nullptr;  // n x D, stride phi_ld
  const T* phi_k = nullptr;  // n x D, stride phi_ld
  const T* v = nullptr;      // n x d, stride v_ld
  T* y = nullptr;            // n x d, stride y_ld (may be null: state only)
  T* s = nullptr;            // D x d running KV-state, updated in place
  T* z = nullptr;            // D running K-state, updated in place
  std::size_t n = 0, D = 0, d = 0;
  std::size_t phi_ld = 0, v_ld = 0, y_ld = 0;
  T denom_eps = T{0};
};

namespace serial {

// c (m x n) = a (m x k) * b (k x n). Each c[i][j] accumulates over k in order.
template <typename T>
void matmul(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n);

// out[i][:] = sum_{j <= i} x[j][:]
template <typename T>
void cumsum_rows(const T* x, T* out, std::size_t n, std::size_t d);

// Per head: [1, x, vec(x x^T) / sqrt(2)], so <phi(a), phi(b)> = 1 + s + s^2/2.
// x is rows x (heads*f); out is rows x (heads*(1+f+f*f)).
template <typename T>
void taylor2_rows(const T* x, T* out, std::size_t rows, std::size_t heads, std::size_t f);

// Causal scan: for each row, fold phi_k (x) v into (s, z), then emit
// y = phi_q s / (phi_q z + eps). Returns the index of the first row whose
// denominator is zero, or n when all are non-zero.
template <typename T>
std::size_t causal_scan(const ScanArgs<T>& args);

}  // namespace serial

namespace omp {

template <typename T>
void matmul(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n);
template <typename T>
void cumsum_rows(const T* x, T* out, std::size_t n, std::size_t d);
template <typename T>
void taylor2_rows(const T* x, T* out, std::size_t rows, std::size_t heads, std::size_t f);
// Splits the value columns across threads; denominators are computed once.
template <typename T>
std::size_t causal_scan(const ScanArgs<T>& args);

}  // namespace omp

template <typename T>
void matmul(Exec exec, const T* a, const T* b, T* c, std::size_t m, std::size_t k,
            std::size_t n) {
  exec == Exec::parallel ? omp::matmul(a, b, c, m, k, n) : serial::matmul(a, b, c, m, k, n);
}
template <typename T>
void cumsum_rows(Exec exec, const T* x, T* out, std::size_t n, std::size_t d) {
  exec == Exec::parallel ? omp::cumsum_rows(x, out, n, d) : serial::cumsum_rows(x, out, n, d);
}
template <typename T>
void taylor2_rows(Exec exec, const T* x, T* out, std::size_t rows, std::size_t heads,
                  std::size_t f) {
  exec == Exec::parallel ? omp::taylor2_rows(x, out, rows, heads, f)
                         : serial::taylor2_rows(x, out, rows, heads, f);
}
template <typename T>
std::size_t causal_scan(Exec exec, const ScanArgs<T>& args) {
  return exec == Exec::parallel ? omp::causal_scan(args) : serial::causal_scan(args);
}

constexpr std::size_t taylor2_dim(std::size_t f) { return 1 + f + f * f; }

}  // namespace kernels
}  // namespace jrt
