#include "jrt/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace jrt {
namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw ShapeError(message);
}

std::size_t sequence_count(std::size_t rows, std::size_t seq_len, const char* op) {
  if (rows == 0) return 0;
  require(seq_len > 0 && rows % seq_len == 0,
          std::string(op) + ": " + std::to_string(rows) + " rows do not split into sequences of " +
              std::to_string(seq_len));
  return rows / seq_len;
}

template <typename T>
void add_into(Tensor<T>& dst, const Tensor<T>& src, T factor = T{1}) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor * s[i];
}

// dst (k x n) += a^T * b for a (m x k), b (m x n). Four rows of a and b are
// combined per pass so each dst row is loaded and stored once per block.
template <typename T>
void gemm_tn_acc(const T* a, const T* b, T* dst, std::size_t m, std::size_t k, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    const T* a0 = a + i * k;
    const T* b0 = b + i * n;
    const T* b1 = b0 + n;
    const T* b2 = b1 + n;
    const T* b3 = b2 + n;
    for (std::size_t p = 0; p < k; ++p) {
      const T x0 = a0[p], x1 = a0[k + p], x2 = a0[2 * k + p], x3 = a0[3 * k + p];
      T* drow = dst + p * n;
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) drow[j] += (x0 * b0[j] + x1 * b1[j]) + (x2 * b2[j] + x3 * b3[j]);
    }
  }
  for (; i < m; ++i) {
    const T* arow = a + i * k;
    const T* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = arow[p];
      T* drow = dst + p * n;
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) drow[j] += aip * brow[j];
    }
  }
}

template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  T acc = T{0};
#pragma omp simd reduction(+ : acc)
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

// dst (m x k) += a (m x n) * b^T for b (k x n). b is transposed once so the
// inner loop runs along dst rows instead of reducing short dot products.
template <typename T>
void gemm_nt_acc(const T* a, const T* b, T* dst, std::size_t m, std::size_t n, std::size_t k) {
  std::vector<T> bt(n * k);
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * n;
    T* drow = dst + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T aij = arow[j];
      const T* btrow = bt.data() + j * k;
#pragma omp simd
      for (std::size_t p = 0; p < k; ++p) drow[p] += aij * btrow[p];
    }
  }
}

// Strided views of one head of one sequence.
template <typename T>
struct HeadView {
  const T* phi_q;
  const T* phi_k;
  const T* v;
  const T* phi_ke;  // null without encoder
  const T* v_e;
  std::size_t n, encoder_len, D, d, phi_ld, v_ld;
};

template <typename T>
void encoder_state(const HeadView<T>& h, T* s, T* z) {
  if (h.phi_ke == nullptr) return;
  for (std::size_t j = 0; j < h.encoder_len; ++j) {
    const T* pk = h.phi_ke + j * h.phi_ld;
    const T* vj = h.v_e + j * h.v_ld;
    for (std::size_t a = 0; a < h.D; ++a) {
      z[a] += pk[a];
      T* srow = s + a * h.d;
      const T ka = pk[a];
#pragma omp simd
      for (std::size_t c = 0; c < h.d; ++c) srow[c] += ka * vj[c];
    }
  }
}

template <typename T>
void fold(const T* pk, const T* vj, T* s, T* z, std::size_t D, std::size_t d) {
  for (std::size_t a = 0; a < D; ++a) {
    z[a] += pk[a];
    T* srow = s + a * d;
    const T ka = pk[a];
#pragma omp simd
    for (std::size_t c = 0; c < d; ++c) srow[c] += ka * vj[c];
  }
}

template <typename T>
T readout(const T* pq, const T* s, const T* z, T* y, std::size_t D, std::size_t d) {
  const T den = dot(pq, z, D);
  if (!(std::abs(den) > T{0}) || !std::isfinite(den)) {
    throw NumericError("linear attention: zero or non-finite denominator");
  }
  for (std::size_t c = 0; c < d; ++c) y[c] = T{0};
  for (std::size_t a = 0; a < D; ++a) {
    const T qa = pq[a];
    const T* srow = s + a * d;
#pragma omp simd
    for (std::size_t c = 0; c < d; ++c) y[c] += qa * srow[c];
  }
  for (std::size_t c = 0; c < d; ++c) y[c] /= den;
  return den;
}

template <typename T>
void head_forward(const HeadView<T>& h, bool causal, T* y, std::size_t y_ld) {
  std::vector<T> s(h.D * h.d, T{0}), z(h.D, T{0});
  encoder_state(h, s.data(), z.data());
  if (causal) {
    for (std::size_t i = 0; i < h.n; ++i) {
      fold(h.phi_k + i * h.phi_ld, h.v + i * h.v_ld, s.data(), z.data(), h.D, h.d);
      readout(h.phi_q + i * h.phi_ld, s.data(), z.data(), y + i * y_ld, h.D, h.d);
    }
    return;
  }
  for (std::size_t i = 0; i < h.n; ++i)
    fold(h.phi_k + i * h.phi_ld, h.v + i * h.v_ld, s.data(), z.data(), h.D, h.d);
  for (std::size_t i = 0; i < h.n; ++i)
    readout(h.phi_q + i * h.phi_ld, s.data(), z.data(), y + i * y_ld, h.D, h.d);
}

// Gradient outputs for one head; any pointer may be null when not needed.
template <typename T>
struct HeadGrads {
  T* phi_q;
  T* phi_k;
  T* v;
  T* phi_ke;
  T* v_e;
};

template <typename T>
void head_backward(const HeadView<T>& h, bool causal, const T* y, const T* g, std::size_t y_ld,
                   const HeadGrads<T>& out) {
  const std::size_t D = h.D, d = h.d, n = h.n;
  std::vector<T> s(D * d, T{0}), z(D, T{0});
  encoder_state(h, s.data(), z.data());
  if (!causal) {
    for (std::size_t i = 0; i < n; ++i)
      fold(h.phi_k + i * h.phi_ld, h.v + i * h.v_ld, s.data(), z.data(), D, d);
  }
  // dnum_i = g_i / den_i, dden_i = -(g_i . y_i) / den_i
  std::vector<T> dnum(n * d), dden(n);
  for (std::size_t i = 0; i < n; ++i) {
    const T* pq = h.phi_q + i * h.phi_ld;
    if (causal) fold(h.phi_k + i * h.phi_ld, h.v + i * h.v_ld, s.data(), z.data(), D, d);
    const T den = dot(pq, z.data(), D);
    const T* gi = g + i * y_ld;
    const T* yi = y + i * y_ld;
    T* dn = dnum.data() + i * d;
    for (std::size_t c = 0; c < d; ++c) dn[c] = gi[c] / den;
    dden[i] = -dot(gi, yi, d) / den;
    if (out.phi_q != nullptr) {
      T* dq = out.phi_q + i * h.phi_ld;
      for (std::size_t a = 0; a < D; ++a) dq[a] += dot(s.data() + a * d, dn, d) + dden[i] * z[a];
    }
  }
  // Reverse accumulation: R_j = sum_{i>=j} phi_q_i (x) dnum_i (all i when not causal).
  std::vector<T> R(D * d, T{0}), r(D, T{0});
  auto absorb = [&](std::size_t i) {
    const T* pq = h.phi_q + i * h.phi_ld;
    const T* dn = dnum.data() + i * d;
    for (std::size_t a = 0; a < D; ++a) {
      r[a] += dden[i] * pq[a];
      T* Rrow = R.data() + a * d;
      const T qa = pq[a];
#pragma omp simd
      for (std::size_t c = 0; c < d; ++c) Rrow[c] += qa * dn[c];
    }
  };
  auto emit = [&](const T* pk, const T* vj, T* dk, T* dv) {
    if (dk != nullptr) {
      for (std::size_t a = 0; a < D; ++a) dk[a] += dot(R.data() + a * d, vj, d) + r[a];
    }
    if (dv != nullptr) {
      for (std::size_t a = 0; a < D; ++a) {
        const T ka = pk[a];
        const T* Rrow = R.data() + a * d;
#pragma omp simd
        for (std::size_t c = 0; c < d; ++c) dv[c] += ka * Rrow[c];
      }
    }
  };
  if (causal) {
    for (std::size_t j = n; j-- > 0;) {
      absorb(j);
      emit(h.phi_k + j * h.phi_ld, h.v + j * h.v_ld,
           out.phi_k ? out.phi_k + j * h.phi_ld : nullptr, out.v ? out.v + j * h.v_ld : nullptr);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) absorb(i);
    for (std::size_t j = 0; j < n; ++j) {
      emit(h.phi_k + j * h.phi_ld, h.v + j * h.v_ld,
           out.phi_k ? out.phi_k + j * h.phi_ld : nullptr, out.v ? out.v + j * h.v_ld : nullptr);
    }
  }
  if (h.phi_ke == nullptr) return;
  for (std::size_t j = 0; j < h.encoder_len; ++j) {
    emit(h.phi_ke + j * h.phi_ld, h.v_e + j * h.v_ld,
         out.phi_ke ? out.phi_ke + j * h.phi_ld : nullptr,
         out.v_e ? out.v_e + j * h.v_ld : nullptr);
  }
}

}  // namespace

template <typename T>
Var Tape<T>::push(Tensor<T> value, std::vector<std::size_t> inputs,
                  std::function<void(Tape&, std::size_t)> backward) {
  Node node;
  node.value = std::move(value);
  for (std::size_t in : inputs) node.requires_grad = node.requires_grad || nodes_[in].requires_grad;
  node.inputs = std::move(inputs);
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

template <typename T>
Tensor<T>& Tape<T>::accum(std::size_t id) {
  Node& node = nodes_[id];
  if (!node.reached) {
    node.grad = Tensor<T>(node.value.shape());
    node.reached = true;
  }
  return node.grad;
}

template <typename T>
Var Tape<T>::leaf(Tensor<T> value) {
  return push(std::move(value), {}, nullptr);
}

template <typename T>
Var Tape<T>::parameter(Tensor<T> value) {
  Var v = push(std::move(value), {}, nullptr);
  nodes_[v.id].requires_grad = true;
  return v;
}

template <typename T>
Var Tape<T>::matmul(Var a, Var b) {
  Tensor<T> out = jrt::matmul(value(a), value(b));
  return push(std::move(out), {a.id, b.id}, [a, b](Tape& t, std::size_t self) {
    const Tensor<T>& g = t.nodes_[self].grad;
    const Tensor<T>& av = t.value(a);
    const Tensor<T>& bv = t.value(b);
    if (t.needs(a.id)) {
      gemm_nt_acc(g.data().data(), bv.data().data(), t.accum(a.id).data().data(), g.rows(),
                  g.cols(), bv.rows());
    }
    if (t.needs(b.id)) {
      gemm_tn_acc(av.data().data(), g.data().data(), t.accum(b.id).data().data(), av.rows(),
                  av.cols(), g.cols());
    }
  });
}

template <typename T>
Var Tape<T>::add(Var a, Var b) {
  Tensor<T> out = jrt::add(value(a), value(b));
  return push(std::move(out), {a.id, b.id}, [a, b](Tape& t, std::size_t self) {
    const Tensor<T>& g = t.nodes_[self].grad;
    if (t.needs(a.id)) add_into(t.accum(a.id), g);
    if (t.needs(b.id)) add_into(t.accum(b.id), g);
  });
}

template <typename T>
Var Tape<T>::add_bias(Var x, Var bias) {
  const Tensor<T>& xv = value(x);
  const Tensor<T>& bv = value(bias);
  require(xv.rank() == 2 && bv.rank() == 1 && bv.size() == xv.cols(),
          "add_bias: " + shape_string(xv.shape()) + " + " + shape_string(bv.shape()));
  Tensor<T> out = xv;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += bv[j];
  return push(std::move(out), {x.id, bias.id}, [x, bias](Tape& t, std::size_t self) {
    const Tensor<T>& g = t.nodes_[self].grad;
    if (t.needs(x.id)) add_into(t.accum(x.id), g);
    if (t.needs(bias.id)) {
      Tensor<T>& gb = t.accum(bias.id);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) gb[j] += g(i, j);
    }
  });
}

template <typename T>
Var Tape<T>::mul(Var a, Var b) {
  Tensor<T> out = hadamard(value(a), value(b));
  return push(std::move(out), {a.id, b.id}, [a, b](Tape& t, std::size_t self) {
    const Tensor<T>& g = t.nodes_[self].grad;
    if (t.needs(a.id)) {
      Tensor<T>& ga = t.accum(a.id);
      const Tensor<T>& bv = t.value(b);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.needs(b.id)) {
      Tensor<T>& gb = t.accum(b.id);
      const Tensor<T>& av = t.value(a);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

template <typename T>
Var Tape<T>::scale(Var a, T factor) {
  Tensor<T> out = jrt::scale(value(a), factor);
  return push(std::move(out), {a.id}, [a, factor](Tape& t, std::size_t self) {
    add_into(t.accum(a.id), t.nodes_[self].grad, factor);
  });
}

template <typename T>
Var Tape<T>::sum(Var a) {
  T total = T{0};
  for (T x : value(a).data()) total += x;
  return push(Tensor<T>::scalar(total), {a.id}, [a](Tape& t, std::size_t self) {
    const T g = t.nodes_[self].grad[0];
    for (T& x : t.accum(a.id).data()) x += g;
  });
}

template <typename T>
Var Tape<T>::cumsum_rows(Var x, std::size_t seq_len) {
  const Tensor<T>& xv = value(x);
  require(xv.rank() == 2, "cumsum_rows: expected a matrix");
  const std::size_t seqs = sequence_count(xv.rows(), seq_len, "cumsum_rows");
  const std::size_t cols = xv.cols();
  Tensor<T> out(xv.shape());
  for (std::size_t s = 0; s < seqs; ++s) {
    const std::size_t off = s * seq_len * cols;
    kernels::serial::cumsum_rows(xv.data().data() + off, out.data().data() + off, seq_len, cols);
  }
  return push(std::move(out), {x.id}, [x, seq_len, seqs, cols](Tape& t, std::size_t self) {
    const Tensor<T>& g = t.nodes_[self].grad;
    Tensor<T>& gx = t.accum(x.id);
    std::vector<T> run(cols);
    for (std::size_t s = 0; s < seqs; ++s) {
      std::fill(run.begin(), run.end(), T{0});
      for (std::size_t i = seq_len; i-- > 0;) {
        const std::size_t r = s * seq_len + i;
        for (std::size_t c = 0; c < cols; ++c) {
          run[c] += g(r, c);
          gx(r, c) += run[c];
        }
      }
    }
  });
}

template <typename T>
Var Tape<T>::conv1d(Var x, Var filter, std::size_t seq_len, bool causal) {
  const Tensor<T>& xv = value(x);
  const Tensor<T>& fv = value(filter);
  require(xv.rank() == 2 && fv.rank() == 2 && fv.cols() == xv.cols(),
          "conv1d: input " + shape_string(xv.shape()) + " filter " + shape_string(fv.shape()));
  const std::size_t seqs = sequence_count(xv.rows(), seq_len, "conv1d");
  const std::size_t width = fv.rows(), cols = xv.cols();
  // Source row for output t and tap w, or seq_len when the tap falls off a causal edge.
  auto source = [seq_len, causal](std::size_t t, std::size_t w) -> std::size_t {
    if (w <= t) return t - w;
    if (causal) return seq_len;
    return (t + seq_len - (w % seq_len)) % seq_len;
  };
  Tensor<T> out(xv.shape());
  for (std::size_t s = 0; s < seqs; ++s) {
    for (std::size_t t = 0; t < seq_len; ++t) {
      T* orow = out.data().data() + (s * seq_len + t) * cols;
      for (std::size_t w = 0; w < width; ++w) {
        const std::size_t src = source(t, w);
        if (src == seq_len) continue;
        const T* xrow = xv.data().data() + (s * seq_len + src) * cols;
        const T* frow = fv.data().data() + w * cols;
        for (std::size_t c = 0; c < cols; ++c) orow[c] += frow[c] * xrow[c];
      }
    }
  }
  return push(std::move(out), {x.id, filter.id},
              [x, filter, seq_len, seqs, width, cols, source](Tape& t, std::size_t self) {
                const Tensor<T>& g = t.nodes_[self].grad;
                const Tensor<T>& xv = t.value(x);
                const Tensor<T>& fv = t.value(filter);
                T* gx = t.needs(x.id) ? t.accum(x.id).data().data() : nullptr;
                T* gf = t.needs(filter.id) ? t.accum(filter.id).data().data() : nullptr;
                for (std::size_t s = 0; s < seqs; ++s) {
                  for (std::size_t tt = 0; tt < seq_len; ++tt) {
                    const T* grow = g.data().data() + (s * seq_len + tt) * cols;
                    for (std::size_t w = 0; w < width; ++w) {
                      const std::size_t src = source(tt, w);
                      if (src == seq_len) continue;
                      const std::size_t xr = (s * seq_len + src) * cols;
                      if (gx != nullptr) {
                        const T* frow = fv.data().data() + w * cols;
                        for (std::size_t c = 0; c < cols; ++c) gx[xr + c] += frow[c] * grow[c];
                      }
                      if (gf != nullptr) {
                        const T* xrow = xv.data().data() + xr;
                        for (std::size_t c = 0; c < cols; ++c) gf[w * cols + c] += xrow[c] * grow[c];
                      }
                    }
                  }
                }
              });
}

template <typename T>
Var Tape<T>::gelu(Var x) {
  Tensor<T> out = jrt::gelu(value(x));
  return push(std::move(out), {x.id}, [x](Tape& t, std::size_t self) {
    const Tensor<T>& g = t.nodes_[self].grad;
    const Tensor<T>& xv = t.value(x);
    Tensor<T>& gx = t.accum(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * gelu_derivative(xv[i]);
  });
}

template <typename T>
Var Tape<T>::silu(Var x) {
  Tensor<T> out = jrt::silu(value(x));
  return push(std::move(out), {x.id}, [x](Tape& t, std::size_t self) {
    const Tensor<T>& g = t.nodes_[self].grad;
    const Tensor<T>& xv = t.value(x);
    Tensor<T>& gx = t.accum(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * silu_derivative(xv[i]);
  });
}

template <typename T>
Var Tape<T>::embedding(Var table, std::span<const int> ids) {
  const Tensor<T>& tv = value(table);
  require(tv.rank() == 2, "embedding: table must be a matrix");
  const std::size_t cols = tv.cols();
  Tensor<T> out({ids.size(), cols});
  std::vector<std::size_t> rows(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= tv.rows()) {
      throw std::out_of_range("embedding: token id " + std::to_string(ids[i]) +
                              " outside vocabulary of " + std::to_string(tv.rows()));
    }
    rows[i] = static_cast<std::size_t>(ids[i]);
    auto src = tv.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return push(std::move(out), {table.id}, [table, rows = std::move(rows)](Tape& t, std::size_t self) {
    const Tensor<T>& g = t.nodes_[self].grad;
    Tensor<T>& gt = t.accum(table.id);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto gr = g.row(i);
      auto dst = gt.row(rows[i]);
      for (std::size_t c = 0; c < gr.size(); ++c) dst[c] += gr[c];
    }
  });
}

template <typename T>
Var Tape<T>::gather_rows(Var x, std::span<const std::size_t> rows) {
  const Tensor<T>& xv = value(x);
  require(xv.rank() == 2, "gather_rows: expected a matrix");
  Tensor<T> out({rows.size(), xv.cols()});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= xv.rows()) throw std::out_of_range("gather_rows: row index out of range");
    auto src = xv.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return push(std::move(out), {x.id}, [x, idx = std::move(idx)](Tape& t, std::size_t self) {
    const Tensor<T>& g = t.nodes_[self].grad;
    Tensor<T>& gx = t.accum(x.id);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      auto gr = g.row(i);
      auto dst = gx.row(idx[i]);
      for (std::size_t c = 0; c < gr.size(); ++c) dst[c] += gr[c];
    }
  });
}

template <typename T>
Var Tape<T>::taylor2(Var x, std::size_t heads) {
  const Tensor<T>& xv = value(x);
  require(xv.rank() == 2 && heads > 0 && xv.cols() % heads == 0,
          "taylor2: " + std::to_string(xv.cols()) + " columns for " + std::to_string(heads) +
              " heads");
  const std::size_t f = xv.cols() / heads;
  const std::size_t D = kernels::taylor2_dim(f);
  Tensor<T> out({xv.rows(), heads * D});
  kernels::serial::taylor2_rows(xv.data().data(), out.data().data(), xv.rows(), heads, f);
  return push(std::move(out), {x.id}, [x, heads, f, D](Tape& t, std::size_t self) {
    const Tensor<T>& g = t.nodes_[self].grad;
    const Tensor<T>& xv = t.value(x);
    Tensor<T>& gx = t.accum(x.id);
    const T inv_sqrt2 = T(1) / std::sqrt(T(2));
    for (std::size_t r = 0; r < xv.rows(); ++r) {
      for (std::size_t h = 0; h < heads; ++h) {
        const T* xh = xv.data().data() + r * heads * f + h * f;
        const T* gh = g.data().data() + r * heads * D + h * D;
        T* dx = gx.data().data() + r * heads * f + h * f;
        const T* g2 = gh + 1 + f;
        for (std::size_t a = 0; a < f; ++a) {
          T acc = gh[1 + a];
          for (std::size_t b = 0; b < f; ++b) acc += (g2[a * f + b] + g2[b * f + a]) * xh[b] * inv_sqrt2;
          dx[a] += acc;
        }
      }
    }
  });
}

template <typename T>
Var Tape<T>::attention_node(Var phi_q, Var phi_k, Var v, const Var* phi_ke, const Var* v_e,
                            std::size_t heads, std::size_t seq_len, bool causal,
                            std::size_t encoder_len) {
  const Tensor<T>& qv = value(phi_q);
  const Tensor<T>& kv = value(phi_k);
  const Tensor<T>& vv = value(v);
  require(qv.rank() == 2 && qv.same_shape(kv) && vv.rank() == 2 && vv.rows() == qv.rows(),
          "linear_attention: phi_q " + shape_string(qv.shape()) + " phi_k " +
              shape_string(kv.shape()) + " v " + shape_string(vv.shape()));
  require(heads > 0 && qv.cols() % heads == 0 && vv.cols() % heads == 0,
          "linear_attention: columns do not split into " + std::to_string(heads) + " heads");
  const bool has_encoder = phi_ke != nullptr;
  if (has_encoder) {
    require(value(*phi_ke).same_shape(qv) && value(*v_e).same_shape(vv),
            "prefix_linear_attention: encoder shapes differ from decoder shapes");
    require(encoder_len <= seq_len, "prefix_linear_attention: encoder longer than sequence");
  }
  const std::size_t seqs = sequence_count(qv.rows(), seq_len, "linear_attention");
  const std::size_t D = qv.cols() / heads, d = vv.cols() / heads;
  const std::size_t phi_ld = qv.cols(), v_ld = vv.cols();

  const Var ke = has_encoder ? *phi_ke : Var{};
  const Var ve = has_encoder ? *v_e : Var{};
  auto make_view = [=](const Tape& t, std::size_t s, std::size_t h) {
    const std::size_t row = s * seq_len;
    HeadView<T> hv{t.value(phi_q).data().data() + row * phi_ld + h * D,
                   t.value(phi_k).data().data() + row * phi_ld + h * D,
                   t.value(v).data().data() + row * v_ld + h * d,
                   nullptr,
                   nullptr,
                   seq_len,
                   0,
                   D,
                   d,
                   phi_ld,
                   v_ld};
    if (has_encoder) {
      hv.phi_ke = t.value(ke).data().data() + row * phi_ld + h * D;
      hv.v_e = t.value(ve).data().data() + row * v_ld + h * d;
      hv.encoder_len = encoder_len;
    }
    return hv;
  };

  Tensor<T> out({qv.rows(), vv.cols()});
  for (std::size_t s = 0; s < seqs; ++s)
    for (std::size_t h = 0; h < heads; ++h)
      head_forward(make_view(*this, s, h), causal, out.data().data() + s * seq_len * v_ld + h * d,
                   v_ld);

  std::vector<std::size_t> inputs{phi_q.id, phi_k.id, v.id};
  if (has_encoder) {
    inputs.push_back(ke.id);
    inputs.push_back(ve.id);
  }
  return push(std::move(out), std::move(inputs),
              [=](Tape& t, std::size_t self) {
                auto ptr = [&](Var x) -> T* {
                  return t.needs(x.id) ? t.accum(x.id).data().data() : nullptr;
                };
                T* gq = ptr(phi_q);
                T* gk = ptr(phi_k);
                T* gv = ptr(v);
                T* gke = has_encoder ? ptr(ke) : nullptr;
                T* gve = has_encoder ? ptr(ve) : nullptr;
                const T* y = t.nodes_[self].value.data().data();
                const T* g = t.nodes_[self].grad.data().data();
                auto off = [](T* p, std::size_t o) { return p ? p + o : nullptr; };
                for (std::size_t s = 0; s < seqs; ++s) {
                  for (std::size_t h = 0; h < heads; ++h) {
                    const std::size_t po = s * seq_len * phi_ld + h * D;
                    const std::size_t vo = s * seq_len * v_ld + h * d;
                    HeadGrads<T> hg{off(gq, po), off(gk, po), off(gv, vo), off(gke, po),
                                    off(gve, vo)};
                    head_backward(make_view(t, s, h), causal, y + vo, g + vo, v_ld, hg);
                  }
                }
              });
}

template <typename T>
Var Tape<T>::linear_attention(Var phi_q, Var phi_k, Var v, std::size_t heads,
                              std::size_t seq_len, bool causal) {
  return attention_node(phi_q, phi_k, v, nullptr, nullptr, heads, seq_len, causal, 0);
}

template <typename T>
Var Tape<T>::prefix_linear_attention(Var phi_q, Var phi_k, Var v, Var phi_ke, Var v_e,
                                     std::size_t heads, std::size_t seq_len,
                                     std::size_t encoder_len) {
  return attention_node(phi_q, phi_k, v, &phi_ke, &v_e, heads, seq_len, true, encoder_len);
}

template <typename T>
Var Tape<T>::softmax_cross_entropy(Var logits, std::span<const int> labels) {
  CrossEntropy<T> ce = jrt::softmax_cross_entropy(value(logits), labels);
  const T loss = ce.loss;
  return push(Tensor<T>::scalar(loss), {logits.id},
              [logits, grad = std::move(ce.grad)](Tape& t, std::size_t self) {
                add_into(t.accum(logits.id), grad, t.nodes_[self].grad[0]);
              });
}

template <typename T>
bool Tape<T>::has_grad(Var v) const {
  return nodes_.at(v.id).reached;
}

template <typename T>
const Tensor<T>& Tape<T>::grad(Var v) const {
  const Node& node = nodes_.at(v.id);
  if (!node.requires_grad) throw std::invalid_argument("grad: node does not require a gradient");
  if (!node.reached) throw std::invalid_argument("grad: node is not connected to the loss");
  return node.grad;
}

template <typename T>
void Tape<T>::backward(Var loss) {
  Node& root = nodes_.at(loss.id);
  if (root.value.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + shape_string(root.value.shape()));
  }
  for (Node& node : nodes_) {
    node.reached = false;
    node.grad = Tensor<T>();
  }
  if (!root.requires_grad) return;
  accum(loss.id)[0] = T{1};
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (node.reached && node.backward) node.backward(*this, id);
  }
}

template <typename T>
std::vector<Tensor<T>> finite_diff_grad(const std::function<T(std::vector<Tensor<T>>&)>& fn,
                                        std::vector<Tensor<T>>& params, T h) {
  if (!(h > T{0})) throw std::invalid_argument("finite_diff_grad: step must be positive");
  std::vector<Tensor<T>> grads;
  grads.reserve(params.size());
  for (auto& p : params) {
    Tensor<T> g(p.shape());
    for (std::size_t i = 0; i < p.size(); ++i) {
      const T saved = p[i];
      p[i] = saved + h;
      const T up = fn(params);
      p[i] = saved - h;
      const T down = fn(params);
      p[i] = saved;
      g[i] = (up - down) / (T(2) * h);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

template class Tape<float>;
template class Tape<double>;
template std::vector<Tensor<float>> finite_diff_grad(
    const std::function<float(std::vector<Tensor<float>>&)>&, std::vector<Tensor<float>>&, float);
template std::vector<Tensor<double>> finite_diff_grad(
    const std::function<double(std::vector<Tensor<double>>&)>&, std::vector<Tensor<double>>&,
    double);

}  // namespace jrt
