#include "jrt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace jrt {
namespace {

std::size_t element_count(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void require_rank(const std::vector<std::size_t>& shape, std::size_t rank, const char* op) {
  if (shape.size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(shape));
  }
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

template <typename T>
Tensor<T> elementwise(const Tensor<T>& a, const Tensor<T>& b, const char* op, auto fn) {
  require_same_shape(a, b, op);
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = fn(a[i], b[i]);
  return out;
}

template <typename T>
constexpr T kSqrt2OverPi = T(0.79788456080286535587989211986876373695L);

}  // namespace

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(std::vector<std::size_t> shape, T fill)
    : shape_(std::move(shape)), data_(element_count(shape_), fill) {
  if (shape_.size() > 3) throw ShapeError("tensor rank above 3: " + shape_string(shape_));
}

template <typename T>
Tensor<T>::Tensor(std::vector<std::size_t> shape, std::vector<T> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.size() > 3) throw ShapeError("tensor rank above 3: " + shape_string(shape_));
  if (element_count(shape_) != data_.size()) {
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_string(shape_));
  }
}

template <typename T>
Tensor<T> Tensor<T>::vector(std::vector<T> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

template <typename T>
Tensor<T> Tensor<T>::matrix(std::initializer_list<std::initializer_list<T>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<T> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

template <typename T>
Tensor<T> Tensor<T>::identity(std::size_t n) {
  Tensor out({n, n});
  for (std::size_t i = 0; i < n; ++i) out(i, i) = T{1};
  return out;
}

template <typename T>
T Tensor<T>::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape_));
  return data_[0];
}

template <typename T>
bool Tensor<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](T x) { return std::isfinite(x); });
}

template <typename T>
const Tensor<T>& Tensor<T>::require_finite(const char* what) const {
  if (!all_finite()) throw NumericError(std::string("non-finite values produced by ") + what);
  return *this;
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(std::vector<std::size_t> shape) const {
  return Tensor(std::move(shape), data_);
}

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, Exec exec) {
  require_rank(a.shape(), 2, "matmul");
  require_rank(b.shape(), 2, "matmul");
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner extents differ " + shape_string(a.shape()) + " * " +
                     shape_string(b.shape()));
  }
  Tensor<T> c({a.rows(), b.cols()});
  kernels::matmul(exec, a.data().data(), b.data().data(), c.data().data(), a.rows(), a.cols(),
                  b.cols());
  return c;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  require_rank(a.shape(), 2, "transpose");
  Tensor<T> t({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

template <typename T>
Tensor<T> cumsum_rows(const Tensor<T>& x, Exec exec) {
  require_rank(x.shape(), 2, "cumsum_rows");
  Tensor<T> out(x.shape());
  kernels::cumsum_rows(exec, x.data().data(), out.data().data(), x.rows(), x.cols());
  return out;
}

template <typename T>
Tensor<T> column_sums(const Tensor<T>& x) {
  require_rank(x.shape(), 2, "column_sums");
  Tensor<T> out({x.cols()});
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out[j] += x(i, j);
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(a, b, "add", [](T x, T y) { return x + y; });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(a, b, "sub", [](T x, T y) { return x - y; });
}

template <typename T>
Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(a, b, "hadamard", [](T x, T y) { return x * y; });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * factor;
  return out;
}

namespace {

// tanh through one exp call; the library tanh dominated training time.
// Absolute error stays within a few ulps since the result is bounded by 1.
template <typename T>
T tanh_via_exp(T u) {
  const T a = std::abs(u);
  const T t = T(1) - T(2) / (std::exp(T(2) * a) + T(1));
  return std::copysign(t, u);
}

}  // namespace

// tanh approximation of GeLU.
template <typename T>
T gelu(T x) {
  const T inner = kSqrt2OverPi<T> * (x + T(0.044715) * x * x * x);
  return T(0.5) * x * (T(1) + tanh_via_exp(inner));
}

template <typename T>
T gelu_derivative(T x) {
  const T inner = kSqrt2OverPi<T> * (x + T(0.044715) * x * x * x);
  const T th = tanh_via_exp(inner);
  const T dinner = kSqrt2OverPi<T> * (T(1) + T(3 * 0.044715) * x * x);
  return T(0.5) * (T(1) + th) + T(0.5) * x * (T(1) - th * th) * dinner;
}

template <typename T>
T silu(T x) {
  return x / (T(1) + std::exp(-x));
}

template <typename T>
T silu_derivative(T x) {
  const T sig = T(1) / (T(1) + std::exp(-x));
  return sig * (T(1) + x * (T(1) - sig));
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = gelu(x[i]);
  return out;
}

template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = silu(x[i]);
  return out;
}

template <typename T>
CrossEntropy<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  require_rank(logits.shape(), 2, "softmax_cross_entropy");
  if (labels.size() != logits.rows()) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(logits.rows()) + " rows");
  }
  const std::size_t classes = logits.cols();
  CrossEntropy<T> ce{T{0}, Tensor<T>(logits.shape()), 0};
  for (int label : labels) {
    if (label == kIgnoreLabel) continue;
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(label) +
                              " outside [0, " + std::to_string(classes) + ")");
    }
    ++ce.counted;
  }
  if (ce.counted == 0) return ce;
  const T inv = T(1) / static_cast<T>(ce.counted);
  double total = 0.0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    if (labels[r] == kIgnoreLabel) continue;
    auto row = logits.row(r);
    const T mx = *std::max_element(row.begin(), row.end());
    T denom = T{0};
    for (T v : row) denom += std::exp(v - mx);
    const T log_denom = std::log(denom);
    auto g = ce.grad.row(r);
    for (std::size_t c = 0; c < classes; ++c) g[c] = std::exp(row[c] - mx - log_denom) * inv;
    g[static_cast<std::size_t>(labels[r])] -= inv;
    total += static_cast<double>(log_denom + mx - row[static_cast<std::size_t>(labels[r])]);
  }
  ce.loss = static_cast<T>(total / static_cast<double>(ce.counted));
  return ce;
}

template <typename T>
std::vector<std::size_t> argmax_rows(const Tensor<T>& x) {
  require_rank(x.shape(), 2, "argmax_rows");
  std::vector<std::size_t> out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    out[r] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

template <typename T>
double max_rel_error(const Tensor<T>& a, const Tensor<T>& b, double floor) {
  require_same_shape(a, b, "max_rel_error");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
    const double ref = std::max(std::abs(static_cast<double>(b[i])), floor);
    worst = std::max(worst, diff / ref);
  }
  return worst;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "max_abs_diff");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return worst;
}

#define JRT_INSTANTIATE_TENSOR(T)                                                        \
  template class Tensor<T>;                                                              \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&, Exec);                   \
  template Tensor<T> transpose(const Tensor<T>&);                                        \
  template Tensor<T> cumsum_rows(const Tensor<T>&, Exec);                                \
  template Tensor<T> column_sums(const Tensor<T>&);                                      \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> hadamard(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> scale(const Tensor<T>&, T);                                         \
  template T gelu(T);                                                                    \
  template T gelu_derivative(T);                                                         \
  template T silu(T);                                                                    \
  template T silu_derivative(T);                                                         \
  template Tensor<T> gelu(const Tensor<T>&);                                             \
  template Tensor<T> silu(const Tensor<T>&);                                             \
  template CrossEntropy<T> softmax_cross_entropy(const Tensor<T>&, std::span<const int>); \
  template std::vector<std::size_t> argmax_rows(const Tensor<T>&);                       \
  template double max_rel_error(const Tensor<T>&, const Tensor<T>&, double);             \
  template double max_abs_diff(const Tensor<T>&, const Tensor<T>&);

JRT_INSTANTIATE_TENSOR(float)
JRT_INSTANTIATE_TENSOR(double)

#undef JRT_INSTANTIATE_TENSOR

}  // namespace jrt
