#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "jrt/kernels.hpp"

namespace jrt {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when an operation would leave NaN/Inf in a tensor.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dense row-major array of rank 0..3. Rank 0 is a scalar holding one value.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, T fill = T{0});
  Tensor(std::vector<std::size_t> shape, std::vector<T> data);

  static Tensor scalar(T value) { return Tensor({}, std::vector<T>{value}); }
  static Tensor vector(std::vector<T> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<T>> rows);
  static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }
  static Tensor identity(std::size_t n);

  std::size_t rank() const { return shape_.size(); }
  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Matrix view; valid for rank 2.
  std::size_t rows() const { return shape_.at(0); }
  std::size_t cols() const { return shape_.at(1); }

  T& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T item() const;

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::span<T> row(std::size_t i) { return {data_.data() + i * shape_.at(1), shape_[1]}; }
  std::span<const T> row(std::size_t i) const {
    return {data_.data() + i * shape_.at(1), shape_[1]};
  }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  // Throws NumericError naming `what` if any entry is NaN or infinite.
  const Tensor& require_finite(const char* what) const;

  Tensor reshaped(std::vector<std::size_t> shape) const;
  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

 private:
  std::vector<std::size_t> shape_{0};
  std::vector<T> data_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

// ---- elementary kernels ----------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, Exec exec = Exec::serial);
template <typename T>
Tensor<T> transpose(const Tensor<T>& a);
template <typename T>
Tensor<T> cumsum_rows(const Tensor<T>& x, Exec exec = Exec::serial);
template <typename T>
Tensor<T> column_sums(const Tensor<T>& x);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);

template <typename T>
T gelu(T x);
template <typename T>
T gelu_derivative(T x);
template <typename T>
T silu(T x);
template <typename T>
T silu_derivative(T x);
template <typename T>
Tensor<T> gelu(const Tensor<T>& x);
template <typename T>
Tensor<T> silu(const Tensor<T>& x);

// Label value that excludes a row from a cross-entropy mean.
inline constexpr int kIgnoreLabel = -1;

template <typename T>
struct CrossEntropy {
  T loss;               // mean over counted rows (0 when none counted)
  Tensor<T> grad;       // d loss / d logits
  std::size_t counted;  // rows whose label is not kIgnoreLabel
};

// Softmax cross-entropy of logits (rows x classes) against one label per row.
template <typename T>
CrossEntropy<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels);

template <typename T>
std::vector<std::size_t> argmax_rows(const Tensor<T>& x);

// max_i |a_i - b_i| / max(|b_i|, floor); floor keeps near-zero entries comparable.
template <typename T>
double max_rel_error(const Tensor<T>& a, const Tensor<T>& b, double floor = 1e-6);
template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b);

}  // namespace jrt
