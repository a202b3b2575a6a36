#pragma once

// Kernel feature maps. Vector maps (taylor2, identity) lift real vectors and
// feed linear attention. IP maps lift elements of a universe [c] so that
// distinct elements are nearly orthogonal and each element has unit norm.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "jrt/tensor.hpp"

namespace jrt {

enum class FeatureKind { taylor2, identity, ip_data_dependent, ip_randomized, ip_exponential };

const char* to_string(FeatureKind kind);

class FeatureMap {
 public:
  static FeatureMap taylor2(std::size_t input_dim);
  static FeatureMap identity(std::size_t input_dim);
  // Roster elements get one-hot slots; everything else gets its binary code.
  static FeatureMap ip_data_dependent(std::vector<std::size_t> roster, std::size_t universe);
  // Independent uniform {-1, +1} / sqrt(f) vector per element, fixed by seed.
  static FeatureMap ip_randomized(std::size_t universe, std::size_t feature_dim,
                                  std::uint64_t seed);
  // Implicit map with <phi(x), phi(y)> = exp(<x, y> - L) on random +-1 codes of
  // length L, grown until (1 - gamma) L > ln(100 c) where gamma L bounds the
  // cross inner products. Only kernel() is available.
  static FeatureMap ip_exponential(std::size_t universe, std::uint64_t seed);

  FeatureKind kind() const { return kind_; }
  bool is_vector_map() const {
    return kind_ == FeatureKind::taylor2 || kind_ == FeatureKind::identity;
  }
  bool has_explicit_features() const { return kind_ != FeatureKind::ip_exponential; }
  std::size_t input_dim() const { return input_dim_; }
  std::size_t feature_dim() const { return feature_dim_; }
  std::size_t universe() const { return universe_; }
  std::size_t code_length() const { return code_length_; }
  // Guard added to linear-attention denominators: none is needed for taylor2.
  double default_denom_eps() const { return kind_ == FeatureKind::taylor2 ? 0.0 : 1e-6; }

  // Vector maps: lift every row of x (rows x input_dim).
  template <typename T>
  Tensor<T> apply_rows(const Tensor<T>& x) const;
  template <typename T>
  std::vector<T> apply(std::span<const T> x) const;

  // IP maps with explicit features: the feature vector of one element.
  std::vector<double> embed(std::size_t elem) const;
  // IP maps: <phi(x), phi(y)>.
  double kernel(std::size_t x, std::size_t y) const;

  const std::vector<std::size_t>& roster() const { return roster_; }
  bool in_roster(std::size_t elem) const;

 private:
  FeatureMap() = default;
  void check_elem(std::size_t elem) const;
  const std::vector<int>& code(std::size_t elem) const;

  FeatureKind kind_ = FeatureKind::identity;
  std::size_t input_dim_ = 0, feature_dim_ = 0, universe_ = 0;
  std::vector<std::size_t> roster_;
  std::vector<std::size_t> roster_slot_;  // universe-sized; npos when absent
  std::size_t binary_width_ = 0;
  std::uint64_t seed_ = 0;
  std::size_t code_length_ = 0;
  std::vector<std::vector<int>> codes_;
};

// Largest |<phi(x), phi(y)>| over distinct element pairs. Throws with fewer than two.
double measure_epsilon(const FeatureMap& map, std::span<const std::size_t> elems);
// Largest off-diagonal cosine between lifted vectors, for vector maps.
double measure_epsilon(const FeatureMap& map, const std::vector<std::vector<double>>& inputs);

// Feature dimension that gives randomized IP maps tolerance about 1/(3k) over c elements.
std::size_t randomized_feature_dim(std::size_t roster_size, std::size_t universe);

}  // namespace jrt
