#include "jrt/feature_maps.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace jrt {
namespace {

constexpr std::size_t kAbsent = std::numeric_limits<std::size_t>::max();

std::size_t ceil_log2(std::size_t c) {
  std::size_t bits = 0;
  while ((std::size_t{1} << bits) < c) ++bits;
  return bits;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

std::mt19937_64 element_stream(std::uint64_t seed, std::size_t elem) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(elem), static_cast<std::uint32_t>(elem >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace

const char* to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::taylor2: return "taylor2";
    case FeatureKind::identity: return "identity";
    case FeatureKind::ip_data_dependent: return "ip_data_dependent";
    case FeatureKind::ip_randomized: return "ip_randomized";
    case FeatureKind::ip_exponential: return "ip_exponential";
  }
  return "unknown";
}

FeatureMap FeatureMap::taylor2(std::size_t input_dim) {
  if (input_dim == 0) throw std::invalid_argument("taylor2: input dimension must be positive");
  FeatureMap m;
  m.kind_ = FeatureKind::taylor2;
  m.input_dim_ = input_dim;
  m.feature_dim_ = kernels::taylor2_dim(input_dim);
  return m;
}

FeatureMap FeatureMap::identity(std::size_t input_dim) {
  if (input_dim == 0) throw std::invalid_argument("identity: input dimension must be positive");
  FeatureMap m;
  m.input_dim_ = input_dim;
  m.feature_dim_ = input_dim;
  return m;
}

FeatureMap FeatureMap::ip_data_dependent(std::vector<std::size_t> roster, std::size_t universe) {
  FeatureMap m;
  m.kind_ = FeatureKind::ip_data_dependent;
  m.universe_ = universe;
  m.roster_slot_.assign(universe, kAbsent);
  for (std::size_t i = 0; i < roster.size(); ++i) {
    m.check_elem(roster[i]);
    if (m.roster_slot_[roster[i]] != kAbsent) {
      throw std::invalid_argument("ip_data_dependent: duplicate roster element " +
                                  std::to_string(roster[i]));
    }
    m.roster_slot_[roster[i]] = i;
  }
  m.roster_ = std::move(roster);
  m.binary_width_ = ceil_log2(universe);
  m.feature_dim_ = m.roster_.size() + m.binary_width_;
  return m;
}

FeatureMap FeatureMap::ip_randomized(std::size_t universe, std::size_t feature_dim,
                                     std::uint64_t seed) {
  if (feature_dim == 0) throw std::invalid_argument("ip_randomized: feature dim must be positive");
  FeatureMap m;
  m.kind_ = FeatureKind::ip_randomized;
  m.universe_ = universe;
  m.feature_dim_ = feature_dim;
  m.seed_ = seed;
  return m;
}

FeatureMap FeatureMap::ip_exponential(std::size_t universe, std::uint64_t seed) {
  if (universe == 0) throw std::invalid_argument("ip_exponential: empty universe");
  FeatureMap m;
  m.kind_ = FeatureKind::ip_exponential;
  m.universe_ = universe;
  m.seed_ = seed;
  const double target = std::log(100.0 * static_cast<double>(universe));
  std::size_t length =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(4.0 * std::log(universe))));
  std::mt19937_64 gen(seed);
  for (;; ++length) {
    m.codes_.assign(universe, std::vector<int>(length));
    for (auto& c : m.codes_)
      for (int& bit : c) bit = (gen() & 1U) ? 1 : -1;
    int worst = -static_cast<int>(length);
    for (std::size_t x = 0; x < universe; ++x)
      for (std::size_t y = x + 1; y < universe; ++y) {
        int ip = 0;
        for (std::size_t i = 0; i < length; ++i) ip += m.codes_[x][i] * m.codes_[y][i];
        worst = std::max(worst, ip);
      }
    if (universe == 1 || static_cast<double>(static_cast<int>(length) - worst) > target) break;
  }
  m.code_length_ = length;
  m.input_dim_ = length;
  return m;
}

void FeatureMap::check_elem(std::size_t elem) const {
  if (elem >= universe_) {
    throw std::out_of_range("element " + std::to_string(elem) + " outside universe of " +
                            std::to_string(universe_));
  }
}

bool FeatureMap::in_roster(std::size_t elem) const {
  return elem < roster_slot_.size() && roster_slot_[elem] != kAbsent;
}

const std::vector<int>& FeatureMap::code(std::size_t elem) const {
  check_elem(elem);
  return codes_[elem];
}

template <typename T>
Tensor<T> FeatureMap::apply_rows(const Tensor<T>& x) const {
  if (!is_vector_map()) {
    throw std::invalid_argument(std::string("apply_rows: ") + jrt::to_string(kind_) +
                                " lifts elements, not vectors");
  }
  if (x.rank() != 2 || x.cols() != input_dim_) {
    throw ShapeError("feature map expects rows of " + std::to_string(input_dim_) + ", got " +
                     shape_string(x.shape()));
  }
  if (kind_ == FeatureKind::identity) return x;
  Tensor<T> out({x.rows(), feature_dim_});
  kernels::serial::taylor2_rows(x.data().data(), out.data().data(), x.rows(), 1, input_dim_);
  return out;
}

template <typename T>
std::vector<T> FeatureMap::apply(std::span<const T> x) const {
  Tensor<T> row({1, x.size()}, std::vector<T>(x.begin(), x.end()));
  return apply_rows(row).storage();
}

std::vector<double> FeatureMap::embed(std::size_t elem) const {
  check_elem(elem);
  std::vector<double> out(feature_dim_, 0.0);
  switch (kind_) {
    case FeatureKind::ip_data_dependent:
      if (in_roster(elem)) {
        out[roster_slot_[elem]] = 1.0;
      } else {
        for (std::size_t b = 0; b < binary_width_; ++b)
          out[roster_.size() + b] = static_cast<double>((elem >> (binary_width_ - 1 - b)) & 1U);
      }
      return out;
    case FeatureKind::ip_randomized: {
      auto gen = element_stream(seed_, elem);
      const double mag = 1.0 / std::sqrt(static_cast<double>(feature_dim_));
      std::uint64_t word = 0;
      for (std::size_t i = 0; i < feature_dim_; ++i) {
        if (i % 64 == 0) word = gen();
        out[i] = ((word >> (i % 64)) & 1U) ? mag : -mag;
      }
      return out;
    }
    default:
      throw std::invalid_argument(std::string("embed: no explicit element features for ") +
                                  jrt::to_string(kind_));
  }
}

double FeatureMap::kernel(std::size_t x, std::size_t y) const {
  if (kind_ == FeatureKind::ip_exponential) {
    const auto& cx = code(x);
    const auto& cy = code(y);
    int ip = 0;
    for (std::size_t i = 0; i < code_length_; ++i) ip += cx[i] * cy[i];
    return std::exp(static_cast<double>(ip) - static_cast<double>(code_length_));
  }
  const auto ex = embed(x);
  const auto ey = embed(y);
  return dot(ex, ey);
}

double measure_epsilon(const FeatureMap& map, std::span<const std::size_t> elems) {
  if (elems.size() < 2) throw std::invalid_argument("measure_epsilon: need at least two elements");
  if (map.is_vector_map()) throw std::invalid_argument("measure_epsilon: map lifts vectors");
  double worst = 0.0;
  if (map.has_explicit_features()) {
    std::vector<std::vector<double>> lifted;
    lifted.reserve(elems.size());
    for (std::size_t e : elems) lifted.push_back(map.embed(e));
    for (std::size_t i = 0; i < elems.size(); ++i)
      for (std::size_t j = i + 1; j < elems.size(); ++j)
        if (elems[i] != elems[j]) worst = std::max(worst, std::abs(dot(lifted[i], lifted[j])));
    return worst;
  }
  for (std::size_t i = 0; i < elems.size(); ++i)
    for (std::size_t j = i + 1; j < elems.size(); ++j)
      if (elems[i] != elems[j]) worst = std::max(worst, std::abs(map.kernel(elems[i], elems[j])));
  return worst;
}

double measure_epsilon(const FeatureMap& map, const std::vector<std::vector<double>>& inputs) {
  if (inputs.size() < 2) throw std::invalid_argument("measure_epsilon: need at least two inputs");
  std::vector<std::vector<double>> lifted;
  lifted.reserve(inputs.size());
  for (const auto& x : inputs) lifted.push_back(map.apply<double>(x));
  double worst = 0.0;
  for (std::size_t i = 0; i < lifted.size(); ++i)
    for (std::size_t j = i + 1; j < lifted.size(); ++j) {
      const double norm = std::sqrt(dot(lifted[i], lifted[i]) * dot(lifted[j], lifted[j]));
      worst = std::max(worst, std::abs(dot(lifted[i], lifted[j])) / norm);
    }
  return worst;
}

std::size_t randomized_feature_dim(std::size_t roster_size, std::size_t universe) {
  const double k = static_cast<double>(roster_size);
  return static_cast<std::size_t>(std::ceil(9.0 * k * k * std::log(static_cast<double>(universe))));
}

template Tensor<float> FeatureMap::apply_rows(const Tensor<float>&) const;
template Tensor<double> FeatureMap::apply_rows(const Tensor<double>&) const;
template std::vector<float> FeatureMap::apply(std::span<const float>) const;
template std::vector<double> FeatureMap::apply(std::span<const double>) const;

}  // namespace jrt
