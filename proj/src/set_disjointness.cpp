#include "jrt/set_disjointness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <unordered_set>
#include <utility>

namespace jrt {
namespace {

using Tuple = std::pair<std::size_t, std::size_t>;

const std::vector<Tuple> kTrainTuples = {{4, 16},  {16, 4},  {8, 32},   {32, 8},
                                         {64, 16}, {16, 64}, {4, 128},  {128, 4},
                                         {16, 256}, {256, 16}, {4, 256}, {256, 4}};
const std::vector<Tuple> kEvalTuples = {
    {1, 32},   {32, 1},   {4, 32},   {32, 4},  {4, 128},  {128, 4},  {16, 256},
    {256, 16}, {4, 256},  {256, 4},  {16, 512}, {512, 16}, {4, 512},  {512, 4},
    {8, 768},  {768, 8},  {16, 768}, {768, 16}, {4, 768},  {768, 4}};

constexpr std::size_t kTrainPerTuple = 20000;
constexpr std::size_t kEvalPerTuple = 1000;
constexpr int kPaperVocab = 2048;
constexpr int kDeskVocab = 256;
constexpr std::size_t kDeskMaxSet = 64;

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

std::vector<int> sample_distinct(int lo, int hi, std::size_t count, std::mt19937_64& gen) {
  std::vector<int> pool(static_cast<std::size_t>(hi - lo));
  std::iota(pool.begin(), pool.end(), lo);
  // Partial Fisher-Yates: the first `count` slots become a uniform ordered sample.
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(gen)]);
  }
  pool.resize(count);
  return pool;
}

}  // namespace

std::span<const int> SDInstance::set_a() const {
  return std::span<const int>(input_ids).subspan(1, len_a);
}

std::span<const int> SDInstance::set_b() const {
  return std::span<const int>(input_ids).subspan(len_a + 2, len_b);
}

SDInstance make_sd_instance(const std::vector<int>& a, const std::vector<int>& b, int vocab) {
  const SDVocab v{vocab};
  if (vocab < 5) throw std::invalid_argument("sd instance: vocabulary too small");
  if (a.empty() || b.empty()) throw std::invalid_argument("sd instance: sets must be non-empty");
  for (const auto* set : {&a, &b})
    for (int x : *set)
      if (x < 0 || x >= v.prefix()) {
        throw std::invalid_argument("sd instance: id " + std::to_string(x) +
                                    " is not a content id");
      }
  std::unordered_set<int> in_a(a.begin(), a.end());
  if (in_a.size() != a.size()) throw std::invalid_argument("sd instance: A has repeated ids");
  if (std::unordered_set<int>(b.begin(), b.end()).size() != b.size()) {
    throw std::invalid_argument("sd instance: B has repeated ids");
  }
  std::vector<int> common;
  for (int x : b)
    if (in_a.count(x)) common.push_back(x);
  if (common.size() != 1) {
    throw std::invalid_argument("sd instance: sets share " + std::to_string(common.size()) +
                                " ids, expected exactly one");
  }
  SDInstance inst;
  inst.len_a = a.size();
  inst.len_b = b.size();
  inst.vocab = vocab;
  inst.target = common.front();
  inst.input_ids.reserve(a.size() + b.size() + 4);
  inst.input_ids.push_back(v.prefix());
  inst.input_ids.insert(inst.input_ids.end(), a.begin(), a.end());
  inst.input_ids.push_back(v.sep_sets());
  inst.input_ids.insert(inst.input_ids.end(), b.begin(), b.end());
  inst.input_ids.push_back(v.sep_answer());
  inst.input_ids.push_back(v.mask());
  inst.labels.assign(inst.input_ids.size(), kIgnoreLabel);
  inst.labels.back() = inst.target;
  return inst;
}

SDInstance gen_sd_instance(std::size_t len_a, std::size_t len_b, int vocab, std::uint64_t seed) {
  const SDVocab v{vocab};
  if (len_a == 0 || len_b == 0) throw std::invalid_argument("sd instance: set sizes must be >= 1");
  if (vocab < 6) throw std::invalid_argument("sd instance: vocabulary too small");
  const auto half = static_cast<std::size_t>(v.half());
  if (len_a > half || len_b > half) {
    throw std::invalid_argument("sd instance: set size " + std::to_string(std::max(len_a, len_b)) +
                                " exceeds half-vocabulary " + std::to_string(half));
  }
  std::mt19937_64 gen(seed);
  std::vector<int> a = sample_distinct(0, v.half(), len_a, gen);
  std::vector<int> b = sample_distinct(v.half(), 2 * v.half(), len_b, gen);
  const int t = a[std::uniform_int_distribution<std::size_t>(0, len_a - 1)(gen)];
  b[std::uniform_int_distribution<std::size_t>(0, len_b - 1)(gen)] = t;
  return make_sd_instance(a, b, vocab);
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "eval") return Split::eval;
  throw std::invalid_argument("unknown split: " + name);
}

Profile parse_profile(const std::string& name) {
  if (name == "desk") return Profile::desk;
  if (name == "paper") return Profile::paper;
  throw std::invalid_argument("unknown profile: " + name);
}

MixtureSpec mixture_spec(Split split, double scale, Profile profile) {
  if (!(scale > 0.0 && scale <= 1.0)) {
    throw std::invalid_argument("mixture: scale must lie in (0, 1]");
  }
  const auto& tuples = split == Split::train ? kTrainTuples : kEvalTuples;
  const std::size_t base = split == Split::train ? kTrainPerTuple : kEvalPerTuple;
  const auto count = static_cast<std::size_t>(std::llround(static_cast<double>(base) * scale));
  MixtureSpec spec;
  spec.vocab = profile == Profile::desk ? kDeskVocab : kPaperVocab;
  for (auto [a, b] : tuples) {
    if (profile == Profile::desk) {
      a = std::min(a, kDeskMaxSet);
      b = std::min(b, kDeskMaxSet);
    }
    spec.entries.push_back({a, b, count});
  }
  return spec;
}

std::vector<SDInstance> gen_mixture(const MixtureSpec& spec, std::uint64_t seed) {
  std::vector<SDInstance> out;
  for (std::size_t e = 0; e < spec.entries.size(); ++e) {
    const auto& entry = spec.entries[e];
    for (std::size_t i = 0; i < entry.count; ++i) {
      out.push_back(gen_sd_instance(entry.len_a, entry.len_b, spec.vocab,
                                    derive_seed(seed, e, i)));
    }
  }
  return out;
}

std::vector<SDInstance> gen_mixture(Split split, double scale, Profile profile,
                                    std::uint64_t seed) {
  return gen_mixture(mixture_spec(split, scale, profile),
                     derive_seed(seed, split == Split::train ? 0 : 1, 0xfeed));
}

// ---- streaming solver -------------------------------------------------------

std::vector<BitRow> encode_sd_rows(std::span<const std::uint64_t> a,
                                   std::span<const std::uint64_t> b, std::size_t n_bits) {
  if (n_bits == 0 || n_bits > 63) throw std::invalid_argument("encode_sd_rows: bad bit width");
  auto encode = [n_bits](std::uint64_t x) {
    if (x >> n_bits) {
      throw std::out_of_range("encode_sd_rows: element " + std::to_string(x) + " needs more than " +
                              std::to_string(n_bits) + " bits");
    }
    BitRow row(n_bits + 1, 0);
    for (std::size_t i = 0; i < n_bits; ++i) row[i] = (x >> (n_bits - 1 - i)) & 1U;
    return row;
  };
  std::vector<BitRow> rows;
  rows.reserve(a.size() + b.size() + 1);
  for (auto x : a) rows.push_back(encode(x));
  BitRow sep(n_bits + 1, 0);
  sep[n_bits] = 1;
  rows.push_back(sep);
  for (auto x : b) rows.push_back(encode(x));
  return rows;
}

std::uint64_t decode_row(const BitRow& row, std::size_t n_bits) {
  std::uint64_t x = 0;
  for (std::size_t i = 0; i < n_bits; ++i) x = (x << 1) | row[i];
  return x;
}

StreamingSDSolver::StreamingSDSolver(std::size_t rows_per_copy, std::size_t n_bits)
    : n_(rows_per_copy), n_bits_(n_bits) {
  if (rows_per_copy == 0) throw std::invalid_argument("streaming sd: empty input");
}

void StreamingSDSolver::step(const BitRow& row) {
  if (row.size() != n_bits_ + 1) throw std::invalid_argument("streaming sd: row width mismatch");
  if (index_ >= 2 * n_) throw std::invalid_argument("streaming sd: more than 2N rows");
  const std::size_t i = index_++;
  if (row[n_bits_] == 1) {
    for (std::size_t b = 0; b < n_bits_; ++b)
      if (row[b] != 0) throw std::invalid_argument("streaming sd: separator row carries bits");
    if (!first_separator_) {
      if (i >= n_) throw std::invalid_argument("streaming sd: first copy has no separator");
      first_separator_ = true;
      // Smaller set first iff |A| <= |B|, i.e. the separator sits at or before (N-1)/2.
      if (i <= (n_ - 1) / 2) small_first_ = true;
    } else {
      if (second_separator_ || i < n_) {
        throw std::invalid_argument("streaming sd: each copy needs exactly one separator");
      }
      second_separator_ = true;
    }
    return;
  }
  if (!first_separator_) return;
  auto flag_match = [&] {
    for (auto& stored : buffer_) {
      if (std::equal(stored.begin(), stored.end(), row.begin())) {
        stored[n_bits_] = 1;
        return;
      }
    }
  };
  if (small_first_) {
    if (!second_separator_) {
      if (i >= n_) buffer_.push_back(row);
    } else {
      flag_match();
    }
  } else if (!second_separator_) {
    if (i < n_) {
      buffer_.push_back(row);
    } else {
      flag_match();
    }
  }
  max_rows_ = std::max(max_rows_, buffer_.size());
}

StreamResult StreamingSDSolver::finish() const {
  if (index_ != 2 * n_) throw std::invalid_argument("streaming sd: input shorter than 2N rows");
  if (!first_separator_ || !second_separator_) {
    throw std::invalid_argument("streaming sd: each copy needs exactly one separator");
  }
  StreamResult out;
  for (const auto& stored : buffer_)
    if (stored[n_bits_] == 1) out.intersection.push_back(decode_row(stored, n_bits_));
  std::sort(out.intersection.begin(), out.intersection.end());
  out.max_state_rows = max_rows_;
  out.state_bits = max_rows_ * (n_bits_ + 1);
  return out;
}

StreamResult streaming_sd_solve(const std::vector<BitRow>& u_jrt, std::size_t n_bits) {
  if (u_jrt.empty() || u_jrt.size() % 2 != 0) {
    throw std::invalid_argument("streaming sd: input must be two equal copies");
  }
  const std::size_t n = u_jrt.size() / 2;
  for (std::size_t i = 0; i < n; ++i)
    if (u_jrt[i] != u_jrt[n + i]) throw std::invalid_argument("streaming sd: copies differ");
  StreamingSDSolver solver(n, n_bits);
  for (const auto& row : u_jrt) solver.step(row);
  return solver.finish();
}

std::vector<std::uint64_t> brute_force_intersection(std::span<const std::uint64_t> a,
                                                    std::span<const std::uint64_t> b) {
  std::vector<std::uint64_t> out;
  for (auto x : a)
    for (auto y : b)
      if (x == y && std::find(out.begin(), out.end(), x) == out.end()) out.push_back(x);
  std::sort(out.begin(), out.end());
  return out;
}

// ---- linear attention + MLP -------------------------------------------------

LinAttSDResult linatt_sd_solve(std::span<const std::size_t> a, std::span<const std::size_t> b,
                               const FeatureMap& phi, std::size_t value_dim) {
  if (a.empty()) throw std::invalid_argument("linatt_sd_solve: A must be non-empty");
  if (value_dim == 0) throw std::invalid_argument("linatt_sd_solve: value_dim must be >= 1");
  if (phi.is_vector_map()) throw std::invalid_argument("linatt_sd_solve: needs an IP feature map");

  LinAttSDResult out;
  std::vector<std::size_t> all(a.begin(), a.end());
  all.insert(all.end(), b.begin(), b.end());
  out.epsilon = all.size() >= 2 ? measure_epsilon(phi, all) : 0.0;
  out.within_tolerance = out.epsilon <= 1.0 / (3.0 * static_cast<double>(a.size()));

  // rho_i = sum_{k < |A|} <phi(u_i), phi(u_k)>, the entries of row i of (Q K^T) V.
  std::vector<double> rho(b.size(), 0.0);
  if (phi.has_explicit_features()) {
    // Recurrent view: a single state vector sum_k phi(a_k) (every value column is 1).
    std::vector<double> state(phi.feature_dim(), 0.0);
    for (std::size_t x : a) {
      const auto f = phi.embed(x);
      for (std::size_t j = 0; j < f.size(); ++j) state[j] += f[j];
    }
    for (std::size_t i = 0; i < b.size(); ++i) {
      const auto f = phi.embed(b[i]);
      for (std::size_t j = 0; j < f.size(); ++j) rho[i] += f[j] * state[j];
    }
  } else {
    for (std::size_t i = 0; i < b.size(); ++i)
      for (std::size_t x : a) rho[i] += phi.kernel(b[i], x);
  }
  out.z = Tensor<double>({b.size(), value_dim});
  out.member.assign(b.size(), false);
  for (std::size_t i = 0; i < b.size(); ++i) {
    const double y = std::max(0.0, rho[i] - 1.0 / 3.0);
    for (std::size_t c = 0; c < value_dim; ++c) out.z(i, c) = y;
    out.member[i] = y > 0.0;
  }
  return out;
}

}  // namespace jrt
