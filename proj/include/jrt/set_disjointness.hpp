#pragma once

// Set-disjointness: the synthetic token task, the streaming row-level solver,
// and the linear-attention + MLP construction over IP feature maps.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "jrt/feature_maps.hpp"
#include "jrt/tensor.hpp"

namespace jrt {

// Special ids occupy the top four vocabulary slots; content ids are [0, V-4),
// split into the A half [0, h) and the B half [h, 2h) with h = (V-4)/2.
struct SDVocab {
  int size = 0;

  int prefix() const { return size - 4; }
  int mask() const { return size - 3; }
  int sep_sets() const { return size - 2; }
  int sep_answer() const { return size - 1; }
  int half() const { return (size - 4) / 2; }
};

struct SDInstance {
  std::vector<int> input_ids;
  std::vector<int> labels;  // kIgnoreLabel except at the final position
  std::size_t len_a = 0, len_b = 0;
  int vocab = 0;
  int target = 0;  // the single element of A and B

  std::size_t answer_position() const { return input_ids.size() - 1; }
  // The A and B regions of input_ids.
  std::span<const int> set_a() const;
  std::span<const int> set_b() const;
};

// [prefix] A [sep_sets] B [sep_answer] [mask] with the answer as the last label.
// Throws std::invalid_argument unless |A n B| = 1 and all ids are content ids.
SDInstance make_sd_instance(const std::vector<int>& a, const std::vector<int>& b, int vocab);

// A from the first content half, B from the second, then one random element
// of A overwrites a random position of B. Deterministic in `seed`.
SDInstance gen_sd_instance(std::size_t len_a, std::size_t len_b, int vocab, std::uint64_t seed);

enum class Split { train, eval };
enum class Profile { desk, paper };

Split parse_split(const std::string& name);
Profile parse_profile(const std::string& name);

struct MixtureEntry {
  std::size_t len_a, len_b, count;
};

struct MixtureSpec {
  int vocab = 0;
  std::vector<MixtureEntry> entries;
};

// The (|A|, |B|) tuple list and per-tuple counts scaled by `scale` in (0, 1].
// The desk profile clamps set sizes to 64 and uses a 256-token vocabulary.
MixtureSpec mixture_spec(Split split, double scale, Profile profile);
std::vector<SDInstance> gen_mixture(Split split, double scale, Profile profile,
                                    std::uint64_t seed);
std::vector<SDInstance> gen_mixture(const MixtureSpec& spec, std::uint64_t seed);

// ---- streaming solver over bit rows ----------------------------------------

// One input row: n element bits (most significant first) then a separator flag.
using BitRow = std::vector<std::uint8_t>;

// Rows of A, the separator [0^n :: 1], then rows of B.
std::vector<BitRow> encode_sd_rows(std::span<const std::uint64_t> a,
                                   std::span<const std::uint64_t> b, std::size_t n_bits);
std::uint64_t decode_row(const BitRow& row, std::size_t n_bits);

struct StreamResult {
  std::vector<std::uint64_t> intersection;  // sorted
  std::size_t max_state_rows = 0;
  std::size_t state_bits = 0;  // max_state_rows * (n + 1)
};

// Scans the doubled input once, storing only the smaller set. Throws
// std::invalid_argument unless each copy holds exactly one separator row.
class StreamingSDSolver {
 public:
  StreamingSDSolver(std::size_t rows_per_copy, std::size_t n_bits);
  void step(const BitRow& row);
  StreamResult finish() const;

 private:
  std::size_t n_, n_bits_, index_ = 0;
  bool first_separator_ = false, second_separator_ = false, small_first_ = false;
  std::vector<BitRow> buffer_;
  std::size_t max_rows_ = 0;
};

StreamResult streaming_sd_solve(const std::vector<BitRow>& u_jrt, std::size_t n_bits);

std::vector<std::uint64_t> brute_force_intersection(std::span<const std::uint64_t> a,
                                                    std::span<const std::uint64_t> b);

// ---- linear attention + MLP -------------------------------------------------

struct LinAttSDResult {
  Tensor<double> z;  // |B| x value_dim, ReLU(rho - 1/3) per query row
  std::vector<bool> member;  // z row nonzero
  double epsilon = 0.0;      // measured over A u B
  bool within_tolerance = false;  // epsilon <= 1 / (3 |A|)
};

// Q = K = phi(rows of A then B), V = 1 on the first |A| rows and 0 elsewhere;
// the layer output (Q K^T) V passes through ReLU(x - 1/3). B rows that equal an
// element of A land in [1/3, 1] whenever the map's tolerance is 1/(3|A|).
LinAttSDResult linatt_sd_solve(std::span<const std::size_t> a, std::span<const std::size_t> b,
                               const FeatureMap& phi, std::size_t value_dim = 1);

}  // namespace jrt
