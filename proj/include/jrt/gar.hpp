#pragma once

// General associative recall (key-value pairs, then queries) and its
// reductions to and from set disjointness.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace jrt {

struct GARInstance {
  std::vector<std::uint64_t> keys;
  std::vector<std::uint64_t> values;  // values[i] belongs to keys[i], each in [1, c]
  std::vector<std::uint64_t> queries;
  std::uint64_t c = 1;  // value vocabulary size

  // Bits per value: ceil(log2(c + 1)); the all-zero code stands for Null.
  std::size_t value_bits() const;
};

using GARAnswer = std::vector<std::optional<std::uint64_t>>;

// Returns the intersection of two sets.
using SDSolver = std::function<std::vector<std::uint64_t>(std::span<const std::uint64_t>,
                                                          std::span<const std::uint64_t>)>;
using GARSolver = std::function<GARAnswer(const GARInstance&)>;

// Reference answer by dictionary lookup. Throws std::invalid_argument when a
// key repeats with different values.
GARAnswer gar_lookup(const GARInstance& g);

struct GARViaSD {
  GARAnswer answers;
  std::size_t sd_calls = 0;
};

// One SD call per value bit l with A = queries and B = {k_j : bit l of v_j is 1};
// a query's value is reassembled from the calls that report it.
GARViaSD gar_solve_via_sd(const GARInstance& g, const SDSolver& sd);

struct SDViaGAR {
  bool disjoint = true;
  std::size_t gar_calls = 0;
};

// Keys and values are both A, queries are B; disjoint iff every answer is Null.
SDViaGAR sd_solve_via_gar(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b,
                          const GARSolver& gar);

}  // namespace jrt
