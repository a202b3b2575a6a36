#include "jrt/gar.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>
#include <unordered_map>

namespace jrt {
namespace {

std::unordered_map<std::uint64_t, std::uint64_t> key_table(const GARInstance& g) {
  if (g.keys.size() != g.values.size()) {
    throw std::invalid_argument("gar: keys and values differ in length");
  }
  std::unordered_map<std::uint64_t, std::uint64_t> table;
  for (std::size_t i = 0; i < g.keys.size(); ++i) {
    auto [it, inserted] = table.emplace(g.keys[i], g.values[i]);
    if (!inserted && it->second != g.values[i]) {
      throw std::invalid_argument("gar: key " + std::to_string(g.keys[i]) +
                                  " maps to conflicting values");
    }
  }
  return table;
}

}  // namespace

std::size_t GARInstance::value_bits() const {
  std::size_t bits = 0;
  while (bits < 64 && (std::uint64_t{1} << bits) < c + 1) ++bits;
  return bits;
}

GARAnswer gar_lookup(const GARInstance& g) {
  const auto table = key_table(g);
  GARAnswer out;
  out.reserve(g.queries.size());
  for (auto q : g.queries) {
    auto it = table.find(q);
    out.push_back(it == table.end() ? std::nullopt : std::optional<std::uint64_t>(it->second));
  }
  return out;
}

GARViaSD gar_solve_via_sd(const GARInstance& g, const SDSolver& sd) {
  key_table(g);  // validates the unique-match precondition
  for (auto v : g.values) {
    if (v == 0 || v > g.c) {
      throw std::invalid_argument("gar: value " + std::to_string(v) + " outside [1, " +
                                  std::to_string(g.c) + "]");
    }
  }
  std::vector<std::uint64_t> query_set = g.queries;
  std::sort(query_set.begin(), query_set.end());
  query_set.erase(std::unique(query_set.begin(), query_set.end()), query_set.end());

  const std::size_t bits = g.value_bits();
  std::unordered_map<std::uint64_t, std::uint64_t> assembled;
  GARViaSD out;
  for (std::size_t l = 0; l < bits; ++l) {
    std::vector<std::uint64_t> keys_l;
    for (std::size_t j = 0; j < g.keys.size(); ++j)
      if ((g.values[j] >> l) & 1U) keys_l.push_back(g.keys[j]);
    std::sort(keys_l.begin(), keys_l.end());
    keys_l.erase(std::unique(keys_l.begin(), keys_l.end()), keys_l.end());
    const auto hits = sd(query_set, keys_l);
    ++out.sd_calls;
    for (auto q : hits) assembled[q] |= std::uint64_t{1} << l;
  }
  out.answers.reserve(g.queries.size());
  for (auto q : g.queries) {
    auto it = assembled.find(q);
    out.answers.push_back(it == assembled.end() ? std::nullopt
                                                : std::optional<std::uint64_t>(it->second));
  }
  return out;
}

SDViaGAR sd_solve_via_gar(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b,
                          const GARSolver& gar) {
  GARInstance g;
  g.keys.assign(a.begin(), a.end());
  g.values.assign(a.begin(), a.end());
  g.queries.assign(b.begin(), b.end());
  g.c = a.empty() ? 1 : *std::max_element(a.begin(), a.end());
  SDViaGAR out;
  const GARAnswer answers = gar(g);
  out.gar_calls = 1;
  out.disjoint = std::none_of(answers.begin(), answers.end(),
                              [](const auto& ans) { return ans.has_value(); });
  return out;
}

}  // namespace jrt
