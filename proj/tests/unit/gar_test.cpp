#include <gtest/gtest.h>

#include <random>
#include <set>

#include "jrt/gar.hpp"
#include "jrt/set_disjointness.hpp"
#include "oracles.hpp"

namespace jrt {
namespace {

std::vector<std::uint64_t> sd_oracle(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
  return oracle::intersection({a.begin(), a.end()}, {b.begin(), b.end()});
}

GARInstance random_gar(std::mt19937_64& gen, std::uint64_t c) {
  GARInstance g;
  g.c = c;
  std::set<std::uint64_t> keys;
  const std::size_t n = 1 + gen() % 20;
  while (keys.size() < n) keys.insert(gen() % 64);
  for (auto k : keys) {
    g.keys.push_back(k);
    g.values.push_back(1 + gen() % c);
  }
  const std::size_t nq = 1 + gen() % 20;
  for (std::size_t i = 0; i < nq; ++i) g.queries.push_back(gen() % 64);
  return g;
}

TEST(GAR, ValueBits) {
  GARInstance g;
  for (auto [c, bits] : {std::pair<std::uint64_t, std::size_t>{1, 1}, {2, 2}, {3, 2}, {4, 3}, {7, 3},
                         {8, 4}, {255, 8}}) {
    g.c = c;
    EXPECT_EQ(g.value_bits(), bits) << c;
  }
}

TEST(GAR, LookupMatchesDictionary) {
  const GARInstance g{{4, 9, 2}, {1, 3, 2}, {9, 5, 4, 9}, 3};
  const GARAnswer want{3, std::nullopt, 1, 3};
  EXPECT_EQ(gar_lookup(g), want);
  const GARInstance conflict{{4, 4}, {1, 2}, {4}, 2};
  EXPECT_THROW(gar_lookup(conflict), std::invalid_argument);
}

TEST(GAR, SolveViaSDUsesOneCallPerValueBit) {
  std::mt19937_64 gen(21);
  for (int trial = 0; trial < 200; ++trial) {
    const std::uint64_t c = 1 + gen() % 100;
    const auto g = random_gar(gen, c);
    const auto r = gar_solve_via_sd(g, sd_oracle);
    EXPECT_EQ(r.sd_calls, g.value_bits());
    EXPECT_EQ(r.answers, gar_lookup(g));
    const auto want = oracle::lookup(g.keys, g.values, g.queries);
    EXPECT_EQ(r.answers, want);
  }
}

TEST(GAR, SolveViaStreamingSolver) {
  const auto streaming = [](std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
    auto rows = encode_sd_rows(a, b, 8);
    const auto copy = rows;
    rows.insert(rows.end(), copy.begin(), copy.end());
    return streaming_sd_solve(rows, 8).intersection;
  };
  const GARInstance g{{10, 20, 30}, {5, 2, 7}, {30, 11, 10}, 7};
  const auto r = gar_solve_via_sd(g, streaming);
  EXPECT_EQ(r.answers, (GARAnswer{7, std::nullopt, 5}));
  EXPECT_EQ(r.sd_calls, 3u);
}

TEST(GAR, RejectsValuesOutsideRange) {
  EXPECT_THROW(gar_solve_via_sd({{1}, {0}, {1}, 3}, sd_oracle), std::invalid_argument);
  EXPECT_THROW(gar_solve_via_sd({{1}, {4}, {1}, 3}, sd_oracle), std::invalid_argument);
  EXPECT_THROW(gar_solve_via_sd({{1, 2}, {1}, {1}, 3}, sd_oracle), std::invalid_argument);
}

TEST(SDViaGAR, ExhaustiveSmallUniverse) {
  const auto sets = oracle::subsets(6, 3);
  for (const auto& a : sets)
    for (const auto& b : sets) {
      const auto r = sd_solve_via_gar(a, b, gar_lookup);
      ASSERT_EQ(r.gar_calls, 1u);
      ASSERT_EQ(r.disjoint, oracle::intersection(a, b).empty());
    }
}

}  // namespace
}  // namespace jrt
