#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "jrt/bench.hpp"

namespace jrt {
namespace {

TEST(NaivePrefill, SingleTokenReturnsItsValue) {
  const auto y = naive_prefill({1.0, 0.5}, {0.3, 2.0}, {4.0, -1.0, 7.0}, {}, {}, 1, 0, 2, 3);
  ASSERT_EQ(y.size(), 3u);
  EXPECT_DOUBLE_EQ(y[0], 4.0);
  EXPECT_DOUBLE_EQ(y[1], -1.0);
  EXPECT_DOUBLE_EQ(y[2], 7.0);
}

TEST(NaivePrefill, HandComputedTwoTokensWithEncoder) {
  // D = 1: scores are products of scalars.
  const auto y = naive_prefill({1.0, 2.0}, {1.0, 3.0}, {10.0, 20.0}, {2.0}, {5.0}, 2, 1, 1, 1);
  EXPECT_DOUBLE_EQ(y[0], (2.0 * 5.0 + 1.0 * 10.0) / 3.0);
  EXPECT_DOUBLE_EQ(y[1], (4.0 * 5.0 + 2.0 * 10.0 + 6.0 * 20.0) / 12.0);
}

TEST(ScalingExponent, RecoversPowerLaw) {
  std::vector<BenchRecord> r;
  for (std::size_t n : {256, 512, 1024, 2048}) {
    r.push_back({"quad", n, 0, 1, 1, 1, 1e-6 * double(n) * double(n), 5});
    r.push_back({"lin", n, 0, 1, 1, 1, 3e-3 * double(n), 5});
  }
  EXPECT_NEAR(scaling_exponent(r, "quad"), 2.0, 1e-12);
  EXPECT_NEAR(scaling_exponent(r, "lin"), 1.0, 1e-12);
  EXPECT_THROW(scaling_exponent(r, "missing"), std::invalid_argument);
}

TEST(BenchCsv, RoundTrip) {
  const std::vector<BenchRecord> r{{"la_parallel", 1024, 0, 2, 16, 21, 1.25, 5},
                                   {"pla_two_pass", 2048, 1024, 2, 16, 21, 0.1 + 0.2, 7}};
  std::stringstream ss;
  write_bench_csv(ss, r);
  EXPECT_EQ(read_bench_csv(ss), r);
  std::stringstream bad("impl,N\nx,1\n");
  EXPECT_THROW(read_bench_csv(bad), std::runtime_error);
}

TEST(BenchPrefill, SmallRunProducesOneRecordPerCell) {
  BenchConfig cfg;
  cfg.lengths = {32, 64};
  cfg.head_dim = 4;
  cfg.feature_in = 2;
  cfg.agreement_len = 48;
  const auto r = bench_prefill(cfg);
  ASSERT_EQ(r.size(), 8u);
  EXPECT_EQ(r[0].impl, "la_parallel");
  EXPECT_EQ(r[0].D, 7u);
  for (const auto& rec : r) {
    EXPECT_GT(rec.latency_ms, 0.0);
    EXPECT_EQ(rec.M, rec.impl == "pla_two_pass" ? rec.N / 2 : 0u);
  }
  EXPECT_LE(bench_agreement(cfg, 40), 1e-10);
}

TEST(BenchPrefill, ArgumentHandling) {
  BenchConfig cfg;
  cfg.lengths = {16};
  cfg.trials = 4;
  EXPECT_THROW(bench_prefill(cfg), std::invalid_argument);
  cfg.trials = 5;
  cfg.batch = 0;
  EXPECT_TRUE(bench_prefill(cfg).empty());
  EXPECT_EQ(parse_bench_impl("la_recurrent"), BenchImpl::la_recurrent);
  EXPECT_THROW(parse_bench_impl("flash"), std::invalid_argument);
}

}  // namespace
}  // namespace jrt
