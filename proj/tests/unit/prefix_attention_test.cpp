#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "jrt/prefix_attention.hpp"
#include "oracles.hpp"

namespace jrt {
namespace {

PLAInputs<double> random_inputs(std::size_t n, std::size_t m, std::size_t f, std::size_t d,
                                std::mt19937_64& gen) {
  return {oracle::random_matrix(n, f, gen, 0.5), oracle::random_matrix(n, f, gen, 0.5),
          oracle::random_matrix(n, d, gen),      oracle::random_matrix(m, f, gen, 0.5),
          oracle::random_matrix(m, d, gen),      PLAInputs<double>::unmasked(m)};
}

TEST(PlaParallel, EmptyEncoderIsCausalLinearAttentionBitwise) {
  std::mt19937_64 gen(1);
  const auto in = random_inputs(20, 0, 3, 4, gen);
  const auto phi = FeatureMap::taylor2(3);
  EXPECT_EQ(pla_parallel(in, phi).storage(), la_parallel(in.q_dec, in.k_dec, in.v_dec, phi).storage());
  EXPECT_EQ(two_pass_prefill(in, phi).y.storage(), la_prefill(in.q_dec, in.k_dec, in.v_dec, phi).y.storage());
}

TEST(PlaParallel, FullyMaskedEncoderIsCausalLinearAttention) {
  std::mt19937_64 gen(2);
  auto in = random_inputs(12, 6, 3, 2, gen);
  in.pad_mask.assign(6, 0);
  const auto phi = FeatureMap::taylor2(3);
  EXPECT_LE(max_rel_error(pla_parallel(in, phi), la_parallel(in.q_dec, in.k_dec, in.v_dec, phi)), 1e-15);
}

TEST(PlaParallel, MatchesTwoPathOracle) {
  std::mt19937_64 gen(3);
  auto in = random_inputs(32, 16, 4, 4, gen);
  in.pad_mask[0] = in.pad_mask[5] = 0;
  const auto want = oracle::taylor_prefix_attention(in.q_dec, in.k_dec, in.v_dec, in.k_enc, in.v_enc,
                                                    in.pad_mask);
  EXPECT_LE(max_rel_error(pla_parallel(in, FeatureMap::taylor2(4)), want), 1e-10);
}

TEST(PlaParallel, MaskedRowsActAsIfOmitted) {
  std::mt19937_64 gen(4);
  auto in = random_inputs(10, 5, 2, 3, gen);
  in.pad_mask = {1, 0, 1, 0, 1};
  PLAInputs<double> kept = in;
  kept.k_enc = Tensor<double>({3, 2});
  kept.v_enc = Tensor<double>({3, 3});
  std::size_t r = 0;
  for (std::size_t j = 0; j < 5; ++j) {
    if (!in.pad_mask[j]) continue;
    for (std::size_t c = 0; c < 2; ++c) kept.k_enc(r, c) = in.k_enc(j, c);
    for (std::size_t c = 0; c < 3; ++c) kept.v_enc(r, c) = in.v_enc(j, c);
    ++r;
  }
  kept.pad_mask = PLAInputs<double>::unmasked(3);
  const auto phi = FeatureMap::taylor2(2);
  EXPECT_LE(max_rel_error(pla_parallel(in, phi), pla_parallel(kept, phi)), 1e-14);
}

TEST(PlaInitState, EmptyEncoderGivesZeroState) {
  std::mt19937_64 gen(5);
  const auto in = random_inputs(6, 0, 2, 2, gen);
  const auto s = pla_init_state(in, FeatureMap::taylor2(2));
  for (double x : s.s.data()) EXPECT_EQ(x, 0.0);
  EXPECT_EQ(s.position, 0u);
}

TEST(PlaInitState, AllPadEncoderEqualsDecoderPrefillState) {
  std::mt19937_64 gen(6);
  auto in = random_inputs(9, 4, 2, 3, gen);
  in.pad_mask.assign(4, 0);
  const auto phi = FeatureMap::taylor2(2);
  const auto s = pla_init_state(in, phi);
  Tensor<double> q4({4, 2}), k4({4, 2}), v4({4, 3});
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t c = 0; c < 2; ++c) {
      q4(i, c) = in.q_dec(i, c);
      k4(i, c) = in.k_dec(i, c);
    }
    for (std::size_t c = 0; c < 3; ++c) v4(i, c) = in.v_dec(i, c);
  }
  const auto p = la_prefill(q4, k4, v4, phi);
  EXPECT_LE(max_rel_error(s.s, p.state.s), 1e-15);
  EXPECT_LE(max_rel_error(s.z, p.state.z), 1e-15);
}

TEST(PlaInitState, DecodeRolloutMatchesParallelAfterEncoder) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 gen(seed);
    const std::size_t n = 2 + gen() % 40, m = gen() % n, f = 1 + gen() % 5, d = 1 + gen() % 5;
    const auto in = random_inputs(n, m, f, d, gen);
    const auto phi = FeatureMap::taylor2(f);
    const auto want = pla_parallel(in, phi);
    auto state = pla_init_state(in, phi);
    for (std::size_t i = m; i < n; ++i) {
      const auto y = la_decode_step<double>(state, in.q_dec.row(i), in.k_dec.row(i), in.v_dec.row(i), phi);
      for (std::size_t c = 0; c < d; ++c)
        ASSERT_NEAR(y[c], want(i, c), 1e-10 * std::max(1e-6, std::abs(want(i, c)))) << "seed " << seed;
    }
  }
}

TEST(TwoPassPrefill, MatchesParallelAndExposesEncoderState) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 gen(seed + 1000);
    const std::size_t n = 1 + gen() % 48, m = gen() % (n + 1), f = 1 + gen() % 4, d = 1 + gen() % 6;
    const auto in = random_inputs(n, m, f, d, gen);
    const auto phi = FeatureMap::taylor2(f);
    EXPECT_LE(max_rel_error(two_pass_prefill(in, phi).y, pla_parallel(in, phi)), 1e-10) << seed;
  }
  std::mt19937_64 gen(7);
  const auto in = random_inputs(10, 4, 2, 2, gen);
  const auto phi = FeatureMap::taylor2(2);
  const auto enc = pla_encoder_state(in, phi);
  Tensor<double> z({phi.feature_dim()});
  const auto fk = phi.apply_rows(in.k_enc);
  for (std::size_t j = 0; j < 4; ++j)
    for (std::size_t a = 0; a < fk.cols(); ++a) z[a] += fk(j, a);
  EXPECT_LE(max_rel_error(enc.z, z), 1e-15);
}

TEST(TwoPassPrefill, StateMemoryEqualsCausalState) {
  std::mt19937_64 gen(8);
  const auto in = random_inputs(10, 6, 3, 4, gen);
  const auto phi = FeatureMap::taylor2(3);
  EXPECT_EQ(two_pass_prefill(in, phi).state.footprint_bytes(),
            la_prefill(in.q_dec, in.k_dec, in.v_dec, phi).state.footprint_bytes());
}

TEST(PreparePrompt, LeftPad) {
  const auto p = prepare_prompt({7, 8, 9}, {6, 0, PadStrategy::left_pad});
  EXPECT_EQ(p.tokens, (std::vector<int>{0, 0, 0, 7, 8, 9}));
  EXPECT_EQ(p.mask, (std::vector<std::uint8_t>{0, 0, 0, 1, 1, 1}));
}

TEST(PreparePrompt, ReadTwice) {
  const auto p = prepare_prompt({7, 8, 9}, {6, 0, PadStrategy::read_twice});
  EXPECT_EQ(p.tokens, (std::vector<int>{7, 8, 9, 7, 8, 9}));
  EXPECT_EQ(p.mask, std::vector<std::uint8_t>(6, 1));
}

TEST(PreparePrompt, ReadTwiceKeepsMostRecentTokensThenPads) {
  const auto trunc = prepare_prompt({7, 8, 9}, {5, 0, PadStrategy::read_twice});
  EXPECT_EQ(trunc.tokens, (std::vector<int>{8, 9, 7, 8, 9}));
  const auto padded = prepare_prompt({7, 8}, {6, 1, PadStrategy::read_twice});
  EXPECT_EQ(padded.tokens, (std::vector<int>{1, 1, 7, 8, 7, 8}));
  EXPECT_EQ(padded.mask, (std::vector<std::uint8_t>{0, 0, 1, 1, 1, 1}));
}

TEST(PreparePrompt, LongPromptUnchanged) {
  const std::vector<int> t{1, 2, 3, 4, 5, 6, 7, 8};
  const auto p = prepare_prompt(t, {6, 0, PadStrategy::left_pad});
  EXPECT_EQ(p.tokens, t);
  EXPECT_EQ(p.mask, std::vector<std::uint8_t>(8, 1));
}

TEST(IterativeDecode, CostIsSumOfGrowingLengths) {
  std::vector<std::size_t> seen;
  const auto r = iterative_decode(
      [&](const std::vector<int>& s) {
        seen.push_back(s.size());
        return static_cast<int>(s.size());
      },
      {1, 2, 3, 4}, 3);
  EXPECT_EQ(r.generated, (std::vector<int>{4, 5, 6}));
  EXPECT_EQ(seen, (std::vector<std::size_t>{4, 5, 6}));
  EXPECT_EQ(r.parallel_tokens, 4u + 5u + 6u);
  EXPECT_THROW(iterative_decode([](const std::vector<int>&) { return 0; }, {1}, 0), std::invalid_argument);
}

TEST(Flops, PrefixFormula) {
  EXPECT_EQ(flops_pla({1, 1, 0, 1, 1, 1}), (FlopCounts{0, 0}));
  EXPECT_EQ(flops_pla({1, 1, 1, 1, 1, 1}), (FlopCounts{1, 3}));
  EXPECT_EQ(flops_pla({1, 2, 2, 1, 2, 3}), (FlopCounts{6, 36}));
  EXPECT_THROW(flops_pla({1, 2, 3, 1, 1, 1}), std::invalid_argument);
}

}  // namespace
}  // namespace jrt
