#include <gtest/gtest.h>

#include <random>

#include "jrt/prefix_lm.hpp"
#include "oracles.hpp"

namespace jrt {
namespace {

TEST(PrefixLM, GenerationMatchesRepeatedParallelPasses) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const PrefixLM<double> lm({32, 8, 4, 4}, seed);
    std::mt19937_64 gen(seed);
    std::vector<int> prompt(4 + gen() % 6);
    for (int& t : prompt) t = static_cast<int>(gen() % 32);
    const auto fast = lm.generate(prompt, 8);
    ASSERT_EQ(fast.size(), 8u);
    auto slow = prompt;
    for (std::size_t s = 0; s < 8; ++s) slow.push_back(lm.next_token(slow));
    EXPECT_EQ(fast, std::vector<int>(slow.begin() + static_cast<std::ptrdiff_t>(prompt.size()), slow.end()))
        << seed;
  }
}

TEST(PrefixLM, DecoderRowsOnlySeeEncoderAndPast) {
  const PrefixLM<double> lm({32, 8, 4, 4}, 3);
  std::vector<int> tokens{1, 2, 3, 4, 5, 6, 7, 8};
  const auto before = lm.forward(tokens);
  tokens[7] = 9;
  const auto after = lm.forward(tokens);
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t c = 0; c < before.cols(); ++c) EXPECT_EQ(before(i, c), after(i, c));
  tokens[2] = 10;  // encoder token: every row sees it
  const auto enc = lm.forward(tokens);
  EXPECT_NE(enc(0, 0), after(0, 0));
}

TEST(PrefixLM, ShortPromptRejected) {
  const PrefixLM<double> lm({32, 8, 4, 4}, 1);
  EXPECT_THROW(lm.generate({1, 2}, 3), std::invalid_argument);
  EXPECT_THROW(lm.forward(std::vector<int>{1, 32}), std::out_of_range);
}

TEST(PrefixLM, ObjectiveGradientMatchesFiniteDifferences) {
  const PrefixLMConfig cfg{16, 8, 4, 4};
  const PrefixLM<double> lm(cfg, 5);
  const std::vector<int> tokens{3, 1, 4, 1, 5, 9, 2, 6, 5};
  LossWeights w;
  w.encoder_len = 4;
  w.mask_prob = 0.5;
  w.mask_token = 15;
  Tape<double> tape;
  PrefixLM<double>::Graph g;
  tape.backward(lm.objective(tape, tokens, w, 11, &g));

  std::vector<Tensor<double>> values = lm.params();
  const std::function<double(std::vector<Tensor<double>>&)> loss = [&](auto& ps) {
    PrefixLM<double> m = lm;
    m.params() = ps;
    Tape<double> t;
    return t.value(m.objective(t, tokens, w, 11)).item();
  };
  const auto numeric = finite_diff_grad(loss, values, 1e-5);
  for (std::size_t i = 0; i < values.size(); ++i)
    EXPECT_LE(oracle::grad_rel_error(tape.grad(g.params[i]), numeric[i]), 1e-5) << i;
}

TEST(PrefixLM, ObjectiveRejectsMismatchedEncoderLength) {
  const PrefixLM<double> lm({16, 8, 4, 4}, 5);
  LossWeights w;
  w.encoder_len = 3;
  Tape<double> tape;
  EXPECT_THROW(lm.objective(tape, std::vector<int>{1, 2, 3, 4, 5}, w, 0), std::invalid_argument);
}

}  // namespace
}  // namespace jrt
