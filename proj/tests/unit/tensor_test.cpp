#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "jrt/tensor.hpp"
#include "oracles.hpp"

namespace jrt {
namespace {

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  std::mt19937_64 gen(1);
  const auto x = oracle::random_matrix(2, 5, gen);
  EXPECT_EQ(matmul(Tensor<double>::identity(2), x).storage(), x.storage());
}

TEST(Matmul, HandArithmetic) {
  const auto a = Tensor<double>::matrix({{1, 2}, {3, 4}});
  const auto b = Tensor<double>::matrix({{5, 6}, {7, 8}});
  EXPECT_EQ(matmul(a, b).storage(), (std::vector<double>{19, 22, 43, 50}));
}

TEST(Matmul, MatchesTripleLoopOracle) {
  std::mt19937_64 gen(7);
  const auto a = oracle::random_matrix(7, 5, gen);
  const auto b = oracle::random_matrix(5, 3, gen);
  EXPECT_LE(max_rel_error(matmul(a, b), oracle::matmul(a, b)), 1e-12);
}

TEST(Matmul, ParallelIsBitwiseSerial) {
  std::mt19937_64 gen(8);
  const auto a = oracle::random_matrix(37, 19, gen);
  const auto b = oracle::random_matrix(19, 23, gen);
  EXPECT_EQ(matmul(a, b, Exec::parallel).storage(), matmul(a, b, Exec::serial).storage());
}

TEST(Matmul, ShapeMismatchThrows) {
  EXPECT_THROW(matmul(Tensor<double>({2, 3}), Tensor<double>({2, 3})), ShapeError);
}

TEST(Matmul, AssociativeWithIdentity) {
  std::mt19937_64 gen(9);
  const auto a = oracle::random_matrix(4, 3, gen);
  const auto b = oracle::random_matrix(3, 5, gen);
  const auto i3 = Tensor<double>::identity(3);
  EXPECT_EQ(matmul(matmul(a, i3), b).storage(), matmul(a, matmul(i3, b)).storage());
}

TEST(CumsumRows, SmallExample) {
  const auto x = Tensor<double>::matrix({{1, 1}, {2, 2}, {3, 3}});
  EXPECT_EQ(cumsum_rows(x).storage(), (std::vector<double>{1, 1, 3, 3, 6, 6}));
}

TEST(CumsumRows, EmptyInput) {
  const Tensor<double> x({0, 4});
  EXPECT_TRUE(cumsum_rows(x).empty());
}

TEST(CumsumRows, MatchesSequentialAccumulatorExactly) {
  std::mt19937_64 gen(3);
  const auto x = oracle::random_matrix(50, 6, gen);
  EXPECT_EQ(cumsum_rows(x).storage(), oracle::cumsum_rows(x).storage());
  EXPECT_EQ(cumsum_rows(x, Exec::parallel).storage(), oracle::cumsum_rows(x).storage());
}

TEST(CumsumRows, LastRowEqualsColumnSums) {
  std::mt19937_64 gen(4);
  const auto x = oracle::random_matrix(20, 5, gen);
  const auto c = cumsum_rows(x);
  const auto sums = column_sums(x);
  for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(c(19, j), sums[j]);
}

TEST(Tensor, RankAboveThreeThrows) {
  EXPECT_THROW(Tensor<double>({1, 1, 1, 1}), ShapeError);
}

TEST(Tensor, DataLengthMustMatchShape) {
  EXPECT_THROW(Tensor<double>({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
}

TEST(Tensor, RequireFiniteNamesTheTensor) {
  Tensor<double> t({2});
  t[1] = std::nan("");
  EXPECT_FALSE(t.all_finite());
  EXPECT_THROW(t.require_finite("x"), NumericError);
}

TEST(Activations, FiniteOverTestedRange) {
  for (double x = -1e3; x <= 1e3; x += 0.5) {
    EXPECT_TRUE(std::isfinite(gelu(x)));
    EXPECT_TRUE(std::isfinite(gelu_derivative(x)));
    EXPECT_TRUE(std::isfinite(silu(x)));
    EXPECT_TRUE(std::isfinite(silu_derivative(x)));
  }
}

TEST(Activations, GeluTanhForm) {
  for (double x : {-3.0, -0.5, 0.0, 0.1, 2.0}) {
    const double want =
        0.5 * x * (1.0 + std::tanh(std::sqrt(2.0 / std::acos(-1.0)) * (x + 0.044715 * x * x * x)));
    EXPECT_NEAR(gelu(x), want, 1e-15);
  }
}

TEST(Activations, DerivativesMatchCentralDifferences) {
  const double h = 1e-5;
  for (double x : {-2.0, -0.3, 0.0, 0.7, 3.0}) {
    EXPECT_NEAR(gelu_derivative(x), (gelu(x + h) - gelu(x - h)) / (2 * h), 1e-9);
    EXPECT_NEAR(silu_derivative(x), (silu(x + h) - silu(x - h)) / (2 * h), 1e-9);
  }
}

TEST(CrossEntropy, UniformLogitsGiveLogClassesAndSoftmaxGradient) {
  const std::size_t c = 5;
  const Tensor<double> logits({1, c});
  const std::vector<int> labels{2};
  const auto ce = softmax_cross_entropy(logits, labels);
  EXPECT_NEAR(ce.loss, std::log(5.0), 1e-15);
  for (std::size_t j = 0; j < c; ++j)
    EXPECT_NEAR(ce.grad[j], 1.0 / c - (j == 2 ? 1.0 : 0.0), 1e-15);
}

TEST(CrossEntropy, IgnoredRowsCarryNoLossOrGradient) {
  std::mt19937_64 gen(5);
  const auto logits = oracle::random_matrix(3, 4, gen);
  const std::vector<int> labels{kIgnoreLabel, 1, kIgnoreLabel};
  const auto ce = softmax_cross_entropy(logits, labels);
  EXPECT_EQ(ce.counted, 1u);
  for (std::size_t j = 0; j < 4; ++j) {
    EXPECT_EQ(ce.grad(0, j), 0.0);
    EXPECT_EQ(ce.grad(2, j), 0.0);
  }
}

TEST(CrossEntropy, StableForLargeLogits) {
  const auto logits = Tensor<double>::matrix({{1000.0, -1000.0, 0.0}});
  const std::vector<int> labels{0};
  const auto ce = softmax_cross_entropy(logits, labels);
  EXPECT_TRUE(std::isfinite(ce.loss));
  EXPECT_NEAR(ce.loss, 0.0, 1e-12);
}

TEST(ArgmaxRows, PicksFirstMaximum) {
  const auto x = Tensor<double>::matrix({{1, 3, 3}, {5, 0, 1}});
  EXPECT_EQ(argmax_rows(x), (std::vector<std::size_t>{1, 0}));
}

}  // namespace
}  // namespace jrt
