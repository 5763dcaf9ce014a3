// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "mnet/errors.hpp"
#include "mnet/numerics.hpp"

using namespace mnet;

TEST(Sigmoid, ReferenceValues) {
  EXPECT_EQ(sigmoid(0.0), 0.5);
  EXPECT_NEAR(sigmoid(40.0), 1.0, 1e-15);
  EXPECT_NEAR(sigmoid(1.0), 0.7310585786300049, 1e-16);
  EXPECT_TRUE(std::isfinite(sigmoid(-700.0)));
  EXPECT_TRUE(std::isfinite(sigmoid(700.0)));
  EXPECT_GT(sigmoid(-700.0), 0.0);
}

TEST(Sigmoid, MonotoneAndSymmetric) {
  Rng rng(5);
  for (int trial = 0; trial < 2000; ++trial) {
    double x = rng.normal(0.0, 10.0);
    double y = x + 1e-6 + rng.uniform();
    EXPECT_LT(sigmoid(x), sigmoid(y)) << x << " " << y;
    EXPECT_NEAR(sigmoid(x) + sigmoid(-x), 1.0, 1e-15);
  }
}

TEST(Dot, Examples) {
  EXPECT_EQ(dot(Vec{1, 0, 0}, Vec{0, 1, 0}), 0.0);
  EXPECT_EQ(dot(Vec{3, 4}, Vec{3, 4}), 25.0);

  Rng rng(42);
  Vec a(8), b(8);
  for (auto& x : a) x = rng.normal();
  for (auto& x : b) x = rng.normal();
  double loop = 0.0;
  for (int i = 0; i < 8; ++i) loop += a[i] * b[i];
  EXPECT_EQ(dot(a, b), loop);
}

TEST(Dot, DimensionMismatchIsConfigError) {
  EXPECT_THROW(dot(Vec{1, 2}, Vec{1, 2, 3}), ConfigError);
}

TEST(Cosine, Examples) {
  const Vec v{0.3, -1.2, 2.5};
  const Vec neg{-0.3, 1.2, -2.5};
  EXPECT_NEAR(cosine_similarity(v, v), 1.0, 1e-15);
  EXPECT_NEAR(cosine_similarity(v, neg), -1.0, 1e-15);
  EXPECT_NEAR(cosine_similarity(Vec{1, 0}, Vec{1, 1}), 0.7071067811865475, 1e-15);
  EXPECT_THROW(cosine_similarity(Vec{0, 0}, Vec{1, 1}), DegenerateError);
}

TEST(Cosine, ScaleInvariant) {
  Rng rng(8);
  for (int trial = 0; trial < 500; ++trial) {
    Vec a(6), b(6);
    for (auto& x : a) x = rng.normal();
    for (auto& x : b) x = rng.normal();
    const double la = 0.01 + 10 * rng.uniform(), lb = 0.01 + 10 * rng.uniform();
    Vec sa = a, sb = b;
    for (auto& x : sa) x *= la;
    for (auto& x : sb) x *= lb;
    EXPECT_NEAR(cosine_similarity(a, b), cosine_similarity(sa, sb), 1e-12);
  }
}

TEST(CrossEntropy, Examples) {
  EXPECT_NEAR(softmax_cross_entropy(Vec{0.7, 0.7, 0.7, 0.7}, 2).loss, std::log(4.0), 1e-12);
  EXPECT_LT(softmax_cross_entropy(Vec{10, -10}, 0).loss, 1e-8);
  EXPECT_THROW(softmax_cross_entropy(Vec{1, 2}, 2), ProtocolError);
}

TEST(CrossEntropy, GradientMatchesFiniteDifferences) {
  Rng rng(7);
  Vec logits(5);
  for (auto& x : logits) x = rng.normal(0.0, 2.0);
  const std::size_t target = 3;
  const auto ce = softmax_cross_entropy(logits, target);
  for (std::size_t k = 0; k < logits.size(); ++k) {
    Vec up = logits, down = logits;
    up[k] += 1e-5;
    down[k] -= 1e-5;
    const double fd = (softmax_cross_entropy(up, target).loss - softmax_cross_entropy(down, target).loss) / 2e-5;
    EXPECT_LT(std::fabs(fd - ce.grad[k]) / std::max(1.0, std::fabs(fd)), 1e-7);
  }
}

TEST(CrossEntropy, GradientSumsToZero) {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    Vec logits(2 + trial % 9);
    for (auto& x : logits) x = rng.normal(0.0, 5.0);
    const auto ce = softmax_cross_entropy(logits, trial % logits.size());
    double total = 0.0;
    for (double g : ce.grad) total += g;
    EXPECT_NEAR(total, 0.0, 1e-12);
  }
}

TEST(GradCheck, QuadraticIsExact) {
  Vec x{3.0};
  const Vec grad{6.0};
  auto f = [](std::span<const double> p) { return p[0] * p[0]; };
  EXPECT_LT(grad_check(f, x, grad, 1e-5), 1e-9);
  EXPECT_EQ(x[0], 3.0);
}

TEST(GradCheck, DetectsScaledGradient) {
  Vec x{3.0};
  const Vec wrong{12.0};
  auto f = [](std::span<const double> p) { return p[0] * p[0]; };
  EXPECT_NEAR(grad_check(f, x, wrong, 1e-5), 0.5, 1e-6);
}

TEST(GradCheck, SoftmaxComposite) {
  Rng rng(21);
  Vec logits(6);
  for (auto& x : logits) x = rng.normal();
  const auto ce = softmax_cross_entropy(logits, 1);
  auto f = [](std::span<const double> p) { return softmax_cross_entropy(p, 1).loss; };
  EXPECT_LT(grad_check(f, logits, ce.grad, 1e-5), 1e-6);
}

TEST(GradCheck, RejectsBadStepAndNonFinite) {
  Vec x{1.0};
  const Vec g{0.0};
  auto f = [](std::span<const double>) { return 0.0; };
  EXPECT_THROW(grad_check(f, x, g, 1e-2), ConfigError);
  auto bad = [](std::span<const double> p) { return p[0] > 1.0 ? NAN : 0.0; };
  EXPECT_THROW(grad_check(bad, x, g, 1e-5), OracleError);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(99), b(99);
  for (int i = 0; i < 1000; ++i) {
    ASSERT_EQ(a.next_u64(), b.next_u64());
    ASSERT_EQ(a.normal(), b.normal());
    ASSERT_EQ(a.uniform_index(17), b.uniform_index(17));
  }
  Rng c(100);
  EXPECT_NE(Rng(99).next_u64(), c.next_u64());
}

TEST(Rng, NormalMoments) {
  Rng rng(3);
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal(1.0, 2.0);
    s += x;
    s2 += x * x;
  }
  const double mean = s / n;
  EXPECT_NEAR(mean, 1.0, 0.02);
  EXPECT_NEAR(s2 / n - mean * mean, 4.0, 0.05);
}

TEST(Spearman, TiesAndDegenerate) {
  EXPECT_NEAR(spearman(Vec{1, 2, 3}, Vec{10, 20, 30}), 1.0, 1e-15);
  EXPECT_NEAR(spearman(Vec{1, 2, 3}, Vec{3, 2, 1}), -1.0, 1e-15);
  // ranks (3,2,1) vs (2.5,2.5,1): 1.5 / sqrt(2 * 1.5)
  EXPECT_NEAR(spearman(Vec{0.9, 0.5, 0.1}, Vec{1, 1, 0}), 1.5 / std::sqrt(3.0), 1e-15);
  EXPECT_TRUE(std::isnan(spearman(Vec{1, 2}, Vec{1, 1})));
}
