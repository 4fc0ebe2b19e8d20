#include <cmath>

#include <gtest/gtest.h>

#include "manidiff/quadrature.hpp"

using namespace manidiff;

TEST(GaussHermite, WeightsFormProbabilityVector) {
  const GaussHermiteRule rule = gauss_hermite(32);
  EXPECT_NEAR(rule.weights.sum(), 1.0, 1e-14);
  EXPECT_GT(rule.weights.minCoeff(), 0.0);
}

TEST(GaussHermite, StandardNormalMoments) {
  const GaussHermiteRule rule = gauss_hermite(40);
  EXPECT_NEAR(expect_normal(rule, [](double z) { return z; }), 0.0, 1e-14);
  EXPECT_NEAR(expect_normal(rule, [](double z) { return z * z; }), 1.0, 1e-13);
  EXPECT_NEAR(expect_normal(rule, [](double z) { return std::pow(z, 4); }), 3.0, 1e-12);
  EXPECT_NEAR(expect_normal(rule, [](double z) { return std::pow(z, 6); }), 15.0, 1e-11);
  // E[cos z] = exp(-1/2).
  EXPECT_NEAR(expect_normal(rule, [](double z) { return std::cos(z); }), std::exp(-0.5), 1e-14);
}

TEST(GaussHermite, TwoDimensionalProductRule) {
  const GaussHermiteRule rule = gauss_hermite(30);
  EXPECT_NEAR(expect_normal_2d(rule, [](double a, double b) { return a * a * b * b; }), 1.0, 1e-12);
  // E[exp(a + b / 2)] = exp(1/2 + 1/8).
  EXPECT_NEAR(expect_normal_2d(rule, [](double a, double b) { return std::exp(a + 0.5 * b); }),
              std::exp(0.625), 1e-12);
}
