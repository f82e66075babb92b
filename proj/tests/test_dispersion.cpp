#include <gtest/gtest.h>

#include <cmath>

#include "epiwave/dispersion.hpp"

using namespace epiwave;

// Reference minima below come from a 30-digit minimization of the closed
// forms c(alpha) = (S0 tau0 mgf(alpha) - gamma0) / (gamma0 alpha) etc.

TEST(Dispersion, DefaultPresetMatchesClosedFormMinimum) {
  const auto m = build_rate_model(ConstantRates{2.0, 1.0}, 0.02);
  const auto d = solve_c_star(m, Kernel::gaussian(1.0), 1.0);
  EXPECT_NEAR(d.c_star, 2.1928038406031809, 1e-8 * 2.19);
  EXPECT_NEAR(d.alpha_star, 0.79764826936493836, 1e-5);
  EXPECT_LT(d.residual, 1e-8);
  EXPECT_LT(std::abs(d.derivative), 1e-6);
  EXPECT_EQ(d.local_minima, 1u);
}

TEST(Dispersion, LaplaceMinimumIsInterior) {
  const auto m = build_rate_model(ConstantRates{2.0, 1.0}, 0.02);
  const auto d = solve_c_star(m, Kernel::laplace(0.5), 1.0);
  EXPECT_NEAR(d.c_star, 1.6650953383927806, 1e-8 * 1.67);
  EXPECT_NEAR(d.alpha_star, 0.97173654351329136, 1e-5);
  EXPECT_GT(d.alpha_star, 0.0);
  EXPECT_LT(d.alpha_star, 2.0);
}

TEST(Dispersion, FiniteAgePresetMatchesQuadratureOracle) {
  const auto m = build_rate_model(FiniteAgeRates{3.0, 1.0}, 0.01);
  const auto d = solve_c_star(m, Kernel::gaussian(1.0), 1.0);
  EXPECT_NEAR(d.c_star, 3.3696140971057151, 1e-6 * 3.37);
  EXPECT_NEAR(d.alpha_star, 0.74102451558348109, 1e-4);
}

TEST(Dispersion, AlphaCIsTheSmallerRoot) {
  const auto m = build_rate_model(ConstantRates{2.0, 1.0}, 0.02);
  const auto k = Kernel::gaussian(1.0);
  const auto d = solve_c_star(m, k, 1.0);
  const double a15 = alpha_c(m, k, 1.0, d, 1.5 * d.c_star);
  const double a2 = alpha_c(m, k, 1.0, d, 2.0 * d.c_star);
  EXPECT_NEAR(a15, 0.34026326917665002, 1e-7);
  EXPECT_NEAR(a2, 0.24151458034282364, 1e-7);
  EXPECT_LT(a2, a15);
  EXPECT_LT(a15, d.alpha_star);
  EXPECT_NEAR(phi_c(m, k, 1.0, 2.0 * d.c_star, a2), 1.0, 1e-10);
}

TEST(Dispersion, PhiIsDecreasingInSpeedAndConvexInAlpha) {
  const auto m = build_rate_model(ConstantRates{2.0, 1.0}, 0.02);
  const auto k = Kernel::gaussian(1.0);
  for (double a : {0.2, 0.8, 1.5}) {
    double prev = kInf;
    for (double c = 0.5; c < 50.0; c *= 1.7) {
      const double v = phi_c(m, k, 1.0, c, a);
      EXPECT_LT(v, prev);
      prev = v;
    }
    EXPECT_LT(phi_c(m, k, 1.0, 1e6, a), 1e-4);
  }
  const double c = 3.0, h = 0.05;
  for (double a = 0.1; a < 2.0; a += 0.1)
    EXPECT_GT(phi_c(m, k, 1.0, c, a + h) - 2.0 * phi_c(m, k, 1.0, c, a) + phi_c(m, k, 1.0, c, a - h), 0.0);
}

TEST(Dispersion, SpeedCurveMinimumIsCStar) {
  const auto m = build_rate_model(ConstantRates{2.0, 1.0}, 0.02);
  const auto k = Kernel::gaussian(1.0);
  const auto d = solve_c_star(m, k, 1.0);
  for (double a = 0.05; a < 3.0; a += 0.05) EXPECT_GE(c_of_alpha(m, k, 1.0, a), d.c_star * (1.0 - 1e-12));
}

TEST(Dispersion, LargerS0GivesFasterWaves) {
  const auto m = build_rate_model(ConstantRates{2.0, 1.0}, 0.02);
  const auto k = Kernel::gaussian(1.0);
  double prev = 0.0;
  for (double S0 : {0.6, 1.0, 2.0, 4.0}) {
    const double c = solve_c_star(m, k, S0).c_star;
    EXPECT_GT(c, prev);
    prev = c;
  }
}
