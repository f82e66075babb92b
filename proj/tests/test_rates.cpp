#include <gtest/gtest.h>

#include <cmath>

#include "epiwave/rates.hpp"

using namespace epiwave;

TEST(Rates, ConstantPresetClosedForms) {
  const auto m = build_rate_model(ConstantRates{2.0, 1.0}, 0.01);
  const auto ages = m.ages();
  for (std::size_t k = 0; k < m.size(); k += 97) {
    EXPECT_NEAR(m.pi()[k], std::exp(-ages[k]), 1e-15);
    EXPECT_NEAR(m.omega()[k], 2.0 * std::exp(-ages[k]), 1e-15);
  }
  EXPECT_FALSE(std::isfinite(m.i_dagger()));
  // omitted tail below 1e-8 of the integral
  EXPECT_LT(std::exp(-m.age_max()), 1e-8);
}

TEST(Rates, FiniteAgePresetSurvivalIsLinear) {
  const auto m = build_rate_model(FiniteAgeRates{1.0, 1.0}, 0.001);
  EXPECT_EQ(m.size(), 1001u);
  for (std::size_t k = 0; k < m.size(); k += 50) EXPECT_NEAR(m.pi()[k], 1.0 - m.ages()[k], 1e-12);
  EXPECT_EQ(m.pi().back(), 0.0);
  EXPECT_EQ(m.omega().back(), 0.0);
}

TEST(Rates, TabulatedGammaMatchesTrapezoidSurvival) {
  TabulatedRates t;
  for (int k = 0; k <= 200; ++k) {
    const double a = 0.01 * k;
    t.ages.push_back(a);
    t.gamma.push_back(a);
    t.tau.push_back(1.0);
  }
  const auto m = build_rate_model(t, 1e-4);
  const std::size_t k1 = 10000;
  ASSERT_NEAR(m.ages()[k1], 1.0, 1e-12);
  EXPECT_NEAR(m.pi()[k1], std::exp(-0.5), 1e-6);
}

TEST(Rates, TabulatedPiInputRecoversGamma) {
  TabulatedRates t;
  for (int k = 0; k <= 100; ++k) {
    const double a = 0.05 * k;
    t.ages.push_back(a);
    t.pi.push_back(std::exp(-0.5 * a));
    t.tau.push_back(1.0);
  }
  const auto m = build_rate_model(t, 0.05);
  for (std::size_t k = 0; k + 1 < m.size(); ++k) EXPECT_NEAR(m.gamma()[k], 0.5, 1e-9);
}

TEST(Rates, InvalidInputsAreRejected) {
  EXPECT_THROW(build_rate_model(ConstantRates{-1.0, 1.0}, 0.01), ConfigError);
  EXPECT_THROW(build_rate_model(FiniteAgeRates{1.0, 1.0}, 1.0), ConfigError);
  EXPECT_THROW(build_rate_model(FiniteAgeRates{1.0, 1.0}, 0.3), ConfigError);
  TabulatedRates bad;
  bad.ages = {0.0, 1.0, 2.0};
  bad.tau = {1.0, 1.0, 1.0};
  bad.pi = {1.0, 0.5, 0.7};
  EXPECT_THROW(build_rate_model(bad, 0.1), ConfigError);
  bad.pi = {1.0, -0.5, -0.7};
  EXPECT_THROW(build_rate_model(bad, 0.1), ConfigError);
  bad.pi = {1.0, 0.5, 0.2};
  bad.tau = {1.0, -1.0, 1.0};
  EXPECT_THROW(build_rate_model(bad, 0.1), ConfigError);
}

TEST(Rates, BasicReproductionNumberExamples) {
  EXPECT_NEAR(basic_reproduction_number(build_rate_model(ConstantRates{2.0, 1.0}, 0.01), 1.0), 2.0, 2e-8);
  EXPECT_NEAR(basic_reproduction_number(build_rate_model(ConstantRates{1.0, 2.0}, 0.01), 1.0), 0.5, 5e-9);
  EXPECT_NEAR(basic_reproduction_number(build_rate_model(FiniteAgeRates{1.0, 1.0}, 0.001), 3.0), 1.5, 1.5e-8);
}

TEST(Rates, QuadratureAgreesWithClosedFormToRelative1e8) {
  for (double d : {0.02, 0.01, 0.001}) {
    const auto c = build_rate_model(ConstantRates{2.0, 1.0}, d);
    EXPECT_LT(std::abs(c.omega_integral() / 2.0 - 1.0), 1e-8) << d;
    const auto f = build_rate_model(FiniteAgeRates{1.0, 1.0}, d);
    EXPECT_LT(std::abs(f.omega_integral() / 0.5 - 1.0), 1e-8) << d;
  }
}

TEST(Rates, R0ScalesLinearlyInS0) {
  const auto m = build_rate_model(ConstantRates{2.0, 1.0}, 0.02);
  const double r1 = basic_reproduction_number(m, 1.0);
  EXPECT_NEAR(basic_reproduction_number(m, 2.5), 2.5 * r1, 1e-14);
  EXPECT_THROW(basic_reproduction_number(m, 0.0), ConfigError);
}

TEST(Rates, LaplaceTransformExamples) {
  const auto c = build_rate_model(ConstantRates{2.0, 1.0}, 0.01);
  EXPECT_NEAR(laplace_omega(c, 0.0), 2.0, 1e-8);
  EXPECT_NEAR(laplace_omega(c, 1.0), 1.0, 1e-8);
  const auto f = build_rate_model(FiniteAgeRates{1.0, 1.0}, 0.001);
  EXPECT_NEAR(laplace_omega(f, 1.0), std::exp(-1.0), 1e-10);
  EXPECT_NEAR(*f.closed_form_laplace(1.0), std::exp(-1.0), 1e-15);
  for (double x : {0.0, 1e-7, 0.3, 1.0, 2.0, 7.5, 100.0, 1e4}) {
    const double tol = 1e-8;
    EXPECT_NEAR(laplace_omega(c, x), *c.closed_form_laplace(x), tol * *c.closed_form_laplace(x)) << x;
    EXPECT_NEAR(laplace_omega(f, x), *f.closed_form_laplace(x), tol * *f.closed_form_laplace(x)) << x;
  }
}

TEST(Rates, LaplaceTransformDecreasingAndConvex) {
  for (const RatePreset& p : {RatePreset{ConstantRates{2.0, 1.0}}, RatePreset{FiniteAgeRates{1.0, 1.0}}}) {
    const auto m = build_rate_model(p, 0.01);
    double prev2 = laplace_omega(m, 0.0), prev1 = laplace_omega(m, 0.05);
    EXPECT_LT(prev1, prev2);
    for (int k = 2; k < 200; ++k) {
      const double v = laplace_omega(m, 0.05 * k);
      EXPECT_LT(v, prev1);
      EXPECT_GE(v - 2.0 * prev1 + prev2, -1e-14);
      prev2 = prev1;
      prev1 = v;
    }
  }
}

TEST(Rates, SurvivalRatiosMatchIntegratedGamma) {
  TabulatedRates t;
  for (int k = 0; k <= 40; ++k) {
    const double a = 0.1 * k;
    t.ages.push_back(a);
    t.gamma.push_back(1.0 + 0.5 * std::sin(a));
    t.tau.push_back(1.0);
  }
  const auto m = build_rate_model(t, 0.01);
  const auto ages = m.ages();
  for (std::size_t a = 0; a < m.size(); a += 37)
    for (std::size_t b = a + 11; b < m.size(); b += 53) {
      // int_{i_a}^{i_b} gamma in closed form for the interpolant's smooth parent
      const double integral = (ages[b] - ages[a]) - 0.5 * (std::cos(ages[b]) - std::cos(ages[a]));
      EXPECT_NEAR(m.pi()[b] / m.pi()[a], std::exp(-integral), 2e-4);
    }
}
