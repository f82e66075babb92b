#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "epiwave/waves.hpp"

using namespace epiwave;

namespace {

struct DefaultWaveModel {
  RateModel model = build_rate_model(ConstantRates{2.0, 1.0}, 0.02);
  Kernel kernel = Kernel::gaussian(1.0);
  DispersionResult d = solve_c_star(model, kernel, 1.0);
};

} // namespace

TEST(Waves, SupercriticalProfileSolvesAndDecaysAtAlphaC) {
  DefaultWaveModel s;
  const double c = 2.0 * s.d.c_star;
  const auto p = solve_wave(c, s.model, s.kernel, 1.0, s.d);
  EXPECT_EQ(p.regime, WaveRegime::supercritical);
  EXPECT_LT(p.residual, 1e-8);
  EXPECT_LE(p.age_step, 0.005 + 1e-15);
  EXPECT_EQ(p.bracket_violations, 0u);
  EXPECT_EQ(p.monotonicity_violations, 0u);
  const double ac = alpha_c(s.model, s.kernel, 1.0, s.d, c);
  EXPECT_NEAR(p.fitted_rate, ac, 0.02 * ac);
  // nonincreasing, anchored at rho*/2, rho* on the left
  for (std::size_t j = 1; j < p.chi.size(); ++j) ASSERT_LE(p.chi[j], p.chi[j - 1] + 1e-12);
  EXPECT_NEAR(p.at(0.0), 0.5 * p.rho_star, 1e-6);
  EXPECT_NEAR(p.chi.front(), p.rho_star, 1e-8);
}

TEST(Waves, LaplaceKernelWave) {
  RateModel model = build_rate_model(ConstantRates{2.0, 1.0}, 0.01);
  const auto kernel = Kernel::laplace(0.5);
  const auto d = solve_c_star(model, kernel, 1.0);
  WaveOptions o;
  o.grid.Z = 100.0;
  const auto p = solve_wave(1.5 * d.c_star, model, kernel, 1.0, d, o);
  EXPECT_LT(p.residual, 1e-8);
  const double ac = alpha_c(model, kernel, 1.0, d, 1.5 * d.c_star);
  EXPECT_NEAR(p.fitted_rate, ac, 0.02 * ac);
}

TEST(Waves, SlowSpeedsAndSubcriticalModelsAreRejected) {
  DefaultWaveModel s;
  EXPECT_THROW(solve_wave(0.9 * s.d.c_star, s.model, s.kernel, 1.0, s.d), ConfigError);
  const auto sub = build_rate_model(ConstantRates{1.0, 2.0}, 0.02);
  EXPECT_THROW(build_bracket(3.0, s.d, sub, s.kernel, 1.0), ConfigError);
}

TEST(Waves, BracketIsOrdered) {
  DefaultWaveModel s;
  for (double f : {1.0, 1.5, 3.0}) {
    const auto b = build_bracket(f * s.d.c_star, s.d, s.model, s.kernel, 1.0);
    for (double z = -50.0; z < 80.0; z += 0.1) {
      EXPECT_LE(b.sub(z), b.super(z) + 1e-15);
      EXPECT_GE(b.sub(z), 0.0);
      EXPECT_LE(b.super(z), b.rho_star);
    }
    EXPECT_DOUBLE_EQ(b.super(-50.0), b.rho_star);
  }
}

TEST(Waves, OperatorFixesRhoStarAndIsMonotone) {
  DefaultWaveModel s;
  WaveGrid g;
  g.Z = 100.0;
  g.dz = 0.05;
  const double rs = solve_rho_star(basic_reproduction_number(s.model, 1.0));
  WaveOperator op(s.model, s.kernel, 1.0, 3.0, g, 0.0);
  const std::size_t n = g.size();
  std::vector<double> flat(n, rs), out(n);
  auto pad = [&](double) { return rs; };
  op.apply(flat, out, pad, pad);
  // total_mass is the quadrature R0
  for (double v : out) EXPECT_NEAR(v, 1.0 - std::exp(-op.total_mass() * rs), 1e-13);
  EXPECT_NEAR(op.total_mass(), basic_reproduction_number(s.model, 1.0), 1e-12);

  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> lo(n), hi(n), tlo(n), thi(n);
  auto zero = [](double) { return 0.0; };
  for (int trial = 0; trial < 5; ++trial) {
    for (std::size_t j = 0; j < n; ++j) {
      lo[j] = u(rng) * 0.5;
      hi[j] = lo[j] + u(rng) * 0.5;
    }
    op.apply(lo, tlo, zero, zero);
    op.apply(hi, thi, zero, zero);
    for (std::size_t j = 0; j < n; ++j) ASSERT_LE(tlo[j], thi[j] + 1e-14);
  }
}

TEST(Waves, FieldRowShiftsTheProfileAlongAge) {
  DefaultWaveModel s;
  const auto p = solve_wave(2.0 * s.d.c_star, s.model, s.kernel, 1.0, s.d);
  const auto r0 = wave_field_row(p, s.model, 1.0, 0);
  for (std::size_t j = 0; j < r0.size(); j += 97) EXPECT_NEAR(r0[j], p.chi[j], 1e-14);
  const std::size_t k = 50; // age 1
  const auto rk = wave_field_row(p, s.model, 1.0, k);
  const double pk = s.model.pi()[k];
  for (std::size_t j = 0; j + 2000 < rk.size(); j += 97) EXPECT_NEAR(rk[j], pk * p.at(p.z[j] + p.c * 1.0), 1e-12);
}

TEST(Waves, ProfileIsInsensitiveToTheWindowAndTailsOrderBySpeed) {
  DefaultWaveModel s;
  WaveOptions narrow, wide;
  narrow.grid.Z = 150.0;
  wide.grid.Z = 300.0;
  const auto a = solve_wave(1.5 * s.d.c_star, s.model, s.kernel, 1.0, s.d, narrow);
  const auto b = solve_wave(1.5 * s.d.c_star, s.model, s.kernel, 1.0, s.d, wide);
  double diff = 0.0;
  for (double z = -50.0; z <= 50.0; z += 0.25) diff = std::max(diff, std::abs(a.at(z) - b.at(z)));
  EXPECT_LT(diff, 1e-6);
  const auto fast = solve_wave(2.0 * s.d.c_star, s.model, s.kernel, 1.0, s.d, narrow);
  EXPECT_GT(a.fitted_rate, fast.fitted_rate);
}
