#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "epiwave/spread.hpp"

using namespace epiwave;

namespace {

std::vector<double> step_profile(const SpatialGrid& g, double front, double width) {
  std::vector<double> f(g.size());
  for (std::size_t j = 0; j < f.size(); ++j) f[j] = 0.5 * std::erfc((std::abs(g.x(j)) - front) / width);
  return f;
}

} // namespace

TEST(Spread, FrontOfALinearRampIsExact) {
  const SpatialGrid g(10.0, 0.1);
  std::vector<double> f(g.size());
  for (std::size_t j = 0; j < f.size(); ++j) f[j] = std::clamp(1.0 - 0.25 * (g.x(j) - 2.0), 0.0, 1.0);
  EXPECT_NEAR(front_position(f, g, 0.5), 4.0, 1e-12);
  EXPECT_NEAR(front_position(f, g, 0.3), 4.8, 1e-12);
}

TEST(Spread, FrontIsNanWithoutCrossingOrAtTheEdge) {
  const SpatialGrid g(5.0, 0.1);
  std::vector<double> low(g.size(), 0.1), full(g.size(), 0.9);
  EXPECT_TRUE(std::isnan(front_position(low, g, 0.5)));
  EXPECT_TRUE(std::isnan(front_position(full, g, 0.5)));
}

TEST(Spread, IsolatedSpikesAreIgnored) {
  const SpatialGrid g(10.0, 0.1);
  auto f = step_profile(g, 3.0, 0.5);
  f[g.size() - 20] = 1.0; // single-cell spike far ahead
  EXPECT_NEAR(front_position(f, g, 0.5), 3.0, 0.01);
}

TEST(Spread, SpeedOfASyntheticFrontIsRecovered) {
  const SpatialGrid g(60.0, 0.05);
  FrontTracker tr(0.5, 1.0, 0.8);
  std::mt19937 rng(3);
  std::normal_distribution<double> noise(0.0, 1e-3);
  for (int n = 0; n <= 400; ++n) {
    const double t = 0.1 * n;
    tr.record(t, step_profile(g, 5.0 + 1.3 * t + noise(rng), 1.0), g);
  }
  const auto e = estimate_speed(tr.trajectory(), 0.5, 10.0);
  EXPECT_NEAR(e.speed, 1.3, 1e-3);
  EXPECT_TRUE(e.accepted());
  EXPECT_GE(e.t_begin, 10.0);
  EXPECT_EQ(tr.trajectory().retreats_after(0.0), 0u);
}

TEST(Spread, TooFewPointsAreANumericalFailure) {
  FrontTrajectory t;
  t.times = {0.0, 1.0, 2.0};
  t.positions = {0.0, 1.0, 2.0};
  EXPECT_THROW(estimate_speed(t), NumericalError);
  EXPECT_THROW(FrontTracker(1.0, 1.0, 0.5), ConfigError);
}

TEST(Spread, BurnInFollowsTheOnsetAge) {
  const auto m = build_rate_model(ConstantRates{2.0, 1.0}, 0.02);
  InitialData d;
  d.I0 = Bump{};
  EXPECT_DOUBLE_EQ(positivity_onset_age(m, *d.I0), 0.0);
  EXPECT_DOUBLE_EQ(speed_burn_in(m, d), 10.0);
  d.I0->i_lo = 7.0;
  d.I0->i_hi = 8.0;
  EXPECT_DOUBLE_EQ(speed_burn_in(m, d), 14.0);

  TabulatedRates t{{0.0, 1.0, 2.0, 10.0}, {1.0, 1.0, 0.0, 0.0}, {1.0, 1.0, 1.0, 1.0}, {}};
  const auto mt = build_rate_model(t, 0.02);
  Bump late;
  late.i_lo = 3.0;
  late.i_hi = 4.0;
  EXPECT_TRUE(std::isnan(positivity_onset_age(mt, late)));
}

TEST(Spread, SimulatedFrontAdvancesAndMatchesStationaryCore) {
  const auto m = build_rate_model(ConstantRates{2.0, 1.0}, 0.02);
  const auto k = Kernel::gaussian(1.0);
  InitialData d;
  d.I0 = Bump{};
  VolterraSolver s(m, k, 1.0, SimGrid{0.02, 0.05, 80.0, 20.0}, d);
  const double rs = solve_rho_star(basic_reproduction_number(m, 1.0));
  FrontTracker tr(0.5, 1.0, rs);
  s.run([&](std::size_t, std::span<const double> phi) { tr.record(s.time(), phi, s.space()); });
  EXPECT_EQ(tr.trajectory().retreats_after(5.0), 0u);
  const auto e = estimate_speed(tr.trajectory(), 0.5, 10.0);
  const double cs = solve_c_star(m, k, 1.0).c_star;
  EXPECT_GT(e.speed, 0.9 * cs);
  EXPECT_LT(e.speed, 1.02 * cs);
  const auto U = solve_U(m, k, 1.0, d.I0, s.space());
  EXPECT_LT(longtime_discrepancy(s, U, 5.0, 2.0), 1e-2);
  EXPECT_LT(sup_density_beyond(s, 70.0), 1e-6);
  // core of the stationary state at the center
  std::vector<double> row(s.space().size());
  for (std::size_t k = 0; k <= 100; k += 25) {
    s.reconstruct_row(k, row);
    EXPECT_NEAR(row[s.space().center()], U.normalized_row(k)[s.space().center()], 1e-3);
  }
  EXPECT_THROW(longtime_discrepancy(s, U, 100.0, 2.0), ConfigError);
}
