#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "epiwave/volterra.hpp"

using namespace epiwave;

namespace {

RateModel default_model() { return build_rate_model(ConstantRates{2.0, 1.0}, 0.02); }

InitialData source_only(double height = 1.0) {
  InitialData d;
  d.I0 = Bump{};
  d.I0->height = height;
  return d;
}

} // namespace

TEST(Volterra, ZeroDataStaysZeroWithNotice) {
  VolterraSolver s(default_model(), Kernel::gaussian(1.0), 1.0, SimGrid{0.02, 0.05, 10.0, 1.0}, InitialData{});
  s.run();
  for (double v : s.phi()) EXPECT_EQ(v, 0.0);
  ASSERT_FALSE(s.notices().empty());
  EXPECT_EQ(s.notices().front().rfind("trivial dynamics", 0), 0u);
}

TEST(Volterra, ImplicitStepConditionIsEnforced) {
  const auto m = build_rate_model(ConstantRates{60.0, 1.0}, 0.02);
  EXPECT_THROW(VolterraSolver(m, Kernel::gaussian(1.0), 1.0, SimGrid{0.02, 0.05, 10.0, 1.0}, source_only()), ConfigError);
}

TEST(Volterra, AgeStepMustMatchTimeStep) {
  EXPECT_THROW(VolterraSolver(default_model(), Kernel::gaussian(1.0), 1.0, SimGrid{0.01, 0.05, 10.0, 1.0}, source_only()),
               ConfigError);
}

TEST(Volterra, BoundaryTraceStaysInRangeAndIsSymmetric) {
  VolterraSolver s(default_model(), Kernel::gaussian(1.0), 1.0, SimGrid{0.02, 0.05, 45.0, 5.0}, source_only());
  s.run([&](std::size_t, std::span<const double> phi) {
    const std::size_t N = phi.size();
    for (std::size_t j = 0; j < N; ++j) {
      ASSERT_GE(phi[j], 0.0);
      ASSERT_LE(phi[j], 1.0);
      ASSERT_NEAR(phi[j], phi[N - 1 - j], 1e-13);
    }
  });
}

// With a constant source and no initial density the solution increases in time.
TEST(Volterra, SourceOnlyTraceIsNondecreasingInTime) {
  VolterraSolver s(default_model(), Kernel::gaussian(1.0), 1.0, SimGrid{0.02, 0.05, 45.0, 6.0}, source_only());
  std::vector<double> prev(s.phi().begin(), s.phi().end());
  s.run([&](std::size_t n, std::span<const double> phi) {
    if (n == 0) return;
    for (std::size_t j = 0; j < phi.size(); ++j) ASSERT_GE(phi[j], prev[j] - 1e-12);
    prev.assign(phi.begin(), phi.end());
  });
}

TEST(Volterra, DoubledSourceDominates) {
  const auto m = default_model();
  const auto k = Kernel::gaussian(1.0);
  const SimGrid g{0.02, 0.05, 45.0, 5.0};
  VolterraSolver a(m, k, 1.0, g, source_only(1.0)), b(m, k, 1.0, g, source_only(2.0));
  while (a.step_index() < a.total_steps()) {
    a.step();
    b.step();
    const auto pa = a.phi(), pb = b.phi();
    for (std::size_t j = 0; j < pa.size(); ++j) ASSERT_GE(pb[j], pa[j] - 1e-12);
  }
}

TEST(Volterra, RecursionMatchesHistorySum) {
  const auto m = default_model();
  const auto k = Kernel::gaussian(1.0);
  const SimGrid g{0.02, 0.05, 45.0, 4.0};
  InitialData data = source_only();
  data.rho0 = Bump{};
  VolterraOptions ro;
  ro.exponential_recursion = true;
  VolterraSolver a(m, k, 1.0, g, data), b(m, k, 1.0, g, data, ro);
  a.run();
  b.run();
  // the recursion sums the same trapezoid history except for the age cut at i_max
  for (std::size_t j = 0; j < a.phi().size(); ++j) EXPECT_NEAR(a.phi()[j], b.phi()[j], 1e-8);
}

TEST(Volterra, RecursionNeedsConstantRates) {
  VolterraOptions ro;
  ro.exponential_recursion = true;
  const auto m = build_rate_model(FiniteAgeRates{1.0, 2.0}, 0.02);
  EXPECT_THROW(VolterraSolver(m, Kernel::gaussian(1.0), 1.0, SimGrid{0.02, 0.05, 10.0, 1.0}, source_only(), ro), ConfigError);
}

// Nobody infected by the source transmits: the field is transported along characteristics.
TEST(Volterra, DisjointSupportsGiveTheTransportedSource) {
  TabulatedRates t;
  for (int k = 0; k <= 10; ++k) {
    t.ages.push_back(0.5 * k);
    t.tau.push_back(k <= 1 ? 2.0 : 0.0);
    t.gamma.push_back(0.5);
  }
  const auto m = build_rate_model(t, 0.02);
  Bump src;
  src.i_lo = 2.0;
  src.i_hi = 3.5;
  src.shape = BumpShape::hat;
  InitialData data;
  data.I0 = src;
  VolterraSolver s(m, Kernel::laplace(0.5), 1.0, SimGrid{0.02, 0.05, 15.0, 3.0}, data);
  const auto ages = m.ages();
  s.run([&](std::size_t n, std::span<const double> phi) {
    for (double v : phi) ASSERT_EQ(v, 0.0);
    if (n % 30 != 0) return;
    const auto f = s.reconstruct(s.age_rows());
    const std::size_t N = s.space().size();
    for (std::size_t k = 0; k < s.age_rows(); ++k)
      for (std::size_t j = 0; j < N; ++j) {
        const double x = s.space().x(j), i = ages[k];
        const double exact = src.age_cumulative(i, x) - (i >= s.time() ? src.age_cumulative(i - s.time(), x) : 0.0);
        ASSERT_NEAR(f[k * N + j], exact, 1e-12);
      }
  });
}

TEST(Volterra, IntegratedDensityMatchesCumulativeOracle) {
  const auto m = default_model();
  const auto k = Kernel::gaussian(1.0);
  const SimGrid g{0.02, 0.05, 45.0, 5.0};
  InitialData data;
  data.rho0 = Bump{};
  VolterraSolver s(m, k, 1.0, g, data);
  std::vector<std::vector<double>> ref;
  cumulative_ode_oracle(m, k, 1.0, s.integrated_density(), g.dx, g.delta, g.steps(),
                        [&](std::size_t, std::span<const double> c) { ref.emplace_back(c.begin(), c.end()); });
  double worst = 0.0;
  s.run([&](std::size_t n, std::span<const double>) {
    if (n % 10 != 0) return;
    const auto c = s.integrated_density();
    for (std::size_t j = 0; j < c.size(); ++j) worst = std::max(worst, std::abs(c[j] - ref[n][j]));
  });
  EXPECT_LT(worst, 1e-3);
}

TEST(Volterra, CumulativeOracleRejectsNonConstantRates) {
  const auto m = build_rate_model(FiniteAgeRates{1.0, 2.0}, 0.02);
  EXPECT_THROW(cumulative_ode_oracle(m, Kernel::gaussian(1.0), 1.0, std::vector<double>(401, 0.0), 0.05, 0.02, 1),
               ConfigError);
}

TEST(Volterra, ReconstructionUsesTheInitialDensityAheadOfTheDiagonal) {
  const auto m = default_model();
  InitialData data;
  data.rho0 = Bump{};
  data.rho0->i_lo = 0.5;
  data.rho0->i_hi = 1.5;
  VolterraSolver s(m, Kernel::gaussian(1.0), 1.0, SimGrid{0.02, 0.05, 10.0, 0.4}, data);
  s.run();
  // ages i >= t carry rho0(i - t) unchanged in the normalized variable
  std::vector<double> row(s.space().size());
  const auto ages = m.ages();
  for (std::size_t k = 40; k < 100; k += 7) {
    s.reconstruct_row(k, row);
    for (std::size_t j = 0; j < row.size(); j += 11)
      EXPECT_NEAR(row[j], (*data.rho0)(ages[k] - 0.4, s.space().x(j)), 1e-12);
  }
}

TEST(Volterra, SubcriticalRunDecays) {
  const auto m = build_rate_model(ConstantRates{1.0, 2.0}, 0.02);
  InitialData data;
  data.rho0 = Bump{};
  VolterraSolver s(m, Kernel::gaussian(1.0), 1.0, SimGrid{0.02, 0.05, 15.0, 20.0}, data);
  s.run();
  EXPECT_LT(*std::max_element(s.phi().begin(), s.phi().end()), 1e-4);
}

TEST(Volterra, TraceIsPositiveOnceTheSourceActs) {
  // i_star = 0 for the default source. Far from the source the trace starts
  // below what the weighted convolution resolves (about 1e-33 here), so the
  // whole grid is checked only once the leading edge has filled it.
  VolterraSolver s(default_model(), Kernel::gaussian(1.0), 1.0, SimGrid{0.02, 0.05, 45.0, 2.5}, source_only());
  s.run([&](std::size_t n, std::span<const double> phi) {
    if (n < 10) return;
    for (std::size_t j = 0; j < phi.size(); ++j) {
      if (n < 100 && std::abs(s.space().x(j)) > 25.0) continue;
      ASSERT_GT(phi[j], 0.0) << "t = " << s.time() << ", x = " << s.space().x(j);
    }
  });
}

TEST(Volterra, NormalizedFieldRespectsItsBound) {
  InitialData data = source_only(0.7);
  data.rho0 = Bump{};
  data.rho0->height = 1.3;
  VolterraSolver s(default_model(), Kernel::gaussian(1.0), 1.0, SimGrid{0.02, 0.05, 45.0, 3.0}, data);
  // max(S0, |rho0/pi|) + |cal_I0| with cal_I0 <= height * (i_hi - i_lo) / 2
  const double bound = std::max(1.0, 1.3) + 0.7 * 0.5;
  s.run([&](std::size_t n, std::span<const double>) {
    if (n % 25 != 0) return;
    for (double v : s.reconstruct(s.age_rows())) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, bound);
    }
  });
}

// The trapezoid history sum is second order: halving delta and dx quarters the change.
TEST(Volterra, GridRefinementConvergesAtSecondOrder) {
  auto run = [](double d, double dx) {
    InitialData data = source_only();
    VolterraSolver s(build_rate_model(ConstantRates{2.0, 1.0}, d), Kernel::gaussian(1.0), 1.0, SimGrid{d, dx, 40.0, 4.0}, data);
    s.run();
    return std::vector<double>(s.phi().begin(), s.phi().end());
  };
  const auto a = run(0.04, 0.1), b = run(0.02, 0.05), c = run(0.01, 0.025);
  double e1 = 0.0, e2 = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) e1 = std::max(e1, std::abs(a[j] - b[2 * j]));
  for (std::size_t j = 0; j < b.size(); ++j) e2 = std::max(e2, std::abs(b[j] - c[2 * j]));
  EXPECT_GT(e1 / e2, 3.0);
  EXPECT_LT(e1 / e2, 5.0);
}

TEST(Volterra, NarrowDomainWarnsAndFrontAtTheEdgeFails) {
  VolterraSolver s(default_model(), Kernel::gaussian(1.0), 1.0, SimGrid{0.02, 0.05, 20.0, 6.0}, source_only());
  ASSERT_FALSE(s.notices().empty());
  EXPECT_EQ(s.notices().back().rfind("warning: X", 0), 0u);
  EXPECT_THROW(s.run(), NumericalError);
}
