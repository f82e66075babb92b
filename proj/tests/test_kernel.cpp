#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "epiwave/kernel.hpp"

using namespace epiwave;

TEST(Kernel, GaussianMgfClosedForm) {
  const auto k = Kernel::gaussian(1.0);
  EXPECT_DOUBLE_EQ(*mgf(k, 0.0), 1.0);
  EXPECT_NEAR(*mgf(k, 2.0), 7.38905609893065, 1e-12);
  EXPECT_TRUE(std::isinf(k.abscissa()));
}

TEST(Kernel, LaplaceMgfDivergesAtAbscissa) {
  const auto k = Kernel::laplace(0.5);
  EXPECT_DOUBLE_EQ(k.abscissa(), 2.0);
  EXPECT_FALSE(mgf(k, 2.0).has_value());
  EXPECT_FALSE(mgf(k, -2.5).has_value());
  EXPECT_NEAR(*mgf(k, 1.0), 1.0 / (1.0 - 0.25), 1e-15);
}

TEST(Kernel, MgfEvenConvexMinimizedAtZero) {
  for (const auto& k : {Kernel::gaussian(1.3), Kernel::laplace(0.5)}) {
    const double cap = std::isfinite(k.abscissa()) ? 0.95 * k.abscissa() : 3.0;
    const int n = 60;
    std::vector<double> v;
    for (int s = -n; s <= n; ++s) {
      const double mu = cap * s / n;
      v.push_back(*k.mgf(mu));
      EXPECT_NEAR(*k.mgf(mu), *k.mgf(-mu), 1e-14 * *k.mgf(mu));
      EXPECT_GE(*k.mgf(mu), 1.0);
    }
    for (std::size_t j = 1; j + 1 < v.size(); ++j) EXPECT_GT(v[j + 1] - 2 * v[j] + v[j - 1], 0.0);
  }
}

TEST(Kernel, TapsHaveUnitMassAndTruncation) {
  const auto k = Kernel::gaussian(1.0);
  const auto taps = k.taps(0.05);
  double s = 0.0;
  for (double t : taps) s += t;
  EXPECT_NEAR(s, 1.0, 1e-14);
  const double r = k.truncation_radius(1e-10);
  EXPECT_NEAR(std::erfc(r / std::sqrt(2.0)), 1e-10, 1e-16);
}

TEST(Kernel, ConstantFieldIsPreserved) {
  for (const auto& k : {Kernel::gaussian(1.0), Kernel::laplace(0.5)}) {
    std::vector<double> f(1000, 0.7);
    for (double v : convolve_field(k, 0.05, f)) EXPECT_NEAR(v, 0.7, 1e-12);
    for (double v : convolve_field_direct(k, 0.05, f)) EXPECT_NEAR(v, 0.7, 1e-12);
  }
}

TEST(Kernel, DeltaFieldReproducesGaussianProfile) {
  const double sigma = 1.0, dx = sigma / 50.0;
  const std::size_t n = 1201, c = 600;
  std::vector<double> f(n, 0.0);
  f[c] = 1.0 / dx;
  const auto g = convolve_field(Kernel::gaussian(sigma), dx, f, Extension::zero);
  double err = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double x = (static_cast<double>(j) - static_cast<double>(c)) * dx;
    err = std::max(err, std::abs(g[j] - std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi)));
  }
  EXPECT_LT(err, 1e-4);
}

TEST(Kernel, HeavisideGivesHalfAtOrigin) {
  const double dx = 0.01;
  const std::size_t n = 2001, c = 1000;
  std::vector<double> f(n);
  for (std::size_t j = 0; j < n; ++j) f[j] = j < c ? 1.0 : 0.0;
  const auto g = convolve_field(Kernel::gaussian(1.0), dx, f);
  EXPECT_NEAR(g[c], 0.5, dx);
}

TEST(Kernel, FftAndDirectPathsAgree) {
  std::mt19937_64 rng(20240611);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (std::size_t n : {128u, 300u, 512u}) {
    for (const auto& k : {Kernel::gaussian(0.7), Kernel::laplace(0.3)}) {
      std::vector<double> f(n);
      for (double& v : f) v = u(rng);
      for (auto ext : {Extension::constant, Extension::zero}) {
        const auto a = convolve_field(k, 0.2, f, ext);
        const auto b = convolve_field_direct(k, 0.2, f, ext);
        for (std::size_t j = 0; j < n; ++j) EXPECT_NEAR(a[j], b[j], 1e-10);
      }
    }
  }
}

TEST(Kernel, ZeroExtensionPreservesMass) {
  const std::size_t n = 2000;
  std::vector<double> f(n, 0.0);
  for (std::size_t j = 900; j < 1100; ++j) f[j] = 1.0 + 0.3 * std::sin(0.1 * static_cast<double>(j));
  const double dx = 0.05;
  const auto g = convolve_field(Kernel::gaussian(1.0), dx, f, Extension::zero);
  double sf = 0.0, sg = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    sf += f[j] * dx;
    sg += g[j] * dx;
  }
  EXPECT_NEAR(sg, sf, 1e-8 * sf);
}

TEST(Kernel, ShortFieldIsRejected) {
  std::vector<double> f(10, 1.0);
  EXPECT_THROW(convolve_field(Kernel::gaussian(1.0), 0.05, f), ConfigError);
}

TEST(Kernel, TabulatedKernelRescalesAndEstimatesAbscissa) {
  std::vector<double> z, lap, gau;
  for (int k = 0; k <= 4000; ++k) {
    z.push_back(0.005 * k);
    lap.push_back(2.0 * std::exp(-2.0 * z.back()) / 2.0 * 1.1);
    gau.push_back(std::exp(-0.5 * z.back() * z.back()) / std::sqrt(2.0 * std::numbers::pi));
  }
  const auto kl = Kernel::tabulated(z, lap);
  EXPECT_EQ(kl.notices().size(), 1u);
  EXPECT_NEAR(kl.abscissa(), 2.0, 1e-6);
  EXPECT_TRUE(kl.abscissa_estimated());
  EXPECT_NEAR(*kl.mgf(1.0), 1.0 / (1.0 - 0.25), 1e-3);
  std::vector<double> zg(z.begin(), z.begin() + 1601), vg(gau.begin(), gau.begin() + 1601);
  const auto kg = Kernel::tabulated(zg, vg);
  EXPECT_TRUE(std::isinf(kg.abscissa()));
  EXPECT_NEAR(*kg.mgf(1.0), std::exp(0.5), 1e-4);
}
