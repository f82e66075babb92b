#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "error.hpp"
#include "rates.hpp"

namespace epiwave {

/// Uniform symmetric grid x_j = -X + j dx, j = 0..n-1, with x_{n-1} = X.
class SpatialGrid {
public:
  SpatialGrid() = default;
  SpatialGrid(double X, double dx) : dx_(dx) {
    detail::require(dx > 0.0 && X > 0.0, "grid: X and dx must be positive");
    half_ = static_cast<std::size_t>(std::llround(X / dx));
    detail::require(half_ >= 1, "grid: X must exceed dx");
    X_ = static_cast<double>(half_) * dx;
  }

  double step() const { return dx_; }
  double half_width() const { return X_; }
  std::size_t size() const { return 2 * half_ + 1; }
  std::size_t center() const { return half_; }
  double x(std::size_t j) const { return (static_cast<double>(j) - static_cast<double>(half_)) * dx_; }

  std::vector<double> points() const {
    std::vector<double> xs(size());
    for (std::size_t j = 0; j < xs.size(); ++j) xs[j] = x(j);
    return xs;
  }

private:
  double dx_ = 1.0;
  double X_ = 0.0;
  std::size_t half_ = 0;
};

/// Time/age step delta (shared), spatial step dx on [-X, X], horizon t_end.
struct SimGrid {
  double delta = 0.02;
  double dx = 0.05;
  double X = 50.0;
  double t_end = 10.0;

  std::size_t steps() const { return static_cast<std::size_t>(std::llround(t_end / delta)); }
  SpatialGrid space() const { return {X, dx}; }
};

enum class BumpShape { smooth, hat };

/**
 * Separable bump height * p_age(i) * p_space(x) with p supported on
 * [i_lo, i_hi] and [x_center - x_halfwidth, x_center + x_halfwidth].
 * smooth: p(u) = cos^2(pi u / 2) on |u| <= 1; hat: p(u) = 1 - |u|.
 *
 * Bumps describe data in the normalized variable: rho0 / pi for the
 * initial condition and I0 / pi for the source.
 */
struct Bump {
  double i_lo = 0.0;
  double i_hi = 1.0;
  double x_center = 0.0;
  double x_halfwidth = 1.0;
  double height = 1.0;
  BumpShape shape = BumpShape::smooth;

  static double profile(double u, BumpShape shape) {
    const double a = std::abs(u);
    if (a >= 1.0) return 0.0;
    if (shape == BumpShape::hat) return 1.0 - a;
    const double c = std::cos(0.5 * std::numbers::pi * a);
    return c * c;
  }

  /// Antiderivative of profile over (-1, u].
  static double profile_integral(double u, BumpShape shape) {
    if (u <= -1.0) return 0.0;
    if (u >= 1.0) return 1.0;
    if (shape == BumpShape::hat) return u <= 0.0 ? 0.5 * (1.0 + u) * (1.0 + u) : 1.0 - 0.5 * (1.0 - u) * (1.0 - u);
    return 0.5 * (u + 1.0) + std::sin(std::numbers::pi * u) / (2.0 * std::numbers::pi);
  }

  double age_mid() const { return 0.5 * (i_lo + i_hi); }
  double age_half() const { return 0.5 * (i_hi - i_lo); }

  double age_part(double i) const { return profile((i - age_mid()) / age_half(), shape); }
  double space_part(double x) const { return profile((x - x_center) / x_halfwidth, shape); }
  double operator()(double i, double x) const { return height * age_part(i) * space_part(x); }

  /// Closed-form int_0^i of the bump in age at fixed x.
  double age_cumulative(double i, double x) const {
    return height * space_part(x) * age_half() * profile_integral((i - age_mid()) / age_half(), shape);
  }

  void validate(const char* what) const {
    detail::require(i_hi > i_lo && i_lo >= 0.0, std::string(what) + ": bump age range must satisfy 0 <= i_lo < i_hi");
    detail::require(x_halfwidth > 0.0, std::string(what) + ": bump x half-width must be positive");
    detail::require(height >= 0.0 && std::isfinite(height), std::string(what) + ": bump height must be nonnegative");
  }
};

/// Initial condition rho0 / pi and source I0 / pi; nullopt means zero.
struct InitialData {
  std::optional<Bump> rho0;
  std::optional<Bump> I0;

  bool trivial() const { return !rho0 && !I0; }
};

/**
 * Age-by-space tables of the initial data on the spatial window where it
 * is nonzero: rho0(i_k, x_j) and the cumulative source
 * cal_I0(i_k, x_j) = int_0^{i_k} I0 / pi (exact for bumps).
 * Rows are ages 0..model.size()-1, columns x indices j_lo..j_lo+width-1.
 */
struct SourceTables {
  std::size_t j_lo = 0;
  std::size_t width = 0;
  std::size_t ages = 0;
  std::vector<double> rho0;
  std::vector<double> cum_I0;
  bool has_rho0 = false;
  bool has_I0 = false;

  double rho0_at(std::size_t k, std::size_t w) const { return has_rho0 ? rho0[k * width + w] : 0.0; }
  double cum_at(std::size_t k, std::size_t w) const { return has_I0 ? cum_I0[k * width + w] : 0.0; }

  /// cal_I0 at age row k and global x index j (zero outside the window).
  double cum_global(std::size_t k, std::size_t j) const {
    if (!has_I0 || j < j_lo || j >= j_lo + width) return 0.0;
    return cum_I0[k * width + (j - j_lo)];
  }
  double rho0_global(std::size_t k, std::size_t j) const {
    if (!has_rho0 || j < j_lo || j >= j_lo + width) return 0.0;
    return rho0[k * width + (j - j_lo)];
  }
};

inline SourceTables build_source_tables(const InitialData& data, const RateModel& model, const SpatialGrid& space,
                                        std::size_t margin) {
  SourceTables t;
  t.ages = model.size();
  if (data.trivial()) return t;
  double lo = kInf, hi = -kInf;
  for (const auto* b : {data.rho0 ? &*data.rho0 : nullptr, data.I0 ? &*data.I0 : nullptr}) {
    if (!b) continue;
    b->validate("init");
    lo = std::min(lo, b->x_center - b->x_halfwidth);
    hi = std::max(hi, b->x_center + b->x_halfwidth);
  }
  const double dx = space.step();
  const double first = std::floor((lo + space.half_width()) / dx);
  const double last = std::ceil((hi + space.half_width()) / dx);
  const double n = static_cast<double>(space.size());
  detail::require(first - static_cast<double>(margin) >= 0.0 && last + static_cast<double>(margin) <= n - 1.0,
                  "init: data support plus kernel reach extends outside the spatial grid");
  t.j_lo = static_cast<std::size_t>(first);
  t.width = static_cast<std::size_t>(last - first) + 1;
  const auto ages = model.ages();
  if (data.rho0) {
    t.has_rho0 = true;
    t.rho0.assign(t.ages * t.width, 0.0);
    for (std::size_t k = 0; k < t.ages; ++k)
      for (std::size_t w = 0; w < t.width; ++w) t.rho0[k * t.width + w] = (*data.rho0)(ages[k], space.x(t.j_lo + w));
  }
  if (data.I0) {
    t.has_I0 = true;
    t.cum_I0.assign(t.ages * t.width, 0.0);
    // the bump has a closed-form age antiderivative, so cal_I0 is exact at the nodes
    for (std::size_t k = 0; k < t.ages; ++k)
      for (std::size_t w = 0; w < t.width; ++w)
        t.cum_I0[k * t.width + w] = data.I0->age_cumulative(ages[k], space.x(t.j_lo + w));
  }
  return t;
}

/// Runs body(begin, end) over [0, n) split into contiguous chunks.
template <class F>
void parallel_for(std::size_t n, unsigned threads, F&& body) {
  if (threads <= 1 || n < 4096) {
    body(std::size_t{0}, n);
    return;
  }
  threads = std::min<unsigned>(threads, static_cast<unsigned>(n / 1024));
  std::vector<std::jthread> pool;
  const std::size_t chunk = (n + threads - 1) / threads;
  for (unsigned t = 1; t < threads; ++t) {
    const std::size_t b = t * chunk, e = std::min(n, b + chunk);
    if (b < e) pool.emplace_back([&body, b, e] { body(b, e); });
  }
  body(std::size_t{0}, std::min(n, chunk));
}

} // namespace epiwave
