#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "error.hpp"
#include "grid.hpp"
#include "kernel.hpp"
#include "numerics.hpp"
#include "rates.hpp"

namespace epiwave {

/**
 * Positive root of v = 1 - exp(-R0 v) for R0 > 1, else 0. Bisection on
 * a bracket that excludes v = 0, then Newton polishing; the returned
 * residual |v - (1 - exp(-R0 v))| is below 1e-12.
 */
inline double solve_rho_star(double R0) {
  detail::require(R0 > 0.0 && std::isfinite(R0), "rho_star: R0 must be positive");
  if (R0 <= 1.0) return 0.0;
  auto f = [R0](double v) { return v + std::expm1(-R0 * v); };
  // f < 0 on (0, 2 (R0 - 1) / R0^2) to second order; half of that is safe
  const double lo = std::min(0.5, (R0 - 1.0) / (R0 * R0));
  double v = bisect(f, lo, 1.0, 1e-15);
  for (int it = 0; it < 8; ++it) {
    const double d = 1.0 - R0 * std::exp(-R0 * v);
    if (d == 0.0) break;
    const double nv = v - f(v) / d;
    if (!(nv > 0.0 && nv <= 1.0) || std::abs(f(nv)) >= std::abs(f(v))) break;
    v = nv;
  }
  return v;
}

/// Fixed-point residual |v - (1 - exp(-R0 v))|.
inline double rho_star_residual(double R0, double v) { return std::abs(v + std::expm1(-R0 * v)); }

struct StationaryOptions {
  double abs_tolerance = 1e-10;
  double rel_tolerance = 1e-12;
  std::size_t max_sweeps = 100000;
  double kernel_eps = 1e-10;
};

/**
 * Homogeneous and heterogeneous stationary states. phi_hat solves
 * phi_hat = 1 - A exp(-R0 K*phi_hat) with A = exp(-B),
 * B = K * int omega(i) cal_I0(i, .) di; the stationary field is
 * U(i, x) = pi(i) (S0 phi_hat(x) + cal_I0(i, x)).
 */
struct StationaryState {
  double R0 = 0.0;
  double S0 = 1.0;
  double rho_star = 0.0;
  std::vector<double> rho_s;   ///< S0 rho* pi(i) on the age grid
  std::vector<double> phi_hat; ///< on the spatial grid
  std::vector<double> eta;     ///< phi_hat - rho*, relatively accurate where it is tiny
  std::vector<double> A;
  std::vector<double> B;
  std::size_t sweeps = 0;
  std::size_t monotonicity_violations = 0;
  SpatialGrid space;
  SourceTables tables;
  std::vector<double> pi;

  /// U(i_k, x) / pi(i_k) = S0 phi_hat(x) + cal_I0(i_k, x).
  std::vector<double> normalized_row(std::size_t k) const {
    std::vector<double> row(phi_hat.size());
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = S0 * phi_hat[j] + tables.cum_global(k, j);
    return row;
  }

  /// U(i_k, x).
  std::vector<double> row(std::size_t k) const {
    auto r = normalized_row(k);
    for (double& v : r) v *= pi[k];
    return r;
  }
};

inline StationaryState solve_U(const RateModel& model, const Kernel& kernel, double S0, const std::optional<Bump>& I0,
                               const SpatialGrid& space, StationaryOptions options = {}) {
  StationaryState st;
  st.S0 = S0;
  st.R0 = basic_reproduction_number(model, S0);
  st.rho_star = solve_rho_star(st.R0);
  st.space = space;
  st.pi.assign(model.pi().begin(), model.pi().end());
  st.rho_s.resize(model.size());
  for (std::size_t k = 0; k < model.size(); ++k) st.rho_s[k] = S0 * st.rho_star * st.pi[k];
  const std::size_t N = space.size();
  const auto taps = kernel.taps(space.step(), options.kernel_eps);
  const std::size_t R = taps.size() / 2;
  detail::require(N >= taps.size(), "stationary: grid shorter than the kernel width");
  st.tables = build_source_tables(InitialData{std::nullopt, I0}, model, space, R);
  st.B.assign(N, 0.0);
  st.A.assign(N, 1.0);

  if (!I0) {
    // homogeneous problem: the constant rho* is the only bounded solution
    st.phi_hat.assign(N, st.rho_star);
    st.eta.assign(N, 0.0);
    return st;
  }

  // G(x) = int omega(i) cal_I0(i, x) di on the data window, then B = K * G
  const auto w = model.quadrature_weights();
  const auto omega = model.omega();
  std::vector<double> G(N, 0.0);
  for (std::size_t k = 0; k < model.size(); ++k) {
    const double c = w[k] * omega[k];
    if (c == 0.0) continue;
    for (std::size_t c2 = 0; c2 < st.tables.width; ++c2) G[st.tables.j_lo + c2] += c * st.tables.cum_at(k, c2);
  }
  convolve_direct(taps, G, st.B, Extension::zero);
  for (std::size_t j = 0; j < N; ++j) st.A[j] = std::exp(-st.B[j]);

  // iterate on eta = phi_hat - rho*, which keeps relative accuracy in the far field:
  // eta <- (1 - rho*) (1 - exp(-(B + R0 K*eta))), started from phi_hat = 1
  const double rs = st.rho_star;
  std::vector<double> eta(N, 1.0 - rs), keta(N), next(N);
  for (;;) {
    detail::ensure(st.sweeps < options.max_sweeps, "stationary: fixed-point iteration did not converge");
    ++st.sweeps;
    convolve_direct(taps, eta, keta, Extension::constant);
    double abs_change = 0.0, rel_change = 0.0;
    for (std::size_t j = 0; j < N; ++j) {
      next[j] = (1.0 - rs) * -std::expm1(-(st.B[j] + st.R0 * keta[j]));
      const double d = eta[j] - next[j];
      if (d < -1e-15 * std::max(eta[j], 1e-300)) ++st.monotonicity_violations;
      abs_change = std::max(abs_change, std::abs(d));
      if (next[j] > 0.0) rel_change = std::max(rel_change, std::abs(d) / next[j]);
    }
    eta.swap(next);
    if (abs_change < options.abs_tolerance && rel_change < options.rel_tolerance) break;
  }
  st.phi_hat.resize(N);
  for (std::size_t j = 0; j < N; ++j) st.phi_hat[j] = rs + eta[j];
  st.eta = std::move(eta);
  return st;
}

/**
 * Far-field decay rate lambda in (0, Lambda) solving
 *   exp(R0 rho*) exp(-lambda x) = 1 - exp(-R0 mgf(lambda) exp(-lambda x)).
 * Both sides are compared in logarithmic form so that the crossing stays
 * resolved when exp(-lambda x) underflows the absolute scale.
 */
struct LambdaResult {
  double lambda = 0.0;
  double residual = 0.0;          ///< |h1 - h2|
  double relative_residual = 0.0; ///< |h1 - h2| / h1
};

inline LambdaResult solve_lambda(const Kernel& kernel, double R0, double rho_star, double x_norm) {
  detail::require(R0 > 0.0 && x_norm > 0.0, "lambda: R0 and x_norm must be positive");
  detail::require(rho_star >= 0.0 && rho_star < 1.0, "lambda: rho* must lie in [0, 1)");
  // log h2 = log s + log((1 - e^{-s}) / s), s = R0 mgf(lambda) e^{-lambda x}
  auto log_ratio = [](double s) {
    if (s < 1e-3) return -s / 2.0 + s * s / 24.0 - s * s * s * s / 2880.0;
    return std::log(-std::expm1(-s) / s);
  };
  auto g = [&](double lam) {
    const auto m = kernel.mgf(lam);
    if (!m) return -kInf;
    const double log_s = std::log(R0 * *m) - lam * x_norm;
    const double s = std::exp(log_s);
    // log h1 - log h2
    return R0 * rho_star - lam * x_norm - (log_s + log_ratio(s));
  };
  const double cap = kernel.abscissa();
  double hi = std::isfinite(cap) ? cap : 1.0;
  if (std::isfinite(cap)) {
    // approach the abscissa from below until the sign flips
    double step = 0.5 * cap;
    hi = cap - step;
    while (g(hi) > 0.0) {
      step *= 0.5;
      hi = cap - step;
      detail::ensure(step > 1e-14 * cap, "lambda: no sign change below the kernel abscissa (x_norm too small)");
    }
  } else {
    while (g(hi) > 0.0) {
      hi *= 2.0;
      detail::ensure(hi < 1e6, "lambda: no sign change found (x_norm too small)");
    }
  }
  detail::ensure(g(0.0) > 0.0, "lambda: no sign change found (x_norm too small)");
  LambdaResult r;
  r.lambda = bisect(g, 0.0, hi, 0.0, 2000);
  const double h1 = std::exp(R0 * rho_star - r.lambda * x_norm);
  const double h2 = -std::expm1(-R0 * *kernel.mgf(r.lambda) * std::exp(-r.lambda * x_norm));
  r.residual = std::abs(h1 - h2);
  r.relative_residual = h1 > 0.0 ? r.residual / h1 : 0.0;
  return r;
}

} // namespace epiwave
