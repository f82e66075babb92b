#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "error.hpp"
#include "kernel.hpp"
#include "numerics.hpp"
#include "rates.hpp"

namespace epiwave {

/// phi_c(alpha) = S0 mgf(alpha) L[omega](alpha c).
inline double phi_c(const RateModel& model, const Kernel& kernel, double S0, double c, double alpha) {
  detail::require(c >= 0.0, "dispersion: speed must be nonnegative");
  detail::require(alpha >= 0.0, "dispersion: alpha must be nonnegative");
  const auto m = kernel.mgf(alpha);
  detail::require(m.has_value(), "dispersion: alpha at or beyond the kernel abscissa");
  return S0 * *m * model.laplace_omega(alpha * c);
}

/// Unique c > 0 with phi_c(alpha) = 1 (requires R0 > 1).
inline double c_of_alpha(const RateModel& model, const Kernel& kernel, double S0, double alpha) {
  detail::require(basic_reproduction_number(model, S0) > 1.0, "dispersion: c(alpha) needs R0 > 1");
  detail::require(alpha > 0.0 && alpha < kernel.abscissa(), "dispersion: alpha must lie in (0, Lambda)");
  auto f = [&](double c) { return phi_c(model, kernel, S0, c, alpha) - 1.0; };
  double hi = 1.0;
  while (f(hi) > 0.0) {
    hi *= 2.0;
    detail::ensure(hi < 1e300, "dispersion: no bracket for c(alpha)");
  }
  return bisect(f, 0.0, hi);
}

struct DispersionResult {
  double c_star = 0.0;
  double alpha_star = 0.0;
  std::vector<std::pair<double, double>> c_of_alpha; ///< sampled (alpha, c(alpha))
  double residual = 0.0;                             ///< |phi_{c*}(alpha*) - 1|
  double derivative = 0.0;                           ///< d/dalpha phi_{c*} at alpha*, central difference
  bool lambda_estimated = false;
  std::size_t local_minima = 0;
};

/**
 * c* = min over alpha of c(alpha): log-grid scan, then golden-section
 * refinement to an alpha bracket below 1e-8. For Lambda = inf the search
 * cap starts at 10 and doubles while the minimum sits at the cap.
 */
inline DispersionResult solve_c_star(const RateModel& model, const Kernel& kernel, double S0,
                                     std::size_t samples = 400) {
  detail::require(basic_reproduction_number(model, S0) > 1.0, "dispersion: c* needs R0 > 1");
  const double Lambda = kernel.abscissa();
  const bool finite = std::isfinite(Lambda);
  double lo = finite ? Lambda * 1e-4 : 1e-4;
  double cap = finite ? Lambda * (1.0 - 1e-4) : 10.0;
  DispersionResult r;
  r.lambda_estimated = kernel.abscissa_estimated();
  std::size_t best = 0;
  for (;;) {
    r.c_of_alpha.clear();
    const double ratio = std::log(cap / lo) / static_cast<double>(samples - 1);
    for (std::size_t k = 0; k < samples; ++k) {
      const double a = k + 1 == samples ? cap : lo * std::exp(ratio * static_cast<double>(k));
      r.c_of_alpha.emplace_back(a, c_of_alpha(model, kernel, S0, a));
    }
    best = 0;
    for (std::size_t k = 1; k < samples; ++k)
      if (r.c_of_alpha[k].second < r.c_of_alpha[best].second) best = k;
    if (best + 1 < samples || finite) break;
    cap *= 2.0;
    detail::ensure(cap < 1e6, "dispersion: c(alpha) still decreasing at alpha = 1e6");
  }
  detail::ensure(best > 0 && best + 1 < samples,
                 "dispersion: minimum of c(alpha) on the search boundary (check the kernel abscissa)");
  for (std::size_t k = 1; k + 1 < samples; ++k) {
    const double c = r.c_of_alpha[k].second;
    if (c < r.c_of_alpha[k - 1].second && c <= r.c_of_alpha[k + 1].second) ++r.local_minima;
  }
  const auto m = golden_section([&](double a) { return c_of_alpha(model, kernel, S0, a); },
                                r.c_of_alpha[best - 1].first, r.c_of_alpha[best + 1].first, 1e-9);
  r.alpha_star = m.x;
  r.c_star = m.value;
  r.residual = std::abs(phi_c(model, kernel, S0, r.c_star, r.alpha_star) - 1.0);
  const double h = 1e-5;
  r.derivative = (phi_c(model, kernel, S0, r.c_star, r.alpha_star + h) -
                  phi_c(model, kernel, S0, r.c_star, r.alpha_star - h)) /
                 (2.0 * h);
  return r;
}

/// Unique alpha in (0, alpha*] with phi_c(alpha) = 1 for c >= c*.
inline double alpha_c(const RateModel& model, const Kernel& kernel, double S0, const DispersionResult& d, double c) {
  detail::require(c >= d.c_star * (1.0 - 1e-10), "dispersion: alpha_c needs c >= c*");
  if (c <= d.c_star * (1.0 + 1e-10)) return d.alpha_star;
  return bisect([&](double a) { return phi_c(model, kernel, S0, c, a) - 1.0; }, 0.0, d.alpha_star);
}

} // namespace epiwave
