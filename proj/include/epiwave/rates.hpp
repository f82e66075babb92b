#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "error.hpp"
#include "numerics.hpp"

namespace epiwave {

/// gamma(i) = gamma0, tau(i) = tau0; survival pi(i) = exp(-gamma0 i).
struct ConstantRates {
  double tau0 = 2.0;
  double gamma0 = 1.0;
};

/// gamma(i) = 1 / (i_dagger - i), tau(i) = tau0; survival pi(i) = 1 - i / i_dagger.
struct FiniteAgeRates {
  double tau0 = 1.0;
  double i_dagger = 1.0;
};

/**
 * User-supplied rates sampled at strictly increasing ages starting at 0.
 * Exactly one of gamma or pi is given; values are linearly interpolated
 * onto the uniform age grid, which ends at the last tabulated age (or at
 * i_dagger when that comes first). tau and omega vanish past i_dagger.
 */
struct TabulatedRates {
  std::vector<double> ages;
  std::vector<double> tau;
  std::vector<double> gamma;
  std::vector<double> pi;
  double i_dagger = kInf;
};

using RatePreset = std::variant<ConstantRates, FiniteAgeRates, TabulatedRates>;

namespace detail {

/// Piecewise-linear interpolation, clamped at both ends.
inline double interp_linear(std::span<const double> xs, std::span<const double> ys, double x) {
  if (x <= xs.front()) return ys.front();
  if (x >= xs.back()) return ys.back();
  const auto it = std::upper_bound(xs.begin(), xs.end(), x);
  const std::size_t k = static_cast<std::size_t>(it - xs.begin());
  const double t = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
  return ys[k - 1] + t * (ys[k] - ys[k - 1]);
}

} // namespace detail

/**
 * Recovery and transmission rates tabulated on a uniform age grid
 * 0 = i_0 < ... < i_M. Immutable after construction.
 *
 * Integrals over age (R0, the Laplace transform of omega) use the
 * Gregory-corrected trapezoid rule returned by quadrature_weights().
 */
class RateModel {
public:
  static RateModel build(const RatePreset& preset, double d_age, double tail_tolerance = 1e-10) {
    detail::require(d_age > 0.0 && std::isfinite(d_age), "rates: age step must be positive");
    detail::require(tail_tolerance > 0.0 && tail_tolerance < 1.0, "rates: tail tolerance must lie in (0,1)");
    RateModel m;
    m.preset_ = preset;
    m.step_ = d_age;
    std::visit([&](const auto& p) { m.init(p, tail_tolerance); }, preset);
    m.weights_ = gregory_weights(m.ages_.size(), d_age);
    m.build_cell_polynomials();
    m.tau_sup_ = m.tau_.empty() ? 0.0 : *std::max_element(m.tau_.begin(), m.tau_.end());
    return m;
  }

  double step() const { return step_; }
  std::size_t size() const { return ages_.size(); }
  double i_dagger() const { return i_dagger_; }
  double age_max() const { return ages_.back(); }
  double tau_sup() const { return tau_sup_; }

  std::span<const double> ages() const { return ages_; }
  std::span<const double> pi() const { return pi_; }
  std::span<const double> tau() const { return tau_; }
  std::span<const double> gamma() const { return gamma_; }
  std::span<const double> omega() const { return omega_; }
  std::span<const double> quadrature_weights() const { return weights_; }

  const RatePreset& preset() const { return preset_; }

  std::optional<ConstantRates> constant_rates() const {
    if (const auto* c = std::get_if<ConstantRates>(&preset_)) return *c;
    return std::nullopt;
  }

  /// Integral of omega over the age grid.
  double omega_integral() const { return dot(weights_, omega_); }

  /**
   * L[omega](x) = int omega(i) exp(-x i) di. omega is replaced by its
   * piecewise-cubic interpolant and each cell is integrated against the
   * exact exponential, so the result stays accurate (and tends to 0)
   * when x times the age step is large. L[omega](0) is omega_integral().
   */
  double laplace_omega(double x) const {
    detail::require(x >= 0.0, "laplace_omega: argument must be nonnegative");
    if (x == 0.0) return omega_integral();
    const double y = x * step_;
    std::array<double, 4> nu{};
    if (y < 0.5) {
      for (std::size_t m = 0; m < 4; ++m) {
        double term = 1.0, sum = 0.0;
        for (int n = 0; n < 30; ++n) {
          sum += term / static_cast<double>(m + static_cast<std::size_t>(n) + 1);
          term *= -y / static_cast<double>(n + 1);
        }
        nu[m] = sum;
      }
    } else {
      const double e = std::exp(-y);
      nu[0] = -std::expm1(-y) / y;
      for (std::size_t m = 1; m < 4; ++m) nu[m] = (static_cast<double>(m) * nu[m - 1] - e) / y;
    }
    double s = 0.0;
    for (std::size_t k = 0; k + 1 < ages_.size(); ++k) {
      const auto& d = cell_poly_[k];
      const double cell = d[0] * nu[0] + d[1] * nu[1] + d[2] * nu[2] + d[3] * nu[3];
      if (cell != 0.0) s += std::exp(-x * ages_[k]) * cell;
    }
    return s * step_;
  }

  /// Closed-form L[omega](x) for the analytic presets.
  std::optional<double> closed_form_laplace(double x) const {
    if (const auto* c = std::get_if<ConstantRates>(&preset_)) return c->tau0 / (c->gamma0 + x);
    if (const auto* f = std::get_if<FiniteAgeRates>(&preset_)) {
      const double a = f->i_dagger;
      if (x * a < 1e-6) return f->tau0 * a * (0.5 - x * a / 6.0 + x * x * a * a / 24.0);
      return f->tau0 * (1.0 / x - (-std::expm1(-x * a)) / (x * x * a));
    }
    return std::nullopt;
  }

private:
  void init(const ConstantRates& p, double tail_tolerance) {
    detail::require(p.tau0 >= 0.0 && p.gamma0 > 0.0, "rates: constant preset needs tau0 >= 0 and gamma0 > 0");
    i_dagger_ = kInf;
    const double i_max = std::log(1.0 / tail_tolerance) / p.gamma0;
    const auto n = static_cast<std::size_t>(std::ceil(i_max / step_)) + 1;
    resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      ages_[k] = static_cast<double>(k) * step_;
      gamma_[k] = p.gamma0;
      tau_[k] = p.tau0;
      pi_[k] = std::exp(-p.gamma0 * ages_[k]);
      omega_[k] = tau_[k] * pi_[k];
    }
  }

  void init(const FiniteAgeRates& p, double) {
    detail::require(p.tau0 >= 0.0 && p.i_dagger > 0.0, "rates: finite_age preset needs tau0 >= 0 and i_dagger > 0");
    detail::require(step_ < p.i_dagger, "rates: age step must be smaller than i_dagger");
    i_dagger_ = p.i_dagger;
    const double ratio = p.i_dagger / step_;
    const bool on_grid = std::abs(ratio - std::round(ratio)) < 1e-9 * ratio;
    const auto last = static_cast<std::size_t>(on_grid ? std::round(ratio) : std::floor(ratio));
    if (!on_grid) {
      // omega mass beyond the last node, relative to the total tau0 i_dagger / 2
      const double gap = (p.i_dagger - static_cast<double>(last) * step_) / p.i_dagger;
      detail::require(gap * gap < 1e-6,
                      "rates: finite_age grid drops omega mass >= 1e-6 of the total; refine the age step");
    }
    resize(last + 1);
    for (std::size_t k = 0; k <= last; ++k) {
      ages_[k] = static_cast<double>(k) * step_;
      const double rest = p.i_dagger - ages_[k];
      const bool terminal = on_grid && k == last;
      gamma_[k] = terminal ? kInf : 1.0 / rest;
      pi_[k] = terminal ? 0.0 : rest / p.i_dagger;
      tau_[k] = terminal ? 0.0 : p.tau0;
      omega_[k] = tau_[k] * pi_[k];
    }
  }

  void init(const TabulatedRates& p, double) {
    const std::size_t n_tab = p.ages.size();
    detail::require(n_tab >= 2, "rates: tabulated preset needs at least two ages");
    detail::require(p.tau.size() == n_tab, "rates: tabulated tau must match ages");
    detail::require(p.ages.front() == 0.0, "rates: tabulated ages must start at 0");
    for (std::size_t k = 1; k < n_tab; ++k)
      detail::require(p.ages[k] > p.ages[k - 1], "rates: tabulated ages must be strictly increasing");
    for (double v : p.tau) detail::require(v >= 0.0 && std::isfinite(v), "rates: negative or non-finite tau value");
    const bool has_gamma = !p.gamma.empty();
    const bool has_pi = !p.pi.empty();
    detail::require(has_gamma != has_pi, "rates: tabulated preset needs exactly one of gamma or pi");
    if (has_gamma) {
      detail::require(p.gamma.size() == n_tab, "rates: tabulated gamma must match ages");
      for (double v : p.gamma) detail::require(v >= 0.0, "rates: negative gamma value");
    } else {
      detail::require(p.pi.size() == n_tab, "rates: tabulated pi must match ages");
      detail::require(std::abs(p.pi.front() - 1.0) < 1e-12, "rates: tabulated pi must start at 1");
      for (std::size_t k = 0; k < n_tab; ++k) {
        detail::require(p.pi[k] >= 0.0, "rates: negative tabulated pi");
        if (k > 0) detail::require(p.pi[k] <= p.pi[k - 1], "rates: tabulated pi must be nonincreasing");
      }
    }
    i_dagger_ = p.i_dagger;
    detail::require(i_dagger_ > step_, "rates: age step must be smaller than i_dagger");
    const double end = std::min(p.ages.back(), i_dagger_);
    const auto n = static_cast<std::size_t>(std::floor(end / step_ + 1e-9)) + 1;
    detail::require(n >= 2, "rates: age grid is degenerate");
    resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      ages_[k] = static_cast<double>(k) * step_;
      tau_[k] = detail::interp_linear(p.ages, p.tau, ages_[k]);
      if (has_gamma) gamma_[k] = detail::interp_linear(p.ages, p.gamma, ages_[k]);
      else pi_[k] = detail::interp_linear(p.ages, p.pi, ages_[k]);
    }
    if (has_gamma) {
      double cumulative = 0.0;
      pi_[0] = 1.0;
      for (std::size_t k = 1; k < n; ++k) {
        cumulative += 0.5 * step_ * (gamma_[k - 1] + gamma_[k]);
        pi_[k] = std::exp(-cumulative);
      }
    } else {
      for (std::size_t k = 0; k + 1 < n; ++k)
        gamma_[k] = pi_[k + 1] > 0.0 ? std::log(pi_[k] / pi_[k + 1]) / step_ : kInf;
      gamma_[n - 1] = n > 1 ? gamma_[n - 2] : 0.0;
    }
    for (std::size_t k = 0; k < n; ++k) {
      if (ages_[k] >= i_dagger_) tau_[k] = 0.0;
      omega_[k] = tau_[k] * pi_[k];
    }
  }

  /// Monomial coefficients (in v = (i - i_k) / step) of the local cubic interpolant of omega on each cell.
  void build_cell_polynomials() {
    const std::size_t n = ages_.size();
    cell_poly_.assign(n > 0 ? n - 1 : 0, {});
    if (n < 2) return;
    const std::size_t order = std::min<std::size_t>(4, n);
    for (std::size_t k = 0; k + 1 < n; ++k) {
      // stencil of `order` nodes around the cell, shifted inward at the ends
      std::ptrdiff_t first = static_cast<std::ptrdiff_t>(k) - (order == 4 ? 1 : 0);
      first = std::clamp<std::ptrdiff_t>(first, 0, static_cast<std::ptrdiff_t>(n - order));
      std::array<double, 4> d{};
      for (std::size_t a = 0; a < order; ++a) {
        const double va = static_cast<double>(first + static_cast<std::ptrdiff_t>(a)) - static_cast<double>(k);
        // Lagrange basis polynomial for node a, expanded in monomials of v
        std::array<double, 4> poly{1.0, 0.0, 0.0, 0.0};
        double denom = 1.0;
        std::size_t deg = 0;
        for (std::size_t b = 0; b < order; ++b) {
          if (b == a) continue;
          const double vb = static_cast<double>(first + static_cast<std::ptrdiff_t>(b)) - static_cast<double>(k);
          for (std::size_t m = deg + 1; m-- > 0;) poly[m + 1] += poly[m], poly[m] *= -vb;
          ++deg;
          denom *= va - vb;
        }
        const double w = omega_[static_cast<std::size_t>(first) + a] / denom;
        for (std::size_t m = 0; m < 4; ++m) d[m] += w * poly[m];
      }
      cell_poly_[k] = d;
    }
  }

  void resize(std::size_t n) {
    ages_.assign(n, 0.0);
    gamma_.assign(n, 0.0);
    tau_.assign(n, 0.0);
    pi_.assign(n, 0.0);
    omega_.assign(n, 0.0);
  }

  RatePreset preset_;
  double step_ = 0.0;
  double i_dagger_ = kInf;
  double tau_sup_ = 0.0;
  std::vector<double> ages_, gamma_, tau_, pi_, omega_, weights_;
  std::vector<std::array<double, 4>> cell_poly_;
};

inline RateModel build_rate_model(const RatePreset& preset, double d_age, double tail_tolerance = 1e-10) {
  return RateModel::build(preset, d_age, tail_tolerance);
}

/// R0 = S0 * int omega.
inline double basic_reproduction_number(const RateModel& model, double S0) {
  detail::require(S0 > 0.0, "R0: susceptible density must be positive");
  detail::require(model.size() >= 2, "R0: age grid is degenerate");
  return S0 * model.omega_integral();
}

inline double laplace_omega(const RateModel& model, double x) { return model.laplace_omega(x); }

} // namespace epiwave
