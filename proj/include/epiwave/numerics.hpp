#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "error.hpp"

namespace epiwave {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/**
 * Composite trapezoid weights on n uniformly spaced nodes, with the
 * third-order Gregory end corrections (3/8, 7/6, 23/24) applied when
 * n >= 6 so that the two corrections do not overlap. The corrected rule
 * is exact for cubics and O(h^4) for smooth integrands.
 */
inline std::vector<double> gregory_weights(std::size_t n, double h) {
  std::vector<double> w(n, h);
  if (n == 0) return w;
  if (n == 1) {
    w[0] = 0.0;
    return w;
  }
  if (n < 6) {
    w.front() = w.back() = 0.5 * h;
    return w;
  }
  constexpr double c0 = 3.0 / 8.0, c1 = 7.0 / 6.0, c2 = 23.0 / 24.0;
  w[0] = w[n - 1] = c0 * h;
  w[1] = w[n - 2] = c1 * h;
  w[2] = w[n - 3] = c2 * h;
  return w;
}

/// Plain composite trapezoid weights on n nodes.
inline std::vector<double> trapezoid_weights(std::size_t n, double h) {
  std::vector<double> w(n, h);
  if (n == 0) return w;
  if (n == 1) {
    w[0] = 0.0;
    return w;
  }
  w.front() = w.back() = 0.5 * h;
  return w;
}

inline double trapezoid(std::span<const double> f, double h) {
  if (f.size() < 2) return 0.0;
  double s = 0.5 * (f.front() + f.back());
  for (std::size_t k = 1; k + 1 < f.size(); ++k) s += f[k];
  return s * h;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

/**
 * Bisection for a root of f on [lo, hi]; f(lo) and f(hi) must have
 * opposite signs (zero counts as either). Stops when the bracket is
 * narrower than xtol or cannot be split further in floating point.
 */
template <class F>
double bisect(F&& f, double lo, double hi, double xtol = 0.0, int max_iter = 400) {
  double flo = f(lo);
  double fhi = f(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  detail::ensure(std::signbit(flo) != std::signbit(fhi), "bisect: no sign change on bracket");
  for (int it = 0; it < max_iter; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi || hi - lo <= xtol) break;
    const double fm = f(mid);
    if (fm == 0.0) return mid;
    if (std::signbit(fm) == std::signbit(flo)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

struct Minimum {
  double x;
  double value;
};

/// Golden-section search for the minimizer of a unimodal f on [lo, hi].
template <class F>
Minimum golden_section(F&& f, double lo, double hi, double xtol) {
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - invphi * (b - a);
  double d = a + invphi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > xtol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = f(d);
    }
    if (c >= d) break;
  }
  const double x = 0.5 * (a + b);
  return {x, f(x)};
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_stderr = 0.0;
  double r_squared = 0.0;
  std::size_t n = 0;
};

/// Ordinary least squares y = slope * x + intercept.
inline LinearFit least_squares(std::span<const double> x, std::span<const double> y) {
  detail::ensure(x.size() == y.size() && x.size() >= 2, "least_squares: need at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    mx += x[k];
    my += y[k];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double dx = x[k] - mx, dy = y[k] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  detail::ensure(sxx > 0.0, "least_squares: degenerate abscissae");
  LinearFit fit;
  fit.n = x.size();
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double sse = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double r = y[k] - (fit.slope * x[k] + fit.intercept);
    sse += r * r;
  }
  fit.r_squared = syy > 0.0 ? 1.0 - sse / syy : 1.0;
  fit.slope_stderr = x.size() > 2 ? std::sqrt(sse / (n - 2.0) / sxx) : 0.0;
  return fit;
}

struct GmresResult {
  std::size_t iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
};

/**
 * Restarted GMRES for A x = b with a matrix-free operator
 * apply(x, y) computing y = A x. x holds the initial guess on entry.
 */
template <class Apply>
GmresResult gmres(Apply&& apply, std::span<const double> b, std::span<double> x, double rel_tol,
                  std::size_t restart, std::size_t max_iter) {
  const std::size_t n = b.size();
  detail::require(x.size() == n && restart > 0, "gmres: size mismatch");
  auto norm = [](std::span<const double> v) { return std::sqrt(dot(v, v)); };
  const double bnorm = norm(b);
  GmresResult res;
  if (bnorm == 0.0) {
    std::fill(x.begin(), x.end(), 0.0);
    res.converged = true;
    return res;
  }
  std::vector<std::vector<double>> V;
  std::vector<std::vector<double>> H(restart + 1, std::vector<double>(restart, 0.0));
  std::vector<double> cs(restart), sn(restart), g(restart + 1), r(n), w(n);
  while (res.iterations < max_iter) {
    apply(std::span<const double>(x), std::span<double>(r));
    for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - r[i];
    double beta = norm(r);
    res.relative_residual = beta / bnorm;
    if (res.relative_residual <= rel_tol) {
      res.converged = true;
      return res;
    }
    V.assign(1, r);
    for (double& v : V[0]) v /= beta;
    std::fill(g.begin(), g.end(), 0.0);
    g[0] = beta;
    std::size_t k = 0;
    for (; k < restart && res.iterations < max_iter; ++k) {
      ++res.iterations;
      apply(std::span<const double>(V[k]), std::span<double>(w));
      for (std::size_t i = 0; i <= k; ++i) {
        H[i][k] = dot(w, V[i]);
        for (std::size_t q = 0; q < n; ++q) w[q] -= H[i][k] * V[i][q];
      }
      H[k + 1][k] = norm(w);
      for (std::size_t i = 0; i < k; ++i) {
        const double t = cs[i] * H[i][k] + sn[i] * H[i + 1][k];
        H[i + 1][k] = -sn[i] * H[i][k] + cs[i] * H[i + 1][k];
        H[i][k] = t;
      }
      const double d = std::hypot(H[k][k], H[k + 1][k]);
      cs[k] = d > 0.0 ? H[k][k] / d : 1.0;
      sn[k] = d > 0.0 ? H[k + 1][k] / d : 0.0;
      const double h1 = H[k + 1][k];
      H[k][k] = d;
      H[k + 1][k] = 0.0;
      g[k + 1] = -sn[k] * g[k];
      g[k] = cs[k] * g[k];
      res.relative_residual = std::abs(g[k + 1]) / bnorm;
      if (res.relative_residual <= rel_tol || h1 == 0.0) {
        ++k;
        break;
      }
      V.emplace_back(w);
      for (double& v : V.back()) v /= h1;
    }
    // back substitution for the k x k triangle, then x += V y
    std::vector<double> y(k);
    for (std::size_t i = k; i-- > 0;) {
      double t = g[i];
      for (std::size_t j = i + 1; j < k; ++j) t -= H[i][j] * y[j];
      y[i] = t / H[i][i];
    }
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t q = 0; q < n; ++q) x[q] += y[i] * V[i][q];
    if (res.relative_residual <= rel_tol) {
      res.converged = true;
      return res;
    }
  }
  return res;
}

} // namespace epiwave
