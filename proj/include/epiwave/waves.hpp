#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dispersion.hpp"
#include "error.hpp"
#include "kernel.hpp"
#include "numerics.hpp"
#include "rates.hpp"
#include "stationary.hpp"

namespace epiwave {

enum class WaveRegime { supercritical, critical };

/// Uniform grid z_j = -Z + offset + j dz, j = 0 .. 2 Z / dz.
struct WaveGrid {
  double Z = 200.0;
  double dz = 0.02;
  double offset = 0.0;

  std::size_t size() const { return 2 * static_cast<std::size_t>(std::llround(Z / dz)) + 1; }
  double z(std::ptrdiff_t j) const { return -Z + offset + static_cast<double>(j) * dz; }
};

/**
 * Continuation of a profile beyond the right end of the grid, using the
 * known decay: chi(z) = e^{-alpha (z - zr)} (chi(zr) + slope (z - zr)).
 * The slope is zero for supercritical waves. For the critical wave,
 * chi e^{alpha z} is asymptotically linear in z and the slope is taken
 * from the profile over the last `span` units, so the continuation
 * follows any translate of the profile instead of pinning one.
 */
struct WaveTail {
  WaveRegime regime = WaveRegime::supercritical;
  double alpha = 0.0;
  double span = 20.0;

  struct Continuation {
    double zr = 0.0, value = 0.0, slope = 0.0, alpha = 0.0;
    bool clamp = true; ///< off for perturbations, which may change sign
    double operator()(double z) const {
      const double v = std::exp(-alpha * (z - zr)) * (value + slope * (z - zr));
      return clamp ? std::max(0.0, v) : v;
    }
  };

  Continuation fit(const WaveGrid& g, std::span<const double> chi) const {
    Continuation c;
    const auto last = static_cast<std::ptrdiff_t>(chi.size()) - 1;
    c.zr = g.z(last);
    c.value = chi.back();
    c.alpha = alpha;
    if (regime == WaveRegime::critical) {
      const auto q = std::min<std::ptrdiff_t>(last, std::llround(span / g.dz));
      const double w = static_cast<double>(q) * g.dz;
      if (q > 0) c.slope = (c.value - chi[static_cast<std::size_t>(last - q)] * std::exp(-alpha * w)) / w;
    }
    return c;
  }
};

/**
 * The wave operator
 *
 *   T(chi)(z) = 1 - exp(-S0 int omega(i) (K0 * chi)(z + c i) di)
 *
 * rewritten as a single correlation T(chi)(z) = 1 - exp(-int m(y) chi(z + y) dy)
 * with m(y) = S0 int omega(i) K0(y - c i) di. Every age node contributes one
 * sampled kernel row, normalized to unit mass on the grid, so no
 * interpolation of chi at z + c i is needed. A nonzero shift s evaluates
 * T(chi)(z_j + s) on the same nodes, which is how profiles are re-anchored.
 */
class WaveOperator {
public:
  using Pad = std::function<double(double)>;

  WaveOperator(const RateModel& model, const Kernel& kernel, double S0, double c, const WaveGrid& grid,
               double tail_rate, double kernel_eps = 1e-10, double shift = 0.0)
      : grid_(grid), n_(grid.size()), cell_rate_(tail_rate * grid.dz), kernel_(kernel), c_(c), shift_(shift) {
    detail::require(c >= 0.0, "wave: speed must be nonnegative");
    detail::require(S0 > 0.0, "wave: S0 must be positive");
    detail::require(grid.Z > 0.0 && grid.dz > 0.0 && n_ >= 3, "wave: invalid z grid");
    radius_ = kernel.truncation_radius(kernel_eps);
    const auto w = model.quadrature_weights();
    const auto omega = model.omega();
    const auto ages = model.ages();
    double i_last = 0.0;
    for (std::size_t k = 0; k < model.size(); ++k) {
      const double coef = S0 * w[k] * omega[k];
      if (coef <= 0.0) continue;
      rows_.push_back({ages[k], coef});
      i_last = ages[k];
    }
    detail::require(!rows_.empty(), "wave: omega vanishes on the age grid");
    detail::require(c * i_last + radius_ + std::abs(shift) <= grid.Z,
                    "wave: grid too narrow, z + c i_max leaves the extension window (increase Z)");
    const double dz = grid.dz;
    l_min_ = static_cast<std::ptrdiff_t>(std::floor((shift - radius_) / dz)) - 1;
    const auto l_max = static_cast<std::ptrdiff_t>(std::ceil((shift + c * i_last + radius_) / dz)) + 1;
    half_ = static_cast<std::size_t>((l_max - l_min_ + 1) / 2);
    std::vector<double> m(2 * half_ + 1, 0.0); // m[l - l_min]
    std::vector<double> row;
    for (const auto& r : rows_) {
      const double centre = shift + c * r.age;
      const auto a = static_cast<std::ptrdiff_t>(std::ceil((centre - radius_) / dz));
      const auto b = static_cast<std::ptrdiff_t>(std::floor((centre + radius_) / dz));
      row.assign(static_cast<std::size_t>(b - a + 1), 0.0);
      double mass = 0.0;
      for (std::ptrdiff_t l = a; l <= b; ++l) {
        const double v = kernel.density(static_cast<double>(l) * dz - centre);
        row[static_cast<std::size_t>(l - a)] = v;
        mass += v;
      }
      detail::ensure(mass > 0.0, "wave: kernel row has no mass on the grid (dz too coarse)");
      for (std::ptrdiff_t l = a; l <= b; ++l) m[static_cast<std::size_t>(l - l_min_)] += r.coef * row[static_cast<std::size_t>(l - a)] / mass;
    }
    total_mass_ = 0.0;
    for (double v : m) total_mass_ += v;
    // correlation sum_l m_l g_{p + l} as a convolution with reversed taps
    std::vector<double> taps(2 * half_ + 1);
    for (std::size_t q = 0; q < taps.size(); ++q) taps[q] = m[taps.size() - 1 - q];
    m_ = std::move(m);
    padded_.resize(n_ + 2 * half_);
    result_.resize(padded_.size());
    conv_ = std::make_unique<Convolver>(std::move(taps), padded_.size());
  }

  const WaveGrid& grid() const { return grid_; }
  double speed() const { return c_; }
  double shift() const { return shift_; }
  /// sum of the correlation weights; equals R0 up to the age quadrature
  double total_mass() const { return total_mass_; }

  /// out = T(chi) with chi(z) = left(z) below the grid and right(z) above it.
  void apply(std::span<const double> chi, std::span<double> out, const Pad& left, const Pad& right) {
    correlate(chi, out, left, right);
    for (double& v : out) v = -std::expm1(-std::max(v, 0.0));
  }

  /// out = int m(y) f(z + y) dy, the exponent of T, for any sign of f.
  void correlate(std::span<const double> f, std::span<double> out, const Pad& left, const Pad& right) {
    detail::require(f.size() == n_ && out.size() == n_, "wave: profile length does not match the grid");
    for (std::size_t p = 0; p < padded_.size(); ++p) {
      const std::ptrdiff_t j = static_cast<std::ptrdiff_t>(p) + l_min_;
      if (j < 0)
        padded_[p] = left(grid_.z(j));
      else if (j >= static_cast<std::ptrdiff_t>(n_))
        padded_[p] = right(grid_.z(j));
      else
        padded_[p] = f[static_cast<std::size_t>(j)];
    }
    conv_->apply_tail_accurate(padded_, result_, Extension::zero, cell_rate_);
    // the value for node j sits at padded index j + half
    std::copy(result_.begin() + static_cast<std::ptrdiff_t>(half_),
              result_.begin() + static_cast<std::ptrdiff_t>(half_ + n_), out.begin());
  }

  /// T(chi) with the iteration pads: rho* on the left, the known tail on the right.
  void apply(std::span<const double> chi, std::span<double> out, double rho_star, const WaveTail& tail) {
    apply(chi, out, [rho_star](double) { return rho_star; }, tail.fit(grid_, chi));
  }

  /// T(chi)(z) at an arbitrary point, summed directly (no FFT).
  double value_at(std::span<const double> chi, double z, const Pad& left, const Pad& right) const {
    detail::require(chi.size() == n_, "wave: profile length does not match the grid");
    const double dz = grid_.dz, z0 = grid_.z(0);
    double s = 0.0;
    for (const auto& r : rows_) {
      const double centre = z + c_ * r.age;
      const auto a = static_cast<std::ptrdiff_t>(std::ceil((centre - radius_ - z0) / dz));
      const auto b = static_cast<std::ptrdiff_t>(std::floor((centre + radius_ - z0) / dz));
      double mass = 0.0, acc = 0.0;
      for (std::ptrdiff_t j = a; j <= b; ++j) {
        const double zj = grid_.z(j);
        const double k = kernel_.density(zj - centre);
        double v;
        if (j < 0)
          v = left(zj);
        else if (j >= static_cast<std::ptrdiff_t>(n_))
          v = right(zj);
        else
          v = chi[static_cast<std::size_t>(j)];
        mass += k;
        acc += k * v;
      }
      s += r.coef * acc / mass;
    }
    return -std::expm1(-std::max(s, 0.0));
  }

  double value_at(std::span<const double> chi, double z, double rho_star, const WaveTail& tail) const {
    return value_at(chi, z, [rho_star](double) { return rho_star; }, tail.fit(grid_, chi));
  }

private:
  struct Row {
    double age;
    double coef;
  };
  WaveGrid grid_;
  std::size_t n_ = 0, half_ = 0;
  std::ptrdiff_t l_min_ = 0;
  double cell_rate_ = 0.0, radius_ = 0.0, total_mass_ = 0.0;
  Kernel kernel_;
  double c_ = 0.0, shift_ = 0.0;
  std::vector<Row> rows_;
  std::vector<double> m_, padded_, result_;
  std::unique_ptr<Convolver> conv_;
};

/**
 * Explicit super- and subsolutions of chi = T(chi).
 *
 * Supercritical (c > c*), with alpha = alpha_c:
 *   super = rho* min(1, e^{-alpha z}),
 *   sub   = rho* max(0, e^{-alpha z} - M e^{-(alpha + delta) z}).
 * Critical (c = c*), with alpha = alpha*:
 *   super = rho* (1 for z <= z_bar, A z e^{-alpha z} beyond),
 *   sub   = rho* max(0, (A z - B) e^{-alpha z} + e^{-(alpha + delta) z}) for z > 0, else 0.
 */
struct WaveBracket {
  WaveRegime regime = WaveRegime::supercritical;
  double c = 0.0;
  double rho_star = 0.0;
  double alpha = 0.0;
  double delta = 0.0;
  double C = 0.5; ///< 1 - e^{-s} >= s - C s^2 on s >= 0
  double M = 0.0;
  double A = 0.0;
  double z_bar = 0.0;
  double B = 0.0;

  double super(double z) const {
    if (regime == WaveRegime::supercritical) return rho_star * std::min(1.0, std::exp(-alpha * z));
    return z <= z_bar ? rho_star : rho_star * A * z * std::exp(-alpha * z);
  }

  double sub(double z) const {
    if (regime == WaveRegime::supercritical) {
      const double v = std::exp(-alpha * z) - M * std::exp(-(alpha + delta) * z);
      return rho_star * std::max(0.0, v);
    }
    if (z <= 0.0) return 0.0;
    const double v = (A * z - B) * std::exp(-alpha * z) + std::exp(-(alpha + delta) * z);
    return rho_star * std::max(0.0, v);
  }

  WaveTail tail() const { return {regime, alpha}; }
};

/// Relative tolerance for speeds counted as c = c*.
inline constexpr double kCriticalSpeedTolerance = 1e-9;

inline WaveBracket build_bracket(double c, const DispersionResult& d, const RateModel& model, const Kernel& kernel,
                                 double S0) {
  const double R0 = basic_reproduction_number(model, S0);
  detail::require(R0 > 1.0, "wave: traveling waves need R0 > 1");
  detail::require(c >= d.c_star * (1.0 - kCriticalSpeedTolerance), "wave: speed below c*");
  WaveBracket b;
  b.c = c;
  b.rho_star = solve_rho_star(R0);
  if (c > d.c_star * (1.0 + kCriticalSpeedTolerance)) {
    b.regime = WaveRegime::supercritical;
    b.alpha = alpha_c(model, kernel, S0, d, c);
    b.delta = 0.5 * std::min(b.alpha, d.alpha_star - b.alpha);
    detail::ensure(b.delta > 0.0, "wave: alpha_c coincides with alpha* (speed too close to c*)");
    const double q = phi_c(model, kernel, S0, c, b.alpha + b.delta);
    detail::ensure(q < 1.0, "wave: phi_c(alpha_c + delta) is not below 1");
    b.M = std::max(1.0, b.C * R0 * b.rho_star * q / (1.0 - q));
    return b;
  }
  b.regime = WaveRegime::critical;
  b.c = d.c_star;
  b.alpha = d.alpha_star;
  b.A = std::numbers::e * b.alpha;
  b.z_bar = 1.0 / b.alpha;
  const double Lambda = kernel.abscissa();
  b.delta = (std::isfinite(Lambda) ? std::min(b.alpha, Lambda - b.alpha) : b.alpha) / 8.0;
  const double p1 = phi_c(model, kernel, S0, b.c, b.alpha + b.delta);
  const double p2 = phi_c(model, kernel, S0, b.c, b.alpha + 2.0 * b.delta);
  detail::ensure(p1 > 1.0, "wave: phi_c*(alpha* + delta) is not above 1");
  const double slope = b.alpha - 2.0 * b.delta; // z^2 e^{-2 alpha z} <= e^{-(alpha + 2 delta) z} iff 2 ln z <= slope z
  const double z_turn = 2.0 / slope;
  auto first_holds = [&](double z0) {
    auto h = [&](double z) { return slope * z - 2.0 * std::log(z); };
    return h(z_turn) >= 0.0 || (z0 >= z_turn && h(z0) >= 0.0);
  };
  auto second_holds = [&](double z0) {
    return b.C * R0 * b.rho_star * b.A * b.A * p2 * std::exp(-b.delta * z0) <= p1 - 1.0;
  };
  b.B = 2.0;
  while (!(first_holds((b.B - 1.0) / b.A) && second_holds((b.B - 1.0) / b.A))) {
    b.B *= 2.0;
    detail::ensure(b.B < 1e300, "wave: no admissible B for the critical subsolution");
  }
  return b;
}

struct WaveOptions {
  WaveGrid grid;
  double tolerance = 1e-10;       ///< sup-norm change between iterates
  std::size_t max_iterations = 10000;
  double residual_tolerance = 1e-8; ///< on [-Z/2, Z/2]
  double kernel_eps = 1e-10;
  /// Order checks (bracket, monotone iterates) allow rel * value + abs slack
  /// for quadrature and rounding error.
  double order_rel_tolerance = 1e-9;
  double order_abs_tolerance = 1e-15;
  /// Ages are re-gridded to at most this step for the wave operator: the
  /// Gregory age sum must agree with the dispersion relation to well below
  /// the bracket slack, which an O(d^4) rule only reaches for small d.
  double max_age_step = 0.005;
  /// Also iterate from the subsolution and check both sequences stay ordered.
  bool track_sub = true;
  /// Newton polishing when the monotone iteration stops above the tolerance
  /// (the critical wave converges only algebraically).
  bool polish = true;
  double polish_tolerance = 1e-12; ///< on |chi - T(chi)| / weight
  /// Called after every iteration with (iteration, sup-norm change).
  std::function<void(std::size_t, double)> on_iteration;
};

struct WaveProfile {
  double c = 0.0;
  WaveRegime regime = WaveRegime::supercritical;
  WaveGrid grid;
  std::vector<double> z;
  std::vector<double> chi;
  double rho_star = 0.0;
  double alpha_decay = 0.0;
  double residual = 0.0;
  double anchor = 0.0; ///< the converged iterate was evaluated at z + anchor
  double age_step = 0.0; ///< age grid used by the wave operator
  std::size_t iterations = 0;
  double last_change = 0.0;
  bool converged = false; ///< monotone iteration met the tolerance
  std::size_t polish_steps = 0;
  std::size_t gmres_iterations = 0;
  double iterations_stopped_at = 0.0; ///< weighted residual handed to the polish
  double polish_residual = 0.0;
  WaveBracket bracket;
  bool bracket_verified = false;
  std::size_t bracket_violations = 0;
  std::size_t monotonicity_violations = 0;
  double fitted_rate = 0.0;

  /// chi at an arbitrary z: linear interpolation, rho* and the known tail outside.
  double at(double x) const {
    const double t = (x - z.front()) / grid.dz;
    if (t <= 0.0) return x < z.front() ? rho_star : chi.front();
    if (t >= static_cast<double>(chi.size() - 1)) return WaveTail{regime, alpha_decay}.fit(grid, chi)(x);
    const auto j = static_cast<std::size_t>(t);
    const double f = t - static_cast<double>(j);
    return (1.0 - f) * chi[j] + f * chi[j + 1];
  }
};

/**
 * Fitted exponential rate of the profile tail: least-squares slope of
 * log chi (supercritical) or log(chi / z) (critical) where chi lies in
 * [lo, hi].
 */
inline double tail_decay_rate(std::span<const double> z, std::span<const double> chi, WaveRegime regime,
                              double lo = 1e-8, double hi = 1e-3) {
  std::vector<double> x, y;
  for (std::size_t j = 0; j < chi.size(); ++j) {
    if (!(chi[j] >= lo && chi[j] <= hi) || z[j] <= 0.0) continue;
    x.push_back(z[j]);
    y.push_back(regime == WaveRegime::critical ? std::log(chi[j] / z[j]) : std::log(chi[j]));
  }
  detail::require(x.size() >= 2, "wave: tail window is empty (increase Z)");
  return -least_squares(x, y).slope;
}

inline double tail_decay_rate(const WaveProfile& p) { return tail_decay_rate(p.z, p.chi, p.regime); }

namespace detail {

struct BracketCheck {
  bool ok = false;
  double worst_super = 0.0; ///< max of T(super) - super - slack
  double worst_sub = 0.0;   ///< max of sub - T(sub) - slack
  double worst_order = 0.0; ///< max of sub - super - slack
};

inline BracketCheck verify_bracket(WaveOperator& op, const WaveBracket& b, const WaveOptions& o) {
  const auto& g = op.grid();
  const std::size_t n = g.size();
  std::vector<double> sup(n), sub(n), t(n);
  for (std::size_t j = 0; j < n; ++j) {
    sup[j] = b.super(g.z(static_cast<std::ptrdiff_t>(j)));
    sub[j] = b.sub(g.z(static_cast<std::ptrdiff_t>(j)));
  }
  BracketCheck r;
  r.worst_super = r.worst_sub = r.worst_order = -kInf;
  auto slack = [&](double v) { return o.order_rel_tolerance * v + o.order_abs_tolerance; };
  op.apply(sup, t, [&](double z) { return b.super(z); }, [&](double z) { return b.super(z); });
  for (std::size_t j = 0; j < n; ++j) {
    r.worst_super = std::max(r.worst_super, t[j] - sup[j] - slack(sup[j]));
    r.worst_order = std::max(r.worst_order, sub[j] - sup[j] - slack(sup[j]));
  }
  op.apply(sub, t, [&](double z) { return b.sub(z); }, [&](double z) { return b.sub(z); });
  for (std::size_t j = 0; j < n; ++j) r.worst_sub = std::max(r.worst_sub, sub[j] - t[j] - slack(sub[j]));
  r.ok = r.worst_super <= 0.0 && r.worst_sub <= 0.0 && r.worst_order <= 0.0;
  return r;
}

} // namespace detail

namespace detail {

struct PolishStats {
  std::size_t steps = 0;
  std::size_t gmres_iterations = 0;
  double initial = 0.0; ///< max |chi - T(chi)| / weight before polishing
  double final = 0.0;
};

/**
 * Newton steps on chi = T(chi) in the variables h = delta chi / weight,
 * with the translation fixed by the bordered system
 *
 *   [J  v] [h]   [-F]
 *   [e' 0] [mu] = [ 0]
 *
 * where v is the weighted derivative of chi and e picks the node nearest
 * the level rho* / 2. J is applied matrix-free: DT(chi) h = e^{-m*chi} (m * h).
 */
inline PolishStats newton_polish(WaveOperator& op, std::vector<double>& chi, const WaveTail& tail, double rs,
                                 std::span<const double> weight, double tol, std::size_t max_steps) {
  const WaveGrid& g = op.grid();
  const std::size_t n = chi.size();
  std::vector<double> lin(n), D(n), F(n), v(n), h(n), mh(n), rhs(n + 1), x(n + 1);
  const WaveOperator::Pad rho_pad = [rs](double) { return rs; };
  const WaveOperator::Pad zero_pad = [](double) { return 0.0; };
  auto residual = [&]() {
    op.correlate(chi, lin, rho_pad, tail.fit(g, chi));
    double r = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double e = std::max(lin[j], 0.0);
      D[j] = std::exp(-e);
      F[j] = (chi[j] + std::expm1(-e)) / weight[j];
      r = std::max(r, std::abs(F[j]));
    }
    return r;
  };
  PolishStats st;
  st.initial = st.final = residual();
  while (st.steps < max_steps && st.final > tol) {
    std::size_t js = 0;
    while (js + 1 < n && chi[js + 1] >= 0.5 * rs) ++js;
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t a = j == 0 ? 0 : j - 1, b = j + 1 == n ? j : j + 1;
      v[j] = (chi[b] - chi[a]) / (static_cast<double>(b - a) * g.dz) / weight[j];
    }
    auto matvec = [&](std::span<const double> in, std::span<double> out) {
      for (std::size_t j = 0; j < n; ++j) h[j] = in[j] * weight[j];
      auto right = tail.fit(g, h);
      right.clamp = false;
      op.correlate(h, mh, zero_pad, right);
      for (std::size_t j = 0; j < n; ++j) out[j] = in[j] - D[j] * mh[j] / weight[j] + in[n] * v[j];
      out[n] = in[js];
    };
    for (std::size_t j = 0; j < n; ++j) rhs[j] = -F[j];
    rhs[n] = 0.0;
    std::fill(x.begin(), x.end(), 0.0);
    const auto gr = gmres(matvec, rhs, x, 1e-6, 400, 2000);
    st.gmres_iterations += gr.iterations;
    for (std::size_t j = 0; j < n; ++j) chi[j] += x[j] * weight[j];
    ++st.steps;
    const double before = st.final;
    st.final = residual();
    if (!(st.final < 0.5 * before)) break;
  }
  return st;
}

} // namespace detail

/**
 * Traveling wave of speed c >= c*: monotone iteration chi <- T(chi) from
 * the supersolution until the sup-norm change drops below the tolerance,
 * then re-anchoring so that chi(0) = rho* / 2 and a residual check on
 * [-Z/2, Z/2]. Order violations of the iterates are hard failures.
 */
inline WaveProfile solve_wave(double c, const RateModel& model, const Kernel& kernel, double S0,
                              const DispersionResult& d, WaveOptions options = {}) {
  WaveProfile p;
  detail::require(c >= d.c_star * (1.0 - kCriticalSpeedTolerance), "wave: speed below c*");
  std::optional<RateModel> fine;
  std::optional<DispersionResult> fine_d;
  if (model.step() > options.max_age_step * (1.0 + 1e-12)) {
    // an integer subdivision keeps any grid constraint of the preset (finite ages);
    // c* and alpha_c are recomputed so the bracket matches the operator's age sums
    const double parts = std::ceil(model.step() / options.max_age_step - 1e-9);
    fine = build_rate_model(model.preset(), model.step() / parts);
    fine_d = solve_c_star(*fine, kernel, S0);
    if (c <= d.c_star * (1.0 + kCriticalSpeedTolerance)) c = fine_d->c_star;
  }
  const RateModel& ages = fine ? *fine : model;
  p.bracket = build_bracket(c, fine_d ? *fine_d : d, ages, kernel, S0);
  const WaveBracket& b = p.bracket;
  p.c = b.c;
  p.regime = b.regime;
  p.rho_star = b.rho_star;
  p.alpha_decay = b.alpha;
  const WaveTail tail = b.tail();
  const double tail_rate = 0.98 * b.alpha;
  p.age_step = ages.step();

  auto op = std::make_unique<WaveOperator>(ages, kernel, S0, b.c, options.grid, tail_rate, options.kernel_eps);
  auto check = detail::verify_bracket(*op, b, options);
  if (!check.ok) {
    // one refinement of the z grid before giving up
    options.grid.dz *= 0.5;
    op = std::make_unique<WaveOperator>(ages, kernel, S0, b.c, options.grid, tail_rate, options.kernel_eps);
    check = detail::verify_bracket(*op, b, options);
    if (!check.ok) {
      char msg[200];
      std::snprintf(msg, sizeof msg, "wave: bracket verification failed (T(super) - super = %.3g, sub - T(sub) = %.3g)",
                    check.worst_super, check.worst_sub);
      throw NumericalError(msg);
    }
  }
  p.bracket_verified = true;
  p.grid = options.grid;
  const WaveGrid& g = p.grid;
  const std::size_t n = g.size();
  const double rs = b.rho_star;
  auto slack = [&](double v) { return options.order_rel_tolerance * v + options.order_abs_tolerance; };

  std::vector<double> sup(n), sub(n), chi(n), next(n), low, low_next;
  for (std::size_t j = 0; j < n; ++j) {
    const double z = g.z(static_cast<std::ptrdiff_t>(j));
    sup[j] = b.super(z);
    sub[j] = b.sub(z);
  }
  chi = sup;
  if (options.track_sub) {
    low = sub;
    low_next.resize(n);
  }
  std::string first_violation;
  auto report = [&](const char* what, std::size_t j, double v, double bound) {
    if (p.bracket_violations++ > 0) return;
    char msg[200];
    std::snprintf(msg, sizeof msg, "%s at iteration %zu, z = %.6g (%.6g vs %.6g)", what, p.iterations,
                  g.z(static_cast<std::ptrdiff_t>(j)), v, bound);
    first_violation = msg;
  };
  for (p.iterations = 0; p.iterations < options.max_iterations;) {
    op->apply(chi, next, rs, tail);
    if (options.track_sub) {
      // the subsolution vanishes far behind the front, so its iterates are padded with 0 there
      op->apply(low, low_next, [](double) { return 0.0; }, tail.fit(g, low));
    }
    ++p.iterations;
    double change = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      change = std::max(change, std::abs(next[j] - chi[j]));
      if (next[j] > chi[j] + slack(chi[j])) ++p.monotonicity_violations;
      if (next[j] > sup[j] + slack(sup[j])) report("T^k(super) > super", j, next[j], sup[j]);
      if (next[j] + slack(next[j]) < sub[j]) report("T^k(super) < sub", j, next[j], sub[j]);
    }
    if (options.track_sub) {
      for (std::size_t j = 0; j < n; ++j) {
        if (low_next[j] + slack(low_next[j]) < low[j]) ++p.monotonicity_violations;
        if (low_next[j] + slack(low_next[j]) < sub[j]) report("T^k(sub) < sub", j, low_next[j], sub[j]);
        if (low_next[j] > next[j] + slack(next[j])) report("T^k(sub) > T^k(super)", j, low_next[j], next[j]);
      }
      low.swap(low_next);
    }
    chi.swap(next);
    p.last_change = change;
    if (options.on_iteration) options.on_iteration(p.iterations, change);
    if (change < options.tolerance) {
      p.converged = true;
      break;
    }
  }
  detail::ensure(p.bracket_violations == 0, "wave: iterate left the sub/super bracket: " + first_violation);

  if (!p.converged && options.polish) {
    // slow (critical) convergence: finish with Newton steps, then re-check the bracket
    std::vector<double> weight(n);
    for (std::size_t j = 0; j < n; ++j) weight[j] = sup[j] / rs;
    const auto st = detail::newton_polish(*op, chi, tail, rs, weight, options.polish_tolerance, 20);
    p.polish_steps = st.steps;
    p.gmres_iterations = st.gmres_iterations;
    p.iterations_stopped_at = st.initial;
    p.polish_residual = st.final;
    for (std::size_t j = 0; j < n; ++j) {
      if (chi[j] > sup[j] + slack(sup[j])) report("polished profile > super", j, chi[j], sup[j]);
      if (chi[j] + slack(chi[j]) < sub[j]) report("polished profile < sub", j, chi[j], sub[j]);
    }
    detail::ensure(p.bracket_violations == 0, "wave: polished profile left the sub/super bracket: " + first_violation);
  }

  // anchor: solve T(chi)(s) = rho* / 2, then sample T(chi)(z_j + s) exactly
  const double target = 0.5 * rs;
  std::size_t jc = 0;
  while (jc + 1 < n && chi[jc + 1] >= target) ++jc;
  detail::ensure(jc + 1 < n && chi[0] >= target, "wave: profile does not cross rho*/2 on the grid");
  auto gap = [&](double s) { return op->value_at(chi, s, rs, tail) - target; };
  double lo = g.z(static_cast<std::ptrdiff_t>(jc)), hi = g.z(static_cast<std::ptrdiff_t>(jc) + 1);
  while (gap(lo) < 0.0) lo -= g.dz;
  while (gap(hi) > 0.0) hi += g.dz;
  p.anchor = bisect(gap, lo, hi, 1e-14);
  {
    WaveOperator shifted(ages, kernel, S0, b.c, g, tail_rate, options.kernel_eps, p.anchor);
    shifted.apply(chi, next, rs, tail);
  }
  chi.swap(next);

  op->apply(chi, next, rs, tail);
  p.residual = 0.0;
  for (std::size_t j = 0; j < n; ++j)
    if (std::abs(g.z(static_cast<std::ptrdiff_t>(j))) <= 0.5 * g.Z)
      p.residual = std::max(p.residual, std::abs(chi[j] - next[j]));
  if (!(p.residual < options.residual_tolerance)) {
    char msg[300];
    std::snprintf(msg, sizeof msg,
                  "wave: residual %.3g above %.3g after %zu iterations (last change %.3g, Z = %g, dz = %g)",
                  p.residual, options.residual_tolerance, p.iterations, p.last_change, g.Z, g.dz);
    throw NumericalError(msg);
  }
  p.z.resize(n);
  for (std::size_t j = 0; j < n; ++j) p.z[j] = g.z(static_cast<std::ptrdiff_t>(j));
  p.chi = std::move(chi);
  p.fitted_rate = tail_decay_rate(p);
  return p;
}

/// Physical wave w_c(i_k, z) = S0 chi(z + c i_k) pi(i_k) on the age nodes.
inline std::vector<double> wave_field_row(const WaveProfile& p, const RateModel& model, double S0, std::size_t k) {
  const double shift = p.c * model.ages()[k];
  const double pk = model.pi()[k];
  std::vector<double> row(p.z.size());
  for (std::size_t j = 0; j < row.size(); ++j) row[j] = S0 * p.at(p.z[j] + shift) * pk;
  return row;
}

} // namespace epiwave
