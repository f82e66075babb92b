#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"
#include "grid.hpp"
#include "kernel.hpp"
#include "dispersion.hpp"
#include "numerics.hpp"
#include "rates.hpp"
#include "stationary.hpp"

namespace epiwave {

/**
 * Weight rate for the tail-accurate convolutions: the leading edges decay at
 * least like exp(-alpha* |x|), and a slightly smaller rate keeps the weighted
 * fields bounded.
 */
inline double default_tail_rate(const RateModel& model, const Kernel& kernel, double S0) {
  const double Lambda = kernel.abscissa();
  if (basic_reproduction_number(model, S0) <= 1.0) return std::isfinite(Lambda) ? 0.5 * Lambda : 1.0;
  return 0.9 * solve_c_star(model, kernel, S0).alpha_star;
}

struct VolterraOptions {
  /// Constant-rate presets only: replace the history sum by a one-step recursion.
  bool exponential_recursion = false;
  /// Keep every boundary slice Phi(t_n, .) in memory.
  bool keep_history = false;
  unsigned threads = 1;
  double inner_tolerance = 1e-12;
  int max_inner_sweeps = 50;
  double kernel_eps = 1e-10;
  /// Exponential rate (per unit length) of the weighted transforms that keep
  /// the leading edges of Phi relatively accurate; 0 picks 0.9 alpha*.
  double tail_rate = 0.0;
  /// run() fails if the front ends within this many kernel radii of either edge.
  double edge_margin_radii = 5.0;
};

/**
 * Time stepper for the boundary trace Phi(t, x) = rho(t, 0, x) of the
 * normalized field, through
 *
 *   Phi(t) = S0 (1 - exp(-int_0^t omega(i) K*Phi(t - i) di - G1(t) - G2(t)))
 *
 * with time step equal to the age step of the rate model, so that the
 * field is recovered along characteristics without interpolation.
 * The history integral uses the trapezoid rule; its i = 0 endpoint is
 * resolved by fixed-point sweeps. Only the last M + 1 slices (M = last
 * age index) are retained unless keep_history is set.
 */
class VolterraSolver {
public:
  VolterraSolver(const RateModel& model, const Kernel& kernel, double S0, const SimGrid& grid,
                 const InitialData& data, VolterraOptions options = {})
      : model_(model), S0_(S0), grid_(grid), space_(grid.space()), options_(options),
        conv_(kernel.taps(grid.dx, options.kernel_eps), space_.size()) {
    detail::require(S0 > 0.0, "simulate: S0 must be positive");
    detail::require(grid.delta > 0.0 && grid.t_end >= 0.0, "simulate: invalid time grid");
    detail::require(std::abs(model.step() - grid.delta) <= 1e-12 * grid.delta,
                    "simulate: the age step of the rate model must equal the time step");
    detail::require(grid.delta * S0 * model.tau_sup() < 1.0,
                    "simulate: delta * S0 * sup(tau) must be below 1 for the implicit step to contract");
    if (options_.exponential_recursion) {
      const auto c = model.constant_rates();
      detail::require(c.has_value(), "simulate: exponential recursion needs the constant rate preset");
      decay_ = std::exp(-c->gamma0 * grid.delta);
      omega0_ = c->tau0;
      gamma0_ = c->gamma0;
    }
    N_ = space_.size();
    R_ = conv_.radius();
    tail_rate_ = options_.tail_rate > 0.0 ? options_.tail_rate : default_tail_rate(model, kernel, S0);
    detail::require(tail_rate_ < kernel.abscissa(), "simulate: tail rate must be below the kernel abscissa");
    cell_rate_ = tail_rate_ * grid.dx;
    M_ = model.size() - 1;
    tables_ = build_source_tables(data, model, space_, R_);
    if (data.trivial()) notices_.push_back("trivial dynamics: zero initial data and zero source");
    const double R0 = basic_reproduction_number(model, S0);
    rho_star_ = solve_rho_star(R0);
    if (R0 > 1.0) {
      const double need = solve_c_star(model, kernel, S0).c_star * grid.t_end + 10.0 * static_cast<double>(R_) * grid.dx;
      if (grid.X < need)
        notices_.push_back("warning: X = " + std::to_string(grid.X) + " is below c* t_end + 10 kernel radii = " +
                           std::to_string(need) + "; the front may reach the boundary");
    }
    omega_.assign(model.omega().begin(), model.omega().end());
    slots_ = M_ + 1;
    phi_ring_.assign(slots_ * N_, 0.0);
    if (!options_.exponential_recursion) kphi_ring_.assign(slots_ * N_, 0.0);
    else H_.assign(N_, 0.0);
    rest_.assign(N_, 0.0);
    guess_.assign(N_, 0.0);
    kguess_.assign(N_, 0.0);

    // Phi(0) = S0 (1 - exp(-G1(0) - G2(0)))
    const auto g = gamma_window(0);
    auto phi0 = phi_slot(0);
    std::fill(phi0.begin(), phi0.end(), 0.0);
    for (std::size_t o = 0; o < g.size(); ++o) phi0[gamma_lo_ + o] = S0_ * -std::expm1(-g[o]);
    finish_slice(0, phi0);
  }

  std::size_t step_index() const { return n_; }
  double time() const { return static_cast<double>(n_) * grid_.delta; }
  std::size_t total_steps() const { return grid_.steps(); }
  const SpatialGrid& space() const { return space_; }
  const RateModel& model() const { return model_; }
  double S0() const { return S0_; }
  std::size_t kernel_radius() const { return R_; }
  int max_inner_sweeps_used() const { return max_sweeps_used_; }
  double tail_rate() const { return tail_rate_; }
  const std::vector<std::string>& notices() const { return notices_; }
  const SourceTables& tables() const { return tables_; }

  /// Phi(t_n, .) for the current step.
  std::span<const double> phi() const { return phi_at(n_); }

  /// Phi(t_m, .) for any m retained by the ring (n - M <= m <= n).
  std::span<const double> phi_at(std::size_t m) const {
    detail::require(m <= n_ && n_ - m <= M_, "simulate: requested slice is not retained");
    return {phi_ring_.data() + (m % slots_) * N_, N_};
  }

  const std::vector<std::vector<double>>& history() const { return history_; }

  /// G1 and G2 at step n on the full spatial grid.
  std::pair<std::vector<double>, std::vector<double>> gamma_terms(std::size_t n) const {
    std::vector<double> g1(N_, 0.0), g2(N_, 0.0);
    if (tables_.width == 0) return {g1, g2};
    std::vector<double> w1(tables_.width), w2(tables_.width);
    window_integrands(n, w1, w2);
    spread_window(w1, g1);
    spread_window(w2, g2);
    return {g1, g2};
  }

  void step() {
    const std::size_t next = n_ + 1;
    const double d = grid_.delta;
    std::fill(rest_.begin(), rest_.end(), 0.0);
    if (options_.exponential_recursion) {
      const auto& kprev = kphi_latest_;
      for (std::size_t j = 0; j < N_; ++j) H_[j] = decay_ * (omega0_ * kprev[j] + H_[j]);
      const double tail = 0.5 * omega0_ * std::exp(-gamma0_ * d * static_cast<double>(next));
      for (std::size_t j = 0; j < N_; ++j) rest_[j] = d * (H_[j] - tail * kphi0_[j]);
    } else {
      history_sum(next);
    }
    const auto g = gamma_window(next);
    for (std::size_t o = 0; o < g.size(); ++o) rest_[gamma_lo_ + o] += g[o];

    const double a = 0.5 * d * omega_[0];
    // linear extrapolation as the starting guess
    const auto prev = phi_at(n_);
    if (n_ >= 1) {
      const auto older = phi_at(n_ - 1);
      for (std::size_t j = 0; j < N_; ++j) guess_[j] = std::clamp(2.0 * prev[j] - older[j], 0.0, S0_);
    } else {
      std::copy(prev.begin(), prev.end(), guess_.begin());
    }
    auto out = phi_slot(next);
    int sweeps = 0;
    for (;;) {
      ++sweeps;
      detail::ensure(sweeps <= options_.max_inner_sweeps,
                     "simulate: implicit step did not converge in the sweep limit; reduce the time step");
      conv_.apply_tail_accurate(guess_, kguess_, Extension::constant, cell_rate_);
      double change = 0.0;
      for (std::size_t j = 0; j < N_; ++j) {
        const double v = S0_ * -std::expm1(-(a * kguess_[j] + rest_[j]));
        change = std::max(change, std::abs(v - guess_[j]));
        guess_[j] = v;
      }
      detail::ensure(std::isfinite(change), "simulate: non-finite value in the boundary trace");
      if (change < options_.inner_tolerance) break;
    }
    max_sweeps_used_ = std::max(max_sweeps_used_, sweeps);
    std::copy(guess_.begin(), guess_.end(), out.begin());
    n_ = next;
    finish_slice(next, out);
  }

  /// Advance to total_steps(), calling observe(n, Phi_n) after every step (including n = 0).
  void run(const std::function<void(std::size_t, std::span<const double>)>& observe = {}) {
    if (observe && n_ == 0) observe(0, phi());
    while (n_ < total_steps()) {
      step();
      if (observe) observe(n_, phi());
    }
    check_edges();
  }

  /**
   * Throws if Phi reaches half the endemic level S0 rho* within
   * edge_margin_radii kernel radii of either edge: past that point the
   * constant continuation at the edges feeds back into the front.
   */
  void check_edges() const {
    if (rho_star_ <= 0.0 || options_.edge_margin_radii <= 0.0) return;
    const auto margin = static_cast<std::size_t>(std::ceil(options_.edge_margin_radii * static_cast<double>(R_)));
    const double level = 0.5 * S0_ * rho_star_;
    const auto p = phi();
    for (std::size_t j = 0; j < N_; ++j) {
      if (j >= margin && j + margin < N_) continue;
      detail::ensure(p[j] < level, "simulate: the front reached within " + std::to_string(options_.edge_margin_radii) +
                                       " kernel radii of the boundary; increase X");
    }
  }

  /**
   * Normalized field rho/pi at the current time on age rows 0..rows-1,
   * row-major (age, x):
   *   i <  t: Phi(t - i, x) + cal_I0(i, x)
   *   i >= t: rho0(i - t, x) + cal_I0(i, x) - cal_I0(i - t, x)
   */
  std::vector<double> reconstruct(std::size_t rows) const {
    rows = std::min(rows, M_ + 1);
    std::vector<double> f(rows * N_, 0.0);
    for (std::size_t k = 0; k < rows; ++k) reconstruct_row(k, {f.data() + k * N_, N_});
    return f;
  }

  /// One age row of reconstruct(): rho(t, i_k, .) / pi(i_k).
  void reconstruct_row(std::size_t k, std::span<double> row) const {
    detail::require(k <= M_ && row.size() == N_, "simulate: age row out of range");
    if (k < n_) {
      const auto src = phi_at(n_ - k);
      std::copy(src.begin(), src.end(), row.begin());
      if (tables_.has_I0)
        for (std::size_t w = 0; w < tables_.width; ++w) row[tables_.j_lo + w] += tables_.cum_at(k, w);
    } else {
      std::fill(row.begin(), row.end(), 0.0);
      const std::size_t s = k - n_;
      for (std::size_t w = 0; w < tables_.width; ++w)
        row[tables_.j_lo + w] = tables_.rho0_at(s, w) + tables_.cum_at(k, w) - tables_.cum_at(s, w);
    }
  }

  std::size_t age_rows() const { return M_ + 1; }

  /// Physical density rho = (rho/pi) * pi on age rows 0..rows-1.
  std::vector<double> physical_field(std::size_t rows) const {
    auto f = reconstruct(rows);
    rows = f.size() / N_;
    const auto pi = model_.pi();
    for (std::size_t k = 0; k < rows; ++k)
      for (std::size_t j = 0; j < N_; ++j) f[k * N_ + j] *= pi[k];
    return f;
  }

  /**
   * int_0^{i_max} rho(t, i, x) di by the trapezoid rule, split at the
   * diagonal i = t where the field may jump; each side uses its own limit.
   */
  std::vector<double> integrated_density() const {
    std::vector<double> out(N_, 0.0);
    const auto pi = model_.pi();
    const double h = model_.step();
    const std::size_t left_end = std::min(n_, M_);
    // i in [0, min(t, i_max)], values Phi(t - i) + cal_I0(i)
    if (left_end > 0) {
      for (std::size_t k = 0; k <= left_end; ++k) {
        const double w = (k == 0 || k == left_end) ? 0.5 * h : h;
        const auto src = phi_at(n_ - k);
        for (std::size_t j = 0; j < N_; ++j) out[j] += w * pi[k] * src[j];
        if (tables_.has_I0)
          for (std::size_t c = 0; c < tables_.width; ++c) out[tables_.j_lo + c] += w * pi[k] * tables_.cum_at(k, c);
      }
    }
    // i in [t, i_max], values rho0(i - t) + cal_I0(i) - cal_I0(i - t)
    if (n_ < M_) {
      for (std::size_t k = n_; k <= M_; ++k) {
        const double w = (k == n_ || k == M_) ? 0.5 * h : h;
        const std::size_t s = k - n_;
        for (std::size_t c = 0; c < tables_.width; ++c)
          out[tables_.j_lo + c] += w * pi[k] * (tables_.rho0_at(s, c) + tables_.cum_at(k, c) - tables_.cum_at(s, c));
      }
    }
    return out;
  }

private:
  std::span<double> phi_slot(std::size_t m) { return {phi_ring_.data() + (m % slots_) * N_, N_}; }
  std::span<double> kphi_slot(std::size_t m) { return {kphi_ring_.data() + (m % slots_) * N_, N_}; }

  void finish_slice(std::size_t m, std::span<double> phi) {
    for (double& v : phi) {
      detail::ensure(std::isfinite(v) && v >= -1e-12 && v <= S0_ * (1.0 + 1e-12),
                     "simulate: boundary trace left [0, S0]");
      v = std::clamp(v, 0.0, S0_);
    }
    std::span<double> k;
    if (options_.exponential_recursion) {
      kphi_latest_.resize(N_);
      k = kphi_latest_;
    } else {
      k = kphi_slot(m);
    }
    conv_.apply_tail_accurate(phi, k, Extension::constant, cell_rate_);
    if (m == 0 && options_.exponential_recursion) kphi0_.assign(k.begin(), k.end());
    if (options_.keep_history) history_.emplace_back(phi.begin(), phi.end());
  }

  /// rest_ = delta * sum_{k=1}^{K} w_k omega_k K*Phi_{next-k}, K = min(next, M), half weight at k = K.
  void history_sum(std::size_t next) {
    const std::size_t K = std::min(next, M_);
    if (K == 0) return;
    std::vector<double> coeff(K + 1, 0.0);
    std::vector<const double*> rows(K + 1, nullptr);
    for (std::size_t k = 1; k <= K; ++k) {
      coeff[k] = grid_.delta * omega_[k] * (k == K ? 0.5 : 1.0);
      rows[k] = kphi_ring_.data() + ((next - k) % slots_) * N_;
    }
    parallel_for(N_, options_.threads, [&](std::size_t b, std::size_t e) {
      constexpr std::size_t block = 2048;
      for (std::size_t lo = b; lo < e; lo += block) {
        const std::size_t hi = std::min(e, lo + block);
        double* acc = rest_.data();
        for (std::size_t k = 1; k <= K; ++k) {
          const double c = coeff[k];
          if (c == 0.0) continue;
          const double* r = rows[k];
          for (std::size_t j = lo; j < hi; ++j) acc[j] += c * r[j];
        }
      }
    });
  }

  /// Age integrands of G1 and G2 on the data window, before the spatial convolution.
  void window_integrands(std::size_t n, std::span<double> g1, std::span<double> g2) const {
    std::fill(g1.begin(), g1.end(), 0.0);
    std::fill(g2.begin(), g2.end(), 0.0);
    const double h = model_.step();
    const std::size_t W = tables_.width;
    // G1(t) = int_0^{i_max - t} omega(i + t) rho0(i) di
    if (tables_.has_rho0 && n < M_) {
      const std::size_t top = M_ - n;
      for (std::size_t k = 0; k <= top; ++k) {
        const double c = ((k == 0 || k == top) ? 0.5 * h : h) * omega_[k + n];
        if (c == 0.0) continue;
        for (std::size_t w = 0; w < W; ++w) g1[w] += c * tables_.rho0_at(k, w);
      }
    }
    // G2(t) = int_0^t omega cal_I0(i) di + int_t^inf omega (cal_I0(i) - cal_I0(i - t)) di
    if (tables_.has_I0) {
      for (std::size_t k = 0; k <= M_; ++k) {
        const double c = ((k == 0 || k == M_) ? 0.5 * h : h) * omega_[k];
        if (c == 0.0) continue;
        for (std::size_t w = 0; w < W; ++w) {
          const double v = k <= n ? tables_.cum_at(k, w) : tables_.cum_at(k, w) - tables_.cum_at(k - n, w);
          g2[w] += c * v;
        }
      }
    }
  }

  /// Zero-extended direct convolution of a window array onto the full grid.
  void spread_window(std::span<const double> g, std::span<double> out) const {
    const auto taps = conv_.taps();
    const std::size_t base = tables_.j_lo - R_;
    for (std::size_t w = 0; w < g.size(); ++w) {
      if (g[w] == 0.0) continue;
      for (std::size_t l = 0; l < taps.size(); ++l) out[base + w + l] += taps[l] * g[w];
    }
  }

  /// G1 + G2 at step n on [gamma_lo_, gamma_lo_ + size); cached once it stops changing.
  std::span<const double> gamma_window(std::size_t n) {
    if (tables_.width == 0) {
      gamma_lo_ = 0;
      return {};
    }
    if (gamma_frozen_) return gamma_cache_;
    std::vector<double> w1(tables_.width), w2(tables_.width);
    window_integrands(n, w1, w2);
    for (std::size_t w = 0; w < w1.size(); ++w) w1[w] += w2[w];
    gamma_lo_ = tables_.j_lo - R_;
    gamma_cache_.assign(tables_.width + 2 * R_, 0.0);
    const auto taps = conv_.taps();
    for (std::size_t w = 0; w < w1.size(); ++w) {
      if (w1[w] == 0.0) continue;
      for (std::size_t l = 0; l < taps.size(); ++l) gamma_cache_[w + l] += taps[l] * w1[w];
    }
    if (n >= M_) gamma_frozen_ = true;
    return gamma_cache_;
  }

  RateModel model_;
  double S0_;
  SimGrid grid_;
  SpatialGrid space_;
  VolterraOptions options_;
  Convolver conv_;
  SourceTables tables_;
  std::vector<double> omega_;
  std::size_t N_ = 0, R_ = 0, M_ = 0, slots_ = 0, n_ = 0;
  std::vector<double> phi_ring_, kphi_ring_, rest_, guess_, kguess_;
  std::vector<double> H_, kphi0_, kphi_latest_;
  double decay_ = 1.0, omega0_ = 0.0, gamma0_ = 0.0;
  double tail_rate_ = 0.0, cell_rate_ = 0.0, rho_star_ = 0.0;
  std::vector<double> gamma_cache_;
  std::size_t gamma_lo_ = 0;
  bool gamma_frozen_ = false;
  int max_sweeps_used_ = 0;
  std::vector<std::vector<double>> history_;
  std::vector<std::string> notices_;
};

/// Free-function form of VolterraSolver::gamma_terms.
inline std::pair<std::vector<double>, std::vector<double>> compute_gamma_terms(const VolterraSolver& solver,
                                                                               std::size_t n) {
  return solver.gamma_terms(n);
}

/**
 * Cumulative density C(t, x) = int rho(t, i, x) di for constant rates,
 * which solves dC/dt = S0 (1 - exp(-tau0 K*C)) - gamma0 C when the source
 * vanishes. Classical RK4 with step dt and the same discrete convolution as
 * the main solver. The tail-accurate convolution matters: C = 0 is unstable,
 * and plain FFT round-off ahead of the front grows like exp((R0 - 1) gamma0 t).
 * observe(n, C_n) is called after every step and at n = 0.
 */
inline std::vector<double> cumulative_ode_oracle(
    const RateModel& model, const Kernel& kernel, double S0, std::vector<double> C0, double dx, double dt,
    std::size_t n_steps, const std::function<void(std::size_t, std::span<const double>)>& observe = {},
    double kernel_eps = 1e-10, double tail_rate = 0.0) {
  const auto rates = model.constant_rates();
  detail::require(rates.has_value(), "cumulative oracle: only defined for constant rates");
  detail::require(dt > 0.0, "cumulative oracle: dt must be positive");
  const double tau = rates->tau0, gamma = rates->gamma0;
  const std::size_t n = C0.size();
  Convolver conv(kernel.taps(dx, kernel_eps), n);
  const double cell_rate = (tail_rate > 0.0 ? tail_rate : default_tail_rate(model, kernel, S0)) * dx;
  std::vector<double> kc(n), k1(n), k2(n), k3(n), k4(n), tmp(n);
  auto rhs = [&](std::span<const double> c, std::span<double> out) {
    conv.apply_tail_accurate(c, kc, Extension::constant, cell_rate);
    for (std::size_t j = 0; j < n; ++j) out[j] = S0 * -std::expm1(-tau * kc[j]) - gamma * c[j];
  };
  auto& C = C0;
  if (observe) observe(0, C);
  for (std::size_t s = 1; s <= n_steps; ++s) {
    rhs(C, k1);
    for (std::size_t j = 0; j < n; ++j) tmp[j] = C[j] + 0.5 * dt * k1[j];
    rhs(tmp, k2);
    for (std::size_t j = 0; j < n; ++j) tmp[j] = C[j] + 0.5 * dt * k2[j];
    rhs(tmp, k3);
    for (std::size_t j = 0; j < n; ++j) tmp[j] = C[j] + dt * k3[j];
    rhs(tmp, k4);
    for (std::size_t j = 0; j < n; ++j) C[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
    if (observe) observe(s, C);
  }
  return C;
}

} // namespace epiwave
