#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "error.hpp"
#include "grid.hpp"
#include "numerics.hpp"
#include "rates.hpp"
#include "stationary.hpp"
#include "volterra.hpp"

namespace epiwave {

/**
 * Rightmost crossing of `threshold` by a sampled field. A cell counts only
 * if it and its two left neighbours reach the threshold, which suppresses
 * isolated noise; the crossing is interpolated linearly towards the next
 * cell. NaN when no such run exists or the run touches the right edge.
 */
inline double front_position(std::span<const double> field, const SpatialGrid& space, double threshold) {
  detail::require(field.size() == space.size(), "front: field length does not match the grid");
  const std::size_t n = field.size();
  if (n < 4) return kNaN;
  for (std::size_t j = n - 1; j >= 2; --j) {
    if (field[j] >= threshold && field[j - 1] >= threshold && field[j - 2] >= threshold) {
      if (j + 1 == n) return kNaN;
      const double a = field[j], b = field[j + 1];
      return space.x(j) + space.step() * (a - threshold) / (a - b);
    }
  }
  return kNaN;
}

struct FrontTrajectory {
  double level = 0.5;
  double threshold = 0.0; ///< level * S0 * rho*
  std::vector<double> times;
  std::vector<double> positions; ///< NaN before ignition

  std::size_t valid_points() const {
    return static_cast<std::size_t>(std::count_if(positions.begin(), positions.end(), [](double x) { return !std::isnan(x); }));
  }

  /// Number of decreases of the recorded position at or after time t0.
  std::size_t retreats_after(double t0) const {
    std::size_t r = 0;
    double prev = kNaN;
    for (std::size_t k = 0; k < times.size(); ++k) {
      if (times[k] < t0 || std::isnan(positions[k])) continue;
      if (!std::isnan(prev) && positions[k] < prev) ++r;
      prev = positions[k];
    }
    return r;
  }
};

/// Collects front positions for one level while a simulation runs.
class FrontTracker {
public:
  FrontTracker(double level, double S0, double rho_star) {
    detail::require(level > 0.0 && level < 1.0, "front: level must lie in (0, 1)");
    traj_.level = level;
    traj_.threshold = level * S0 * rho_star;
  }

  void record(double t, std::span<const double> phi, const SpatialGrid& space) {
    traj_.times.push_back(t);
    traj_.positions.push_back(traj_.threshold > 0.0 ? front_position(phi, space, traj_.threshold) : kNaN);
  }

  const FrontTrajectory& trajectory() const { return traj_; }

private:
  FrontTrajectory traj_;
};

/// Front trajectory of a stored boundary history Phi(t_k, .), t_k = k dt.
inline FrontTrajectory track_front(std::span<const std::vector<double>> phi_history, double dt,
                                   const SpatialGrid& space, double S0, double rho_star, double level) {
  FrontTracker tracker(level, S0, rho_star);
  for (std::size_t k = 0; k < phi_history.size(); ++k)
    tracker.record(static_cast<double>(k) * dt, phi_history[k], space);
  return tracker.trajectory();
}

struct SpeedEstimate {
  double speed = 0.0;
  double standard_error = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::size_t points = 0;
  double t_begin = 0.0; ///< fit window
  double t_end = 0.0;

  /// Fits with R^2 below 0.999 are reported but not trusted.
  bool accepted() const { return r_squared >= 0.999; }
};

/**
 * Ordinary least squares of position on time over the last
 * window_fraction of the valid points recorded at t >= burn_in.
 */
inline SpeedEstimate estimate_speed(const FrontTrajectory& traj, double window_fraction = 0.5, double burn_in = 0.0) {
  detail::require(window_fraction > 0.0 && window_fraction <= 1.0, "speed: window fraction must lie in (0, 1]");
  std::vector<std::size_t> valid;
  for (std::size_t k = 0; k < traj.times.size(); ++k)
    if (traj.times[k] >= burn_in && !std::isnan(traj.positions[k])) valid.push_back(k);
  const auto take = static_cast<std::size_t>(std::floor(window_fraction * static_cast<double>(valid.size())));
  detail::ensure(take >= 20, "speed: fewer than 20 valid front positions in the fit window");
  const std::span<const std::size_t> win(valid.data() + (valid.size() - take), take);
  double mt = 0.0, mx = 0.0;
  for (std::size_t k : win) {
    mt += traj.times[k];
    mx += traj.positions[k];
  }
  const double n = static_cast<double>(take);
  mt /= n;
  mx /= n;
  double stt = 0.0, stx = 0.0, sxx = 0.0;
  for (std::size_t k : win) {
    const double dt = traj.times[k] - mt, dx = traj.positions[k] - mx;
    stt += dt * dt;
    stx += dt * dx;
    sxx += dx * dx;
  }
  detail::ensure(stt > 0.0, "speed: fit window has no time spread");
  SpeedEstimate e;
  e.points = take;
  e.speed = stx / stt;
  e.intercept = mx - e.speed * mt;
  const double ssr = std::max(0.0, sxx - e.speed * stx);
  e.standard_error = std::sqrt(ssr / (n - 2.0) / stt);
  e.r_squared = sxx > 0.0 ? 1.0 - ssr / sxx : 1.0;
  e.t_begin = traj.times[win.front()];
  e.t_end = traj.times[win.back()];
  return e;
}

/**
 * Smallest age of the overlap between the interiors of supp(tau) and of
 * the source's age support, resolved on the age grid; NaN when they are
 * disjoint. Past t > i_star the boundary trace is positive everywhere.
 */
inline double positivity_onset_age(const RateModel& model, const Bump& source) {
  const auto ages = model.ages();
  const auto tau = model.tau();
  for (std::size_t k = 0; k + 1 < ages.size(); ++k) {
    if (ages[k + 1] <= source.i_lo) continue;
    if (ages[k] >= source.i_hi) break;
    if (tau[k] > 0.0 && tau[k + 1] > 0.0) return std::max(source.i_lo, ages[k]);
  }
  return kNaN;
}

/// Fits start after max(10, 2 i_star).
inline double speed_burn_in(const RateModel& model, const InitialData& data) {
  double b = 10.0;
  if (data.I0) {
    const double is = positivity_onset_age(model, *data.I0);
    if (!std::isnan(is)) b = std::max(b, 2.0 * is);
  }
  return b;
}

/**
 * sup |rho(t, i, x) - U(i, x)| over |x| <= r and ages i <= i_max at the
 * solver's current time.
 */
inline double longtime_discrepancy(const VolterraSolver& solver, const StationaryState& U, double r, double i_max) {
  const auto& space = solver.space();
  const auto& model = solver.model();
  detail::require(r >= 0.0 && r <= space.half_width(), "longtime: region exceeds the spatial grid");
  detail::require(i_max >= 0.0 && i_max <= model.age_max() + 1e-12, "longtime: region exceeds the age grid");
  detail::require(U.phi_hat.size() == space.size(), "longtime: stationary state is on a different grid");
  const std::size_t N = space.size();
  const auto pi = model.pi();
  std::vector<double> row(N);
  double worst = 0.0;
  for (std::size_t k = 0; k < solver.age_rows() && model.ages()[k] <= i_max + 1e-12; ++k) {
    solver.reconstruct_row(k, row);
    const auto u = U.row(k);
    for (std::size_t j = 0; j < N; ++j)
      if (std::abs(space.x(j)) <= r) worst = std::max(worst, std::abs(row[j] * pi[k] - u[j]));
  }
  return worst;
}

/// sup of rho(t, i, x) over all ages and |x| >= r (r = 0: the whole grid).
inline double sup_density_beyond(const VolterraSolver& solver, double r) {
  const auto& space = solver.space();
  detail::require(r >= 0.0 && r <= space.half_width(), "longtime: region exceeds the spatial grid");
  const std::size_t N = space.size();
  const auto pi = solver.model().pi();
  std::vector<double> row(N);
  double worst = 0.0;
  for (std::size_t k = 0; k < solver.age_rows(); ++k) {
    solver.reconstruct_row(k, row);
    for (std::size_t j = 0; j < N; ++j)
      if (std::abs(space.x(j)) >= r) worst = std::max(worst, row[j] * pi[k]);
  }
  return worst;
}

} // namespace epiwave
