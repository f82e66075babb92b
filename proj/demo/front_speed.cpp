// Simulates an outbreak seeded by a localized source and compares the
// measured speed of the half-level front with c*.
#include <cstdio>

#include <epiwave/epiwave.hpp>

using namespace epiwave;

int main() {
  const double S0 = 1.0;
  const auto model = build_rate_model(ConstantRates{2.0, 1.0}, 0.02);
  const auto kernel = Kernel::gaussian(1.0);
  const auto d = solve_c_star(model, kernel, S0);
  const double R0 = basic_reproduction_number(model, S0);
  const double rho_star = solve_rho_star(R0);
  std::printf("R0 = %.4f  rho* = %.6f  c* = %.6f  alpha* = %.6f\n", R0, rho_star, d.c_star, d.alpha_star);

  const double t_end = 40.0;
  // room for the front plus ten kernel radii
  const SimGrid grid{0.02, 0.05, d.c_star * t_end + 70.0, t_end};
  InitialData data;
  data.I0 = Bump{};
  VolterraSolver solver(model, kernel, S0, grid, data);
  for (const auto& note : solver.notices()) std::printf("%s\n", note.c_str());

  FrontTracker tracker(0.5, S0, rho_star);
  solver.run([&](std::size_t, std::span<const double> phi) { tracker.record(solver.time(), phi, solver.space()); });

  const auto fit = estimate_speed(tracker.trajectory(), 0.5, speed_burn_in(model, data));
  std::printf("measured speed %.4f (R^2 %.6f), relative gap to c* %.2f%%\n", fit.speed, fit.r_squared,
              100.0 * (fit.speed - d.c_star) / d.c_star);
}
