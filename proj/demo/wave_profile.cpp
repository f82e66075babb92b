// Solves the traveling wave at 1.5 c* and prints a coarse profile.
#include <cstdio>

#include <epiwave/epiwave.hpp>

using namespace epiwave;

int main() {
  const auto model = build_rate_model(ConstantRates{2.0, 1.0}, 0.02);
  const auto kernel = Kernel::gaussian(1.0);
  const auto d = solve_c_star(model, kernel, 1.0);
  const double c = 1.5 * d.c_star;
  const auto p = solve_wave(c, model, kernel, 1.0, d);

  std::printf("c = %.6f  residual = %.3g  tail rate %.6f (alpha_c %.6f)\n", c, p.residual, p.fitted_rate,
              p.alpha_decay);
  for (double z = -20.0; z <= 40.0; z += 5.0) std::printf("%6.1f  %.6e\n", z, p.at(z));
}
