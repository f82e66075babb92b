// epiwave: command-line front end for the age-of-infection solvers.
//
// Exit codes: 0 success, 2 invalid configuration or usage, 3 numerical
// failure, 4 an acceptance criterion failed.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fftw3.h>

#include <epiwave/acceptance.hpp>
#include <epiwave/epiwave.hpp>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace epiwave;

namespace {

struct Common {
  std::string config_path;
  std::string out_dir;
  std::vector<std::string> overrides;
  unsigned threads = 0;
};

struct Context {
  Config cfg;
  fs::path out;
  unsigned threads = 1;
  double S0 = 1.0;

  RateModel model() const { return make_rate_model(cfg); }
  Kernel kernel() const { return make_kernel(cfg); }
};

Context load(const Common& c) {
  Context ctx;
  if (!c.config_path.empty()) ctx.cfg = Config::from_file(c.config_path);
  for (const auto& o : c.overrides) ctx.cfg.apply_override(o);
  if (!c.out_dir.empty()) ctx.cfg.set("output.dir", c.out_dir);
  validate_config(ctx.cfg);
  ctx.out = ctx.cfg.text("output.dir");
  ctx.S0 = ctx.cfg.number("S0");
  ctx.threads = c.threads;
  if (ctx.threads == 0) {
    if (const char* env = std::getenv("EPIWAVE_THREADS")) ctx.threads = static_cast<unsigned>(std::strtoul(env, nullptr, 10));
  }
  if (ctx.threads == 0) ctx.threads = 1;
  return ctx;
}

json metadata(const Context& ctx, const std::string& command) {
  return {{"command", command},
          {"version", EPIWAVE_VERSION},
          {"fftw", std::string(fftw_version)},
          {"config_hash", ctx.cfg.hash()},
          {"config", ctx.cfg.to_json()},
          {"threads", ctx.threads}};
}

void finish(const Context& ctx, const std::string& command, json record, double seconds) {
  record["meta"] = metadata(ctx, command);
  record["meta"]["seconds"] = seconds;
  const fs::path p = ctx.out / (command + ".json");
  io::write_json(p, record);
  // one compact line per run, appended
  std::ofstream(ctx.out / "metadata.ndjson", std::ios::app) << record.dump() << '\n';
  std::printf("wrote %s\n", p.c_str());
}

/// grid.X, or its automatic value when 0.
double half_width(const Context& ctx, const RateModel& model, const Kernel& kernel) {
  const double X = ctx.cfg.number("grid.X");
  if (X > 0.0) return X;
  if (basic_reproduction_number(model, ctx.S0) <= 1.0) return 50.0;
  return 1.5 * solve_c_star(model, kernel, ctx.S0).c_star * ctx.cfg.number("grid.t_end");
}

std::string tag(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

json dispersion_json(const DispersionResult& d) {
  return {{"c_star", io::number(d.c_star)},       {"alpha_star", io::number(d.alpha_star)},
          {"residual", io::number(d.residual)},   {"derivative", io::number(d.derivative)},
          {"local_minima", d.local_minima},       {"lambda_estimated", d.lambda_estimated}};
}

int cmd_config(const Context& ctx) {
  std::printf("# hash %s\n%s", ctx.cfg.hash().c_str(), ctx.cfg.canonical().c_str());
  return 0;
}

int cmd_r0(const Context& ctx) {
  const auto model = ctx.model();
  const double R0 = basic_reproduction_number(model, ctx.S0);
  const double rs = solve_rho_star(R0);
  std::printf("R0 = %.12g\nrho* = %.12g\n", R0, rs);
  finish(ctx, "r0",
         {{"R0", R0}, {"rho_star", rs}, {"residual", rho_star_residual(R0, rs)}, {"i_dagger", io::number(model.i_dagger())},
          {"age_max", model.age_max()}},
         0.0);
  return 0;
}

int cmd_dispersion(const Context& ctx) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto model = ctx.model();
  const auto kernel = ctx.kernel();
  const auto d = solve_c_star(model, kernel, ctx.S0);
  std::printf("c* = %.12g\nalpha* = %.12g\n", d.c_star, d.alpha_star);
  // c(alpha) on (0, min(Lambda, 4 alpha*))
  const auto n = static_cast<std::size_t>(ctx.cfg.get<std::int64_t>("dispersion.samples"));
  const double top = std::min(kernel.abscissa(), 4.0 * d.alpha_star);
  std::vector<double> a(n), c(n), phi(n);
  for (std::size_t k = 0; k < n; ++k) {
    a[k] = top * static_cast<double>(k + 1) / static_cast<double>(n + 1);
    c[k] = c_of_alpha(model, kernel, ctx.S0, a[k]);
    phi[k] = phi_c(model, kernel, ctx.S0, d.c_star, a[k]);
  }
  io::write_csv(ctx.out / "dispersion.csv", {"alpha", "c_of_alpha", "phi_at_c_star"}, {a, c, phi});
  auto rec = dispersion_json(d);
  rec["R0"] = basic_reproduction_number(model, ctx.S0);
  const auto dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  finish(ctx, "dispersion", rec, dt);
  return 0;
}

int cmd_stationary(const Context& ctx) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto model = ctx.model();
  const auto kernel = ctx.kernel();
  const double X = half_width(ctx, model, kernel);
  const SpatialGrid space(X, ctx.cfg.number("grid.dx"));
  const auto st = solve_U(model, kernel, ctx.S0, make_bump(ctx.cfg, "init.I0"), space);
  std::vector<double> xs(space.size());
  for (std::size_t j = 0; j < xs.size(); ++j) xs[j] = space.x(j);
  io::write_csv(ctx.out / "stationary.csv", {"x", "phi_hat", "phi_hat_minus_rho_star", "A", "B"}, {xs, st.phi_hat, st.eta, st.A, st.B});
  json rec = {{"R0", st.R0}, {"rho_star", st.rho_star}, {"sweeps", st.sweeps}, {"monotonicity_violations", st.monotonicity_violations},
              {"X", X}};
  if (st.R0 > 1.0) {
    const double xn = ctx.cfg.number("stationary.x_norm") > 0.0 ? ctx.cfg.number("stationary.x_norm") : 0.75 * X;
    const auto lam = solve_lambda(kernel, st.R0, st.rho_star, xn);
    rec["lambda"] = {{"x_norm", xn}, {"lambda", lam.lambda}, {"relative_residual", lam.relative_residual}};
    std::printf("rho* = %.12g, lambda(%g) = %.8g\n", st.rho_star, xn, lam.lambda);
  }
  const auto dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  finish(ctx, "stationary", rec, dt);
  return 0;
}

VolterraSolver make_solver(const Context& ctx, const RateModel& model, const Kernel& kernel, double X) {
  const SimGrid grid{ctx.cfg.number("grid.delta"), ctx.cfg.number("grid.dx"), X, ctx.cfg.number("grid.t_end")};
  VolterraOptions vo;
  vo.threads = ctx.threads;
  vo.exponential_recursion = ctx.cfg.get<bool>("simulate.recursion");
  VolterraSolver s(model, kernel, ctx.S0, grid, make_initial_data(ctx.cfg), vo);
  for (const auto& n : s.notices()) std::printf("notice: %s\n", n.c_str());
  return s;
}

int cmd_simulate(const Context& ctx) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto model = ctx.model();
  const auto kernel = ctx.kernel();
  auto s = make_solver(ctx, model, kernel, half_width(ctx, model, kernel));
  const double delta = ctx.cfg.number("grid.delta");
  std::vector<std::size_t> marks;
  for (double t : ctx.cfg.list("simulate.snapshots"))
    if (t >= 0.0 && t < ctx.cfg.number("grid.t_end")) marks.push_back(static_cast<std::size_t>(std::llround(t / delta)));
  marks.push_back(s.total_steps());
  const auto rows = static_cast<std::size_t>(ctx.cfg.get<std::int64_t>("simulate.age_rows"));
  const double every = ctx.cfg.number("simulate.boundary_interval");
  const auto stride = every > 0.0 ? std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(every / delta))) : 0;
  const auto& space = s.space();
  std::vector<double> xs(space.size());
  for (std::size_t j = 0; j < xs.size(); ++j) xs[j] = space.x(j);
  std::vector<double> times, density, bt, bx, bv;
  json snaps = json::array();
  s.run([&](std::size_t n, std::span<const double> phi) {
    const double t = s.time();
    const bool mark = std::find(marks.begin(), marks.end(), n) != marks.end();
    if (mark || (stride > 0 && n % stride == 0)) {
      for (std::size_t j = 0; j < phi.size(); ++j) {
        bt.push_back(t);
        bx.push_back(xs[j]);
        bv.push_back(phi[j]);
      }
    }
    if (!mark) return;
    times.push_back(t);
    const auto c = s.integrated_density();
    density.insert(density.end(), c.begin(), c.end());
    json snap = {{"t", t}};
    if (rows > 0) {
      const auto f = s.physical_field(rows);
      const std::size_t r = f.size() / xs.size();
      const std::vector<double> ages(model.ages().begin(), model.ages().begin() + static_cast<std::ptrdiff_t>(r));
      const auto name = "field_t" + tag(t) + ".csv";
      io::write_matrix_csv(ctx.out / name, "age", ages, xs, f);
      snap["field"] = name;
    }
    snaps.push_back(snap);
  });
  io::write_csv(ctx.out / "boundary.csv", {"t", "x", "value"}, {bt, bx, bv});
  io::write_matrix_csv(ctx.out / "integrated_density.csv", "t", times, xs, density);
  const auto dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("simulated to t = %g on [-%g, %g] in %.1f s\n", s.time(), space.half_width(), space.half_width(), dt);
  finish(ctx, "simulate",
         {{"R0", basic_reproduction_number(model, ctx.S0)}, {"X", space.half_width()}, {"steps", s.total_steps()},
          {"rate_preset", ctx.cfg.text("rates.preset")}, {"kernel_preset", ctx.cfg.text("kernel.preset")},
          {"snapshots", snaps}, {"notices", s.notices()}, {"max_inner_sweeps", s.max_inner_sweeps_used()}},
         dt);
  return 0;
}

int cmd_spread(const Context& ctx) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto model = ctx.model();
  const auto kernel = ctx.kernel();
  const double R0 = basic_reproduction_number(model, ctx.S0);
  detail::require(R0 > 1.0, "spread: needs R0 > 1");
  const auto d = solve_c_star(model, kernel, ctx.S0);
  const double rs = solve_rho_star(R0);
  auto s = make_solver(ctx, model, kernel, half_width(ctx, model, kernel));
  std::vector<FrontTracker> trackers;
  for (double l : ctx.cfg.list("spread.levels")) trackers.emplace_back(l, ctx.S0, rs);
  s.run([&](std::size_t, std::span<const double> phi) {
    for (auto& t : trackers) t.record(s.time(), phi, s.space());
  });
  const double burn = speed_burn_in(model, make_initial_data(ctx.cfg));
  std::vector<std::string> header{"t"};
  std::vector<std::vector<double>> cols{trackers.front().trajectory().times};
  json levels = json::array();
  for (const auto& t : trackers) {
    const auto& tr = t.trajectory();
    header.push_back("front_" + tag(tr.level));
    cols.push_back(tr.positions);
    json lv = {{"level", tr.level}, {"threshold", tr.threshold}, {"retreats_after_burn_in", tr.retreats_after(burn)}};
    try {
      const auto e = estimate_speed(tr, ctx.cfg.number("spread.window_fraction"), burn);
      lv["speed"] = e.speed;
      lv["standard_error"] = e.standard_error;
      lv["r_squared"] = e.r_squared;
      lv["accepted"] = e.accepted();
      lv["relative_to_c_star"] = (e.speed - d.c_star) / d.c_star;
      std::printf("level %.2f: speed %.6f (c* = %.6f)%s\n", tr.level, e.speed, d.c_star, e.accepted() ? "" : " [low R^2]");
    } catch (const NumericalError& err) {
      lv["error"] = err.what();
      std::printf("level %.2f: %s\n", tr.level, err.what());
    }
    levels.push_back(lv);
  }
  io::write_csv(ctx.out / "fronts.csv", header, cols);
  json rec = {{"c_star", d.c_star}, {"burn_in", burn}, {"levels", levels}, {"t_end", s.time()}};
  if (const auto I0 = make_bump(ctx.cfg, "init.I0")) {
    const auto U = solve_U(model, kernel, ctx.S0, I0, s.space());
    const double r = std::min(ctx.cfg.number("spread.region"), s.space().half_width());
    const double i_max = std::min(ctx.cfg.number("spread.i_max"), model.age_max());
    rec["longtime_discrepancy"] = {{"region", r}, {"i_max", i_max}, {"value", longtime_discrepancy(s, U, r, i_max)}};
  }
  const double ahead = ctx.cfg.number("spread.ahead_factor") * d.c_star * s.time();
  if (ahead <= s.space().half_width()) rec["ahead"] = {{"from", ahead}, {"sup_density", sup_density_beyond(s, ahead)}};
  const auto dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  finish(ctx, "spread", rec, dt);
  return 0;
}

int cmd_wave(const Context& ctx) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto model = ctx.model();
  const auto kernel = ctx.kernel();
  detail::require(basic_reproduction_number(model, ctx.S0) > 1.0, "wave: needs R0 > 1");
  const auto d = solve_c_star(model, kernel, ctx.S0);
  std::vector<double> speeds = ctx.cfg.list("wave.speeds");
  if (speeds.empty())
    for (double f : ctx.cfg.list("wave.factors")) speeds.push_back(f * d.c_star);
  WaveOptions wo;
  wo.grid.Z = ctx.cfg.number("wave.Z");
  wo.grid.dz = ctx.cfg.number("wave.dz");
  wo.max_age_step = ctx.cfg.number("wave.max_age_step");
  const auto rows = static_cast<std::size_t>(ctx.cfg.get<std::int64_t>("wave.field_rows"));
  json waves = json::array();
  for (double c : speeds) {
    const auto p = solve_wave(c, model, kernel, ctx.S0, d, wo);
    const auto name = "wave_c" + tag(c);
    io::write_csv(ctx.out / (name + ".csv"), {"z", "chi"}, {p.z, p.chi});
    const bool critical = p.regime == WaveRegime::critical;
    const double target = critical ? d.alpha_star : alpha_c(model, kernel, ctx.S0, d, c);
    json w = {{"c", c},
              {"regime", critical ? "critical" : "supercritical"},
              {"file", name + ".csv"},
              {"residual", p.residual},
              {"iterations", p.iterations},
              {"converged", p.converged},
              {"polish_steps", p.polish_steps},
              {"gmres_iterations", p.gmres_iterations},
              {"age_step", p.age_step},
              {"fitted_rate", p.fitted_rate},
              {"alpha", target},
              {"bracket_verified", p.bracket_verified},
              {"bracket_violations", p.bracket_violations},
              {"monotonicity_violations", p.monotonicity_violations}};
    if (rows > 0) {
      const std::size_t r = std::min(rows, model.size());
      std::vector<double> ages(model.ages().begin(), model.ages().begin() + static_cast<std::ptrdiff_t>(r)), f;
      for (std::size_t k = 0; k < r; ++k) {
        const auto row = wave_field_row(p, model, ctx.S0, k);
        f.insert(f.end(), row.begin(), row.end());
      }
      io::write_matrix_csv(ctx.out / (name + "_field.csv"), "age", ages, p.z, f);
      w["field"] = name + "_field.csv";
    }
    std::printf("c = %.6f: residual %.2e, tail rate %.6f (alpha %.6f)\n", c, p.residual, p.fitted_rate, target);
    waves.push_back(w);
  }
  const auto dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  finish(ctx, "wave", {{"dispersion", dispersion_json(d)}, {"waves", waves}}, dt);
  return 0;
}

int cmd_validate(const Context& ctx, const std::vector<int>& only) {
  acceptance::Options o;
  o.threads = ctx.threads;
  o.only = only;
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = acceptance::run(o, [](const acceptance::Result& r) {
    std::printf("%s\n", acceptance::format_line(r).c_str());
    std::fflush(stdout);
  });
  const auto dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  auto rec = acceptance::to_json(results);
  const bool ok = rec["all_passed"].get<bool>();
  finish(ctx, "validate", rec, dt);
  return ok ? 0 : 4;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nonlocal age-of-infection epidemic model: simulation, stationary states, dispersion and traveling waves"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", common.config_path, "TOML or JSON configuration file")->check(CLI::ExistingFile);
    sub->add_option("-o,--out", common.out_dir, "output directory (overrides output.dir)");
    sub->add_option("-s,--override,--set", common.overrides, "override a config key: key=value (repeatable)");
    sub->add_option("-j,--threads", common.threads, "worker threads (default EPIWAVE_THREADS or 1)");
  };
  std::vector<int> only;
  std::function<int(const Context&)> action;
  auto sub = [&](const char* name, const char* help, std::function<int(const Context&)> f) {
    auto* s = app.add_subcommand(name, help);
    add_common(s);
    s->callback([&action, f] { action = f; });
    return s;
  };
  sub("config", "print the resolved configuration in canonical TOML", cmd_config);
  sub("r0", "basic reproduction number and rho*", cmd_r0);
  sub("dispersion", "minimal wave speed c* and alpha*", cmd_dispersion);
  sub("stationary", "heterogeneous stationary state U", cmd_stationary);
  sub("simulate", "time-dependent solution", cmd_simulate);
  sub("spread", "front tracking and speed estimate", cmd_spread);
  sub("wave", "traveling-wave profiles", cmd_wave);
  auto* v = sub("validate", "run the acceptance criteria", [&only](const Context& c) { return cmd_validate(c, only); });
  v->add_option("--only", only, "criteria to run (1-10)")->check(CLI::Range(1, 10));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  try {
    return action(load(common));
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  }
}
