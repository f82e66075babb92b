#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <variant>
#include <vector>

#include <json.hpp>
#include <toml.hpp>

#include "error.hpp"
#include "grid.hpp"
#include "io.hpp"
#include "kernel.hpp"
#include "rates.hpp"

namespace epiwave {

/**
 * Experiment configuration as an ordered set of dotted keys. Every key has
 * a registered default and type; files and overrides may only set known
 * keys. The canonical form lists every key in registry order, grouped
 * into TOML sections, with numbers at 17 significant digits.
 */
class Config {
public:
  using Value = std::variant<double, std::int64_t, bool, std::string, std::vector<double>>;

  struct Entry {
    std::string key;
    Value value;
    std::string help;
  };

  Config() : entries_(defaults()) {}

  static Config from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    detail::require(static_cast<bool>(in), "config: cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    const auto ext = path.extension().string();
    return ext == ".json" ? from_json(ss.str()) : from_toml(ss.str(), path.string());
  }

  static Config from_toml(std::string_view text, const std::string& source = "config") {
    Config c;
    toml::table t;
    try {
      t = toml::parse(text, source);
    } catch (const toml::parse_error& e) {
      std::ostringstream msg;
      msg << "config: " << e.description() << " (" << source << ":" << e.source().begin.line << ")";
      throw ConfigError(msg.str());
    }
    c.ingest_toml(t, "");
    return c;
  }

  static Config from_json(std::string_view text) {
    Config c;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    detail::require(j.is_object(), "config: JSON root must be an object");
    c.ingest_json(j, "");
    return c;
  }

  /// key=value, value in TOML syntax; bare words are accepted for string keys.
  void apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    detail::require(eq != std::string::npos, "config: override must look like key=value: " + assignment);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(assignment.substr(0, eq));
    const std::string text = trim(assignment.substr(eq + 1));
    Entry& e = find(key);
    if (std::holds_alternative<std::string>(e.value) && (text.empty() || (text.front() != '"' && text.front() != '\''))) {
      e.value = text;
      return;
    }
    toml::table t;
    try {
      t = toml::parse(std::string_view("v = " + text), std::string_view("override"));
    } catch (const toml::parse_error&) {
      throw ConfigError("config: cannot parse the value of override " + assignment);
    }
    assign(e, *t.get("v"));
  }

  template <class T>
  const T& get(const std::string& key) const {
    const Entry& e = find(key);
    const T* v = std::get_if<T>(&e.value);
    detail::require(v != nullptr, "config: internal type mismatch for " + key);
    return *v;
  }

  double number(const std::string& key) const { return get<double>(key); }
  const std::string& text(const std::string& key) const { return get<std::string>(key); }
  const std::vector<double>& list(const std::string& key) const { return get<std::vector<double>>(key); }

  void set(const std::string& key, Value v) {
    Entry& e = find(key);
    detail::require(e.value.index() == v.index(), "config: wrong type for " + key);
    e.value = std::move(v);
  }

  const std::vector<Entry>& entries() const { return entries_; }

  std::string canonical() const {
    std::string out;
    std::string section = "\x01";
    for (const auto& e : entries_) {
      const auto dot = e.key.rfind('.');
      const std::string sec = dot == std::string::npos ? "" : e.key.substr(0, dot);
      const std::string leaf = dot == std::string::npos ? e.key : e.key.substr(dot + 1);
      if (sec != section) {
        if (!sec.empty()) out += (out.empty() ? "[" : "\n[") + sec + "]\n";
        section = sec;
      }
      out += leaf + " = " + format(e.value) + "\n";
    }
    return out;
  }

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& e : entries_) {
      std::visit([&](const auto& v) { j[e.key] = v; }, e.value);
    }
    return j;
  }

  /// FNV-1a (64 bit) of the canonical form, as 16 hex digits.
  std::string hash() const {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : canonical()) {
      h ^= ch;
      h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }

private:
  std::vector<Entry> entries_;

  static std::vector<Entry> defaults() {
    using V = std::vector<double>;
    auto bump = [](const std::string& p, const char* preset) {
      return std::vector<Entry>{
          {p + ".preset", std::string(preset), "zero | bump"},
          {p + ".i_lo", 0.0, "age support lower end"},
          {p + ".i_hi", 1.0, "age support upper end"},
          {p + ".x_center", 0.0, ""},
          {p + ".x_halfwidth", 1.0, ""},
          {p + ".height", 1.0, "peak of the normalized density"},
          {p + ".shape", std::string("smooth"), "smooth | hat"},
      };
    };
    std::vector<Entry> d = {
        {"S0", 1.0, "susceptible density"},
        {"seed", std::int64_t{1}, "RNG seed for randomized checks"},
        {"rates.preset", std::string("constant"), "constant | finite_age | tabulated"},
        {"rates.tau0", 2.0, ""},
        {"rates.gamma0", 1.0, "constant preset"},
        {"rates.i_dagger", 1.0, "finite_age preset"},
        {"rates.tau_file", std::string(), "tabulated: CSV (age, tau)"},
        {"rates.gamma_file", std::string(), "tabulated: CSV (age, gamma), or give pi_file"},
        {"rates.pi_file", std::string(), "tabulated: CSV (age, pi)"},
        {"kernel.preset", std::string("gaussian"), "gaussian | laplace | tabulated"},
        {"kernel.sigma", 1.0, "gaussian"},
        {"kernel.b", 0.5, "laplace"},
        {"kernel.file", std::string(), "tabulated: CSV (z >= 0, K0)"},
        {"grid.delta", 0.02, "time and age step"},
        {"grid.dx", 0.05, ""},
        {"grid.X", 0.0, "half width; 0 picks 1.5 c* t_end (50 when R0 <= 1)"},
        {"grid.t_end", 100.0, ""},
    };
    for (auto& e : bump("init.rho0", "zero")) d.push_back(std::move(e));
    for (auto& e : bump("init.I0", "bump")) d.push_back(std::move(e));
    const std::vector<Entry> rest = {
        {"simulate.snapshots", V{}, "snapshot times; t_end is always written"},
        {"simulate.age_rows", std::int64_t{0}, "age rows of the field written per snapshot"},
        {"simulate.boundary_interval", 1.0, "time between boundary-trace records; 0 writes snapshots only"},
        {"simulate.recursion", false, "constant rates: one-step history recursion"},
        {"stationary.x_norm", 0.0, "far-field lambda at this |x|; 0 picks 0.75 X"},
        {"dispersion.samples", std::int64_t{400}, ""},
        {"wave.factors", V{1.0, 2.0}, "speeds as multiples of c*"},
        {"wave.speeds", V{}, "absolute speeds; replace factors when given"},
        {"wave.Z", 200.0, ""},
        {"wave.dz", 0.02, ""},
        {"wave.max_age_step", 0.005, ""},
        {"wave.field_rows", std::int64_t{0}, "age rows of w_c(i, z) to write"},
        {"spread.levels", V{0.1, 0.5, 0.9}, ""},
        {"spread.window_fraction", 0.5, ""},
        {"spread.region", 10.0, "|x| <= region for the comparison with U"},
        {"spread.i_max", 2.0, "ages <= i_max for the comparison with U"},
        {"spread.ahead_factor", 1.2, "ahead region |x| >= factor c* t_end"},
        {"output.dir", std::string("out"), ""},
    };
    for (const auto& e : rest) d.push_back(e);
    return d;
  }

  Entry& find(const std::string& key) {
    for (auto& e : entries_)
      if (e.key == key) return e;
    throw ConfigError("config: unknown key '" + key + "'");
  }
  const Entry& find(const std::string& key) const { return const_cast<Config*>(this)->find(key); }

  static std::string format(const Value& v) {
    return std::visit(
        [](const auto& x) -> std::string {
          using T = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<T, double>) {
            return format_number(x);
          } else if constexpr (std::is_same_v<T, std::int64_t>) {
            return std::to_string(x);
          } else if constexpr (std::is_same_v<T, bool>) {
            return x ? "true" : "false";
          } else if constexpr (std::is_same_v<T, std::string>) {
            std::string s = "\"";
            for (char ch : x) {
              if (ch == '"' || ch == '\\') s += '\\';
              s += ch;
            }
            return s + "\"";
          } else {
            std::string s = "[";
            for (std::size_t k = 0; k < x.size(); ++k) s += (k ? ", " : "") + format_number(x[k]);
            return s + "]";
          }
        },
        v);
  }

  /// TOML float literal at 17 significant digits (always with '.', 'e' or inf/nan).
  static std::string format_number(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    std::string s = io::format_double(x);
    if (s.find_first_of(".e") == std::string::npos) s += ".0";
    return s;
  }

  void ingest_toml(const toml::table& t, const std::string& prefix) {
    for (const auto& [k, node] : t) {
      const std::string key = prefix.empty() ? std::string(k.str()) : prefix + "." + std::string(k.str());
      if (const auto* sub = node.as_table()) {
        ingest_toml(*sub, key);
        continue;
      }
      assign(find(key), node);
    }
  }

  static void assign(Entry& e, const toml::node& node) {
    const std::string& key = e.key;
    auto bad = [&]() { return ConfigError("config: wrong type for " + key); };
    if (std::holds_alternative<double>(e.value)) {
      if (const auto v = node.value<double>(); v && (node.is_floating_point() || node.is_integer())) e.value = *v;
      else throw bad();
    } else if (std::holds_alternative<std::int64_t>(e.value)) {
      if (const auto v = node.value_exact<std::int64_t>()) e.value = *v;
      else throw bad();
    } else if (std::holds_alternative<bool>(e.value)) {
      if (const auto v = node.value_exact<bool>()) e.value = *v;
      else throw bad();
    } else if (std::holds_alternative<std::string>(e.value)) {
      if (const auto v = node.value_exact<std::string>()) e.value = *v;
      else throw bad();
    } else {
      const auto* arr = node.as_array();
      if (!arr) throw bad();
      std::vector<double> xs;
      for (const auto& item : *arr) {
        const auto v = item.value<double>();
        if (!v || !(item.is_floating_point() || item.is_integer())) throw bad();
        xs.push_back(*v);
      }
      e.value = std::move(xs);
    }
  }

  void ingest_json(const nlohmann::json& j, const std::string& prefix) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
      if (it->is_object()) {
        ingest_json(*it, key);
        continue;
      }
      Entry& e = find(key);
      auto bad = [&]() { return ConfigError("config: wrong type for " + key); };
      const auto& v = *it;
      if (std::holds_alternative<double>(e.value)) {
        if (!v.is_number()) throw bad();
        e.value = v.get<double>();
      } else if (std::holds_alternative<std::int64_t>(e.value)) {
        if (!v.is_number_integer()) throw bad();
        e.value = v.get<std::int64_t>();
      } else if (std::holds_alternative<bool>(e.value)) {
        if (!v.is_boolean()) throw bad();
        e.value = v.get<bool>();
      } else if (std::holds_alternative<std::string>(e.value)) {
        if (!v.is_string()) throw bad();
        e.value = v.get<std::string>();
      } else {
        if (!v.is_array()) throw bad();
        std::vector<double> xs;
        for (const auto& item : v) {
          if (!item.is_number()) throw bad();
          xs.push_back(item.get<double>());
        }
        e.value = std::move(xs);
      }
    }
  }
};

inline RatePreset make_rate_preset(const Config& c) {
  const std::string& p = c.text("rates.preset");
  const double tau0 = c.number("rates.tau0");
  if (p == "constant") return ConstantRates{tau0, c.number("rates.gamma0")};
  if (p == "finite_age") return FiniteAgeRates{tau0, c.number("rates.i_dagger")};
  if (p == "tabulated") {
    const auto& tf = c.text("rates.tau_file");
    const auto& gf = c.text("rates.gamma_file");
    const auto& pf = c.text("rates.pi_file");
    detail::require(!tf.empty(), "config: tabulated rates need rates.tau_file");
    detail::require(gf.empty() != pf.empty(), "config: tabulated rates need exactly one of rates.gamma_file, rates.pi_file");
    TabulatedRates t;
    std::vector<double> tau_ages;
    std::tie(tau_ages, t.tau) = io::read_two_column_csv(tf);
    std::vector<double> ages;
    if (!gf.empty()) std::tie(ages, t.gamma) = io::read_two_column_csv(gf);
    else std::tie(ages, t.pi) = io::read_two_column_csv(pf);
    detail::require(ages == tau_ages, "config: tabulated tau and gamma/pi files must share the same ages");
    t.ages = std::move(ages);
    return t;
  }
  throw ConfigError("config: unknown rate preset '" + p + "'");
}

inline RateModel make_rate_model(const Config& c) { return build_rate_model(make_rate_preset(c), c.number("grid.delta")); }

inline Kernel make_kernel(const Config& c) {
  const std::string& p = c.text("kernel.preset");
  if (p == "gaussian") return Kernel::gaussian(c.number("kernel.sigma"));
  if (p == "laplace") return Kernel::laplace(c.number("kernel.b"));
  if (p == "tabulated") {
    detail::require(!c.text("kernel.file").empty(), "config: tabulated kernel needs kernel.file");
    auto [z, k0] = io::read_two_column_csv(c.text("kernel.file"));
    return Kernel::tabulated(std::move(z), std::move(k0));
  }
  // compactly supported kernels violate K > 0 and are not offered
  throw ConfigError("config: unknown kernel preset '" + p + "' (kernels must be positive everywhere)");
}

inline std::optional<Bump> make_bump(const Config& c, const std::string& prefix) {
  const std::string& p = c.text(prefix + ".preset");
  if (p == "zero") return std::nullopt;
  detail::require(p == "bump", "config: " + prefix + ".preset must be zero or bump");
  Bump b;
  b.i_lo = c.number(prefix + ".i_lo");
  b.i_hi = c.number(prefix + ".i_hi");
  b.x_center = c.number(prefix + ".x_center");
  b.x_halfwidth = c.number(prefix + ".x_halfwidth");
  b.height = c.number(prefix + ".height");
  const std::string& shape = c.text(prefix + ".shape");
  detail::require(shape == "smooth" || shape == "hat", "config: " + prefix + ".shape must be smooth or hat");
  b.shape = shape == "hat" ? BumpShape::hat : BumpShape::smooth;
  b.validate(prefix.c_str());
  return b;
}

inline InitialData make_initial_data(const Config& c) { return {make_bump(c, "init.rho0"), make_bump(c, "init.I0")}; }

/// Checks that do not need any solver: positivity and ranges.
inline void validate_config(const Config& c) {
  detail::require(c.number("S0") > 0.0, "config: S0 must be positive");
  detail::require(c.number("grid.delta") > 0.0, "config: grid.delta must be positive");
  detail::require(c.number("grid.dx") > 0.0, "config: grid.dx must be positive");
  detail::require(c.number("grid.X") >= 0.0, "config: grid.X must be nonnegative");
  detail::require(c.number("grid.t_end") >= 0.0, "config: grid.t_end must be nonnegative");
  detail::require(c.number("wave.Z") > 0.0 && c.number("wave.dz") > 0.0, "config: wave grid must be positive");
  detail::require(c.number("wave.max_age_step") > 0.0, "config: wave.max_age_step must be positive");
  for (double l : c.list("spread.levels")) detail::require(l > 0.0 && l < 1.0, "config: spread.levels must lie in (0, 1)");
  const double wf = c.number("spread.window_fraction");
  detail::require(wf > 0.0 && wf <= 1.0, "config: spread.window_fraction must lie in (0, 1]");
  detail::require(c.number("simulate.boundary_interval") >= 0.0, "config: simulate.boundary_interval must be nonnegative");
  detail::require(c.get<std::int64_t>("simulate.age_rows") >= 0, "config: simulate.age_rows must be nonnegative");
  detail::require(c.get<std::int64_t>("wave.field_rows") >= 0, "config: wave.field_rows must be nonnegative");
  detail::require(c.get<std::int64_t>("dispersion.samples") >= 3, "config: dispersion.samples must be at least 3");
  make_rate_preset(c);
  make_kernel(c);
  make_initial_data(c);
}

} // namespace epiwave
