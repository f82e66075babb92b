#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "error.hpp"

namespace epiwave::io {

/**
 * Two-column numeric CSV: comma or whitespace separated, `#` starts a
 * comment, blank lines skipped. A first line that does not parse as two
 * numbers is taken as a header.
 */
inline std::pair<std::vector<double>, std::vector<double>> read_two_column_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  detail::require(static_cast<bool>(in), "csv: cannot open " + path.string());
  std::vector<double> a, b;
  std::string line;
  std::size_t lineno = 0;
  bool seen_data = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    for (char& ch : line)
      if (ch == ',' || ch == ';' || ch == '\t' || ch == '\r') ch = ' ';
    std::istringstream ss(line);
    std::string first;
    if (!(ss >> first)) continue;
    ss.clear();
    ss.str(line);
    double x = 0.0, y = 0.0;
    std::string rest;
    if (!(ss >> x >> y) || (ss >> rest)) {
      detail::require(!seen_data && a.empty(), path.string() + ":" + std::to_string(lineno) + ": expected two numbers");
      seen_data = true; // header
      continue;
    }
    seen_data = true;
    a.push_back(x);
    b.push_back(y);
  }
  detail::require(!a.empty(), "csv: no data rows in " + path.string());
  return {std::move(a), std::move(b)};
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Column-major CSV with 17 significant digits.
inline void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& columns) {
  detail::require(header.size() == columns.size(), "csv: header and column count differ");
  const std::size_t rows = columns.empty() ? 0 : columns.front().size();
  for (const auto& c : columns) detail::require(c.size() == rows, "csv: columns have different lengths");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::FILE* f = std::fopen(path.c_str(), "w");
  detail::require(f != nullptr, "csv: cannot write " + path.string());
  for (std::size_t k = 0; k < header.size(); ++k) std::fprintf(f, "%s%s", k ? "," : "", header[k].c_str());
  std::fputc('\n', f);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t k = 0; k < columns.size(); ++k) std::fprintf(f, "%s%.17g", k ? "," : "", columns[k][r]);
    std::fputc('\n', f);
  }
  std::fclose(f);
}

/// Row-major matrix CSV: first column `label`, then one column per entry of `xs`.
inline void write_matrix_csv(const std::filesystem::path& path, const std::string& label, const std::vector<double>& row_keys,
                             const std::vector<double>& xs, const std::vector<double>& values) {
  detail::require(values.size() == row_keys.size() * xs.size(), "csv: matrix shape mismatch");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::FILE* f = std::fopen(path.c_str(), "w");
  detail::require(f != nullptr, "csv: cannot write " + path.string());
  std::fprintf(f, "%s", label.c_str());
  for (double x : xs) std::fprintf(f, ",%.17g", x);
  std::fputc('\n', f);
  for (std::size_t r = 0; r < row_keys.size(); ++r) {
    std::fprintf(f, "%.17g", row_keys[r]);
    for (std::size_t c = 0; c < xs.size(); ++c) std::fprintf(f, ",%.17g", values[r * xs.size() + c]);
    std::fputc('\n', f);
  }
  std::fclose(f);
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  detail::require(static_cast<bool>(out), "json: cannot write " + path.string());
  out << j.dump(2) << '\n';
}

/// NaN and infinities become null in JSON; keep them readable as strings instead.
inline nlohmann::json number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

} // namespace epiwave::io
