#pragma once

/// CSV formats for curves, responses and simulation truth.
///
/// Curves: the first row is `t,<t_1>,...,<t_T>`; each following row holds one
/// curve's T values. Responses: header `y`, then one value per row, aligned
/// with the curve rows. Numbers are written in shortest round-trip form so a
/// write/read cycle reproduces every double exactly.

#include <array>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <openssl/evp.h>

#include "funvar/curves.hpp"
#include "funvar/errors.hpp"
#include "funvar/simulate.hpp"

namespace funvar::io {

inline std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{}) throw io_error("failed to format number");
  return std::string(buf.data(), end);
}

inline double parse_double(std::string_view s, const std::string& where) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw io_error("cannot parse number '" + std::string(s) + "' at " + where);
  return v;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    cells.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return cells;
}

inline std::string trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return std::string(s);
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(std::move(line));
  }
  return lines;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes to a sibling temporary file and renames it over `path`.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw io_error("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw io_error("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

/// Hex SHA-256 of a byte string.
inline std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1)
    throw io_error("sha256 failed");
  std::ostringstream ss;
  for (unsigned int i = 0; i < len; ++i) ss << std::hex << std::setw(2) << std::setfill('0') << int{md[i]};
  return ss.str();
}

inline std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

// ---------------------------------------------------------------------------

inline std::string curves_to_csv(const CurveSet& set) {
  std::string out = "t";
  for (double t : set.grid()->points()) out += "," + format_double(t);
  out += "\n";
  for (const auto& c : set) {
    for (std::size_t k = 0; k < c.size(); ++k) {
      if (k) out += ",";
      out += format_double(c[k]);
    }
    out += "\n";
  }
  return out;
}

inline CurveSet parse_curves_csv(const std::vector<std::string>& lines, const std::string& name) {
  if (lines.size() < 2) throw io_error(name + ": needs a grid row and at least one curve row");
  const auto header = split_csv(lines[0]);
  if (header.size() < 3 || trim(header[0]) != "t")
    throw io_error(name + ": first row must be 't' followed by at least two grid points");
  std::vector<double> pts;
  for (std::size_t k = 1; k < header.size(); ++k) pts.push_back(parse_double(header[k], name + " row 1"));
  GridPtr grid;
  try {
    grid = make_grid(Grid(std::move(pts)));
  } catch (const invalid_input& e) {
    throw io_error(name + ": " + e.what());
  }
  std::vector<std::vector<double>> rows;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto cells = split_csv(lines[r]);
    if (cells.size() != grid->size())
      throw io_error(name + " row " + std::to_string(r + 1) + ": expected " + std::to_string(grid->size()) +
                     " values, found " + std::to_string(cells.size()));
    std::vector<double> v;
    v.reserve(cells.size());
    for (auto c : cells) v.push_back(parse_double(c, name + " row " + std::to_string(r + 1)));
    rows.push_back(std::move(v));
  }
  try {
    return CurveSet::from_rows(grid, rows);
  } catch (const invalid_input& e) {
    throw io_error(name + ": " + e.what());
  }
}

inline CurveSet read_curves_csv(const std::filesystem::path& path) {
  return parse_curves_csv(read_lines(path), path.string());
}

inline void write_curves_csv(const std::filesystem::path& path, const CurveSet& set) {
  write_file_atomic(path, curves_to_csv(set));
}

inline std::string column_to_csv(std::string_view header, const std::vector<double>& values) {
  std::string out(header);
  out += "\n";
  for (double v : values) out += format_double(v) + "\n";
  return out;
}

inline std::vector<double> read_column_csv(const std::filesystem::path& path, std::string_view header) {
  const auto lines = read_lines(path);
  if (lines.empty() || trim(lines[0]) != header)
    throw io_error(path.string() + ": expected header '" + std::string(header) + "'");
  std::vector<double> v;
  for (std::size_t r = 1; r < lines.size(); ++r)
    v.push_back(parse_double(lines[r], path.string() + " row " + std::to_string(r + 1)));
  return v;
}

inline std::vector<double> read_responses_csv(const std::filesystem::path& path) {
  return read_column_csv(path, "y");
}

inline void write_responses_csv(const std::filesystem::path& path, const std::vector<double>& y) {
  write_file_atomic(path, column_to_csv("y", y));
}

// ---------------------------------------------------------------------------
// Simulation output: curves.csv, responses.csv, truth.csv and, for ex3,
// derivs.csv with the analytic derivatives.

struct DatasetFiles {
  std::filesystem::path curves, responses, truth, derivs;
};

inline DatasetFiles dataset_files(const std::filesystem::path& dir, const std::string& prefix = "") {
  return {dir / (prefix + "curves.csv"), dir / (prefix + "responses.csv"), dir / (prefix + "truth.csv"),
          dir / (prefix + "derivs.csv")};
}

inline std::string truth_to_csv(const SimulatedDataset& ds) {
  std::string out = "index,true_m,true_v";
  for (const auto& name : param_names(ds.example)) out += "," + name;
  out += "\n";
  for (std::size_t i = 0; i < ds.true_m.size(); ++i) {
    out += std::to_string(i) + "," + format_double(ds.true_m[i]) + "," + format_double(ds.true_v[i]);
    for (double p : ds.params[i]) out += "," + format_double(p);
    out += "\n";
  }
  return out;
}

inline void write_dataset(const DatasetFiles& f, const SimulatedDataset& ds) {
  write_curves_csv(f.curves, ds.curves);
  write_responses_csv(f.responses, ds.y);
  write_file_atomic(f.truth, truth_to_csv(ds));
  if (ds.derivs) write_curves_csv(f.derivs, *ds.derivs);
}

inline SimulatedDataset read_dataset(const DatasetFiles& f, Example example) {
  auto curves = read_curves_csv(f.curves);
  auto y = read_responses_csv(f.responses);
  std::optional<CurveSet> derivs;
  if (example == Example::ex3) {
    auto d = read_curves_csv(f.derivs);
    if (!(*d.grid() == *curves.grid())) throw io_error(f.derivs.string() + ": grid differs from the curves");
    derivs = CurveSet::from_rows(curves.grid(), [&] {
      std::vector<std::vector<double>> rows;
      for (const auto& c : d) rows.emplace_back(c.values().begin(), c.values().end());
      return rows;
    }());
  }
  const auto lines = read_lines(f.truth);
  const auto names = param_names(example);
  if (lines.empty()) throw io_error(f.truth.string() + ": empty");
  const auto header = split_csv(lines[0]);
  if (header.size() != 3 + names.size()) throw io_error(f.truth.string() + ": unexpected header for this example");
  std::vector<double> m, v;
  std::vector<std::vector<double>> params;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto cells = split_csv(lines[r]);
    const std::string where = f.truth.string() + " row " + std::to_string(r + 1);
    if (cells.size() != header.size()) throw io_error(where + ": wrong number of columns");
    m.push_back(parse_double(cells[1], where));
    v.push_back(parse_double(cells[2], where));
    std::vector<double> p;
    for (std::size_t k = 3; k < cells.size(); ++k) p.push_back(parse_double(cells[k], where));
    params.push_back(std::move(p));
  }
  if (y.size() != curves.size() || m.size() != curves.size())
    throw io_error("dataset files disagree on the number of curves");
  return SimulatedDataset{example, std::move(curves), std::move(derivs), std::move(y), std::move(m), std::move(v),
                          std::move(params)};
}

}  // namespace funvar::io
