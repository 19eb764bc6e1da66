#pragma once

// Independent reference implementations used as test oracles. Nothing here
// calls into the estimator code paths under test.

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <string>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "funvar/funvar.hpp"

namespace oracle {

using Rows = std::vector<std::vector<double>>;

inline double kernel(funvar::KernelKind kind, double u) {
  if (u < 0.0 || u > 1.0) return 0.0;
  if (kind == funvar::KernelKind::quadratic) return 1.0 - u * u;
  if (kind == funvar::KernelKind::triangle) return 1.0 - u;
  return 1.0;
}

/// sqrt of the trapezoid integral of (a - b)^2.
inline double l2(const std::vector<double>& t, const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k + 1 < t.size(); ++k) {
    const double d0 = a[k] - b[k], d1 = a[k + 1] - b[k + 1];
    s += 0.5 * (t[k + 1] - t[k]) * (d0 * d0 + d1 * d1);
  }
  return std::sqrt(s);
}

struct Nw {
  double value = 0.0;
  bool fallback = false;
};

/// NW smooth of `resp` at distances `d`, optionally skipping index `skip`.
/// Empty neighbourhoods go to the nearest admissible point, lowest index first.
inline Nw nw(const std::vector<double>& d, const std::vector<double>& resp, double h, funvar::KernelKind kind,
             std::optional<std::size_t> skip = std::nullopt) {
  double num = 0.0, den = 0.0;
  for (std::size_t j = 0; j < d.size(); ++j) {
    if (skip && *skip == j) continue;
    const double k = kernel(kind, d[j] / h);
    num += k * resp[j];
    den += k;
  }
  if (den > 0.0) return {num / den, false};
  std::size_t best = d.size();
  for (std::size_t j = 0; j < d.size(); ++j) {
    if (skip && *skip == j) continue;
    if (best == d.size() || d[j] < d[best]) best = j;
  }
  return {resp[best], true};
}

/// Mean, residual variance and direct variance at a new curve, computed from
/// the defining sums with an order-0 L2 semi-metric.
struct Estimates {
  double m = 0.0, v_residual = 0.0, v_direct = 0.0;
};

inline Estimates estimates(const std::vector<double>& t, const Rows& X, const std::vector<double>& Y,
                           const std::vector<double>& x, double h_m, double h_v, funvar::KernelKind kind,
                           bool leave_one_out) {
  const std::size_t n = X.size();
  std::vector<std::vector<double>> D(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) D[i][j] = l2(t, X[i], X[j]);
  std::vector<double> R(n), Y2(n), dx(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double mi = nw(D[i], Y, h_m, kind, leave_one_out ? std::optional<std::size_t>(i) : std::nullopt).value;
    R[i] = (Y[i] - mi) * (Y[i] - mi);
    Y2[i] = Y[i] * Y[i];
    dx[i] = l2(t, x, X[i]);
  }
  Estimates e;
  e.m = nw(dx, Y, h_m, kind).value;
  e.v_residual = nw(dx, R, h_v, kind).value;
  e.v_direct = std::max(0.0, nw(dx, Y2, h_v, kind).value - e.m * e.m);
  return e;
}

/// Random curves on a small grid; some rows are duplicated so zero distances
/// and ties occur.
struct Instance {
  std::vector<double> t;
  Rows X;
  std::vector<double> Y;
  std::vector<double> x;
};

inline Instance random_instance(std::mt19937_64& gen, std::size_t n, std::size_t T) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Instance in;
  double acc = -1.0;
  for (std::size_t k = 0; k < T; ++k) {
    in.t.push_back(acc);
    acc += 0.1 + 0.4 * (u(gen) + 1.0);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0 && u(gen) > 0.7) {
      in.X.push_back(in.X[static_cast<std::size_t>((u(gen) + 1.0) * 0.5 * static_cast<double>(i)) % i]);
    } else {
      std::vector<double> row(T);
      for (double& v : row) v = u(gen);
      in.X.push_back(row);
    }
    in.Y.push_back(3.0 * u(gen));
  }
  in.x.resize(T);
  for (double& v : in.x) v = u(gen);
  return in;
}

inline funvar::GridPtr grid_of(const std::vector<double>& t) { return funvar::make_grid(funvar::Grid(t)); }

inline funvar::CurveSet set_of(const funvar::GridPtr& g, const Rows& rows) {
  return funvar::CurveSet::from_rows(g, rows);
}

}  // namespace oracle

namespace testing {

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<unsigned> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("funvar_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
