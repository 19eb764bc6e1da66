#pragma once

/// Discretized curves on a shared grid: trapezoid integration and numerical
/// derivatives (finite differences or a least-squares B-spline fit).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "funvar/errors.hpp"

namespace funvar {

class Grid {
 public:
  explicit Grid(std::vector<double> points) : points_(std::move(points)) {
    if (points_.size() < 2) throw invalid_input("grid needs at least 2 points");
    for (std::size_t k = 0; k < points_.size(); ++k) {
      if (!std::isfinite(points_[k])) throw invalid_input("grid point is not finite");
      if (k > 0 && !(points_[k] > points_[k - 1]))
        throw invalid_input("grid must be strictly increasing");
    }
  }

  /// `size` equally spaced points on [lo, hi], both endpoints included exactly.
  static Grid uniform(double lo, double hi, std::size_t size) {
    if (size < 2) throw invalid_input("grid needs at least 2 points");
    std::vector<double> pts(size);
    const auto m = static_cast<double>(size - 1);
    // mirror-symmetric: pts[k] - lo == hi - pts[size - 1 - k] when lo == -hi
    for (std::size_t k = 0; k < size; ++k)
      pts[k] = (static_cast<double>(size - 1 - k) * lo + static_cast<double>(k) * hi) / m;
    return Grid(std::move(pts));
  }

  std::size_t size() const noexcept { return points_.size(); }
  double operator[](std::size_t k) const { return points_[k]; }
  std::span<const double> points() const noexcept { return points_; }
  double front() const noexcept { return points_.front(); }
  double back() const noexcept { return points_.back(); }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::vector<double> points_;
};

using GridPtr = std::shared_ptr<const Grid>;

inline GridPtr make_grid(Grid g) { return std::make_shared<const Grid>(std::move(g)); }

inline bool same_grid(const GridPtr& a, const GridPtr& b) {
  return a == b || (a && b && *a == *b);
}

class Curve {
 public:
  Curve(GridPtr grid, std::vector<double> values)
      : grid_(std::move(grid)), values_(std::move(values)) {
    if (!grid_) throw invalid_input("curve has no grid");
    if (values_.size() != grid_->size())
      throw invalid_input("curve length " + std::to_string(values_.size()) +
                          " does not match grid length " + std::to_string(grid_->size()));
    for (double v : values_)
      if (!std::isfinite(v)) throw invalid_input("curve value is not finite");
  }

  const GridPtr& grid() const noexcept { return grid_; }
  std::span<const double> values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t k) const { return values_[k]; }

  friend bool operator==(const Curve& a, const Curve& b) {
    return same_grid(a.grid_, b.grid_) && a.values_ == b.values_;
  }

 private:
  GridPtr grid_;
  std::vector<double> values_;
};

class CurveSet {
 public:
  CurveSet(GridPtr grid, std::vector<Curve> curves)
      : grid_(std::move(grid)), curves_(std::move(curves)) {
    if (!grid_) throw invalid_input("curve set has no grid");
    if (curves_.empty()) throw invalid_input("curve set must contain at least one curve");
    for (const auto& c : curves_)
      if (!same_grid(c.grid(), grid_)) throw invalid_input("curve does not share the set's grid");
  }

  /// Builds curves from raw rows; every row must have the grid's length.
  static CurveSet from_rows(GridPtr grid, const std::vector<std::vector<double>>& rows) {
    std::vector<Curve> curves;
    curves.reserve(rows.size());
    for (const auto& r : rows) curves.emplace_back(grid, r);
    return CurveSet(std::move(grid), std::move(curves));
  }

  const GridPtr& grid() const noexcept { return grid_; }
  std::size_t size() const noexcept { return curves_.size(); }
  const Curve& operator[](std::size_t i) const { return curves_[i]; }
  auto begin() const noexcept { return curves_.begin(); }
  auto end() const noexcept { return curves_.end(); }

  /// Curves [first, first + count) as a new set on the same grid.
  CurveSet slice(std::size_t first, std::size_t count) const {
    if (first + count > curves_.size() || count == 0) throw invalid_input("curve slice out of range");
    return CurveSet(grid_, std::vector<Curve>(curves_.begin() + static_cast<std::ptrdiff_t>(first),
                                              curves_.begin() + static_cast<std::ptrdiff_t>(first + count)));
  }

  friend bool operator==(const CurveSet& a, const CurveSet& b) {
    return same_grid(a.grid_, b.grid_) && a.curves_ == b.curves_;
  }

 private:
  GridPtr grid_;
  std::vector<Curve> curves_;
};

/// Composite trapezoid weights, so that sum_k w_k f(t_k) approximates the integral.
inline std::vector<double> trapezoid_weights(const Grid& grid) {
  const std::size_t T = grid.size();
  std::vector<double> w(T, 0.0);
  for (std::size_t k = 0; k + 1 < T; ++k) {
    const double half = 0.5 * (grid[k + 1] - grid[k]);
    w[k] += half;
    w[k + 1] += half;
  }
  return w;
}

inline double integrate(const Grid& grid, std::span<const double> values) {
  if (values.size() != grid.size()) throw invalid_input("integrand length does not match grid");
  // Intervals are taken alternately from the two ends, so an odd integrand on
  // a symmetric grid cancels pair by pair. Neumaier compensation keeps the
  // sum of exact interval widths exact.
  auto piece = [&](std::size_t k) { return 0.5 * (grid[k + 1] - grid[k]) * (values[k] + values[k + 1]); };
  double sum = 0.0, carry = 0.0;
  auto add = [&](double x) {
    const double t = sum + x;
    carry += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
    sum = t;
  };
  std::size_t lo = 0, hi = grid.size() - 2;
  for (; lo < hi; ++lo, --hi) {
    add(piece(lo));
    add(piece(hi));
  }
  if (lo == hi) add(piece(lo));
  return sum + carry;
}

inline double integrate(const Curve& c) { return integrate(*c.grid(), c.values()); }

// ---------------------------------------------------------------------------
// Derivatives

struct FiniteDiff {
  friend bool operator==(const FiniteDiff&, const FiniteDiff&) = default;
};

struct BSpline {
  int knots = 20;  ///< interior knots
  int degree = 3;
  friend bool operator==(const BSpline&, const BSpline&) = default;
};

using DerivMethod = std::variant<FiniteDiff, BSpline>;

namespace detail {

// One pass of central differences, first-order one-sided at the ends.
inline std::vector<double> first_difference(const Grid& g, std::span<const double> x) {
  const std::size_t T = g.size();
  std::vector<double> d(T);
  d.front() = (x[1] - x[0]) / (g[1] - g[0]);
  d.back() = (x[T - 1] - x[T - 2]) / (g[T - 1] - g[T - 2]);
  for (std::size_t k = 1; k + 1 < T; ++k) d[k] = (x[k + 1] - x[k - 1]) / (g[k + 1] - g[k - 1]);
  return d;
}

inline std::size_t find_span(int n_basis, int degree, double u, const std::vector<double>& knots) {
  const auto n = static_cast<std::size_t>(n_basis - 1);
  if (u >= knots[n + 1]) return n;
  if (u <= knots[static_cast<std::size_t>(degree)]) return static_cast<std::size_t>(degree);
  std::size_t lo = static_cast<std::size_t>(degree), hi = n + 1;
  std::size_t mid = (lo + hi) / 2;
  while (u < knots[mid] || u >= knots[mid + 1]) {
    if (u < knots[mid]) hi = mid;
    else lo = mid;
    mid = (lo + hi) / 2;
  }
  return mid;
}

// Nonzero basis functions and their derivatives up to `nd` at u (span i).
// ders[k][j] is the k-th derivative of N_{i-p+j,p}(u).
inline std::vector<std::vector<double>> basis_derivatives(std::size_t i, double u, int p, int nd,
                                                          const std::vector<double>& U) {
  const auto P = static_cast<std::size_t>(p);
  std::vector<std::vector<double>> ndu(P + 1, std::vector<double>(P + 1, 0.0));
  std::vector<double> left(P + 1, 0.0), right(P + 1, 0.0);
  ndu[0][0] = 1.0;
  for (std::size_t j = 1; j <= P; ++j) {
    left[j] = u - U[i + 1 - j];
    right[j] = U[i + j] - u;
    double saved = 0.0;
    for (std::size_t r = 0; r < j; ++r) {
      ndu[j][r] = right[r + 1] + left[j - r];
      const double temp = ndu[r][j - 1] / ndu[j][r];
      ndu[r][j] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    ndu[j][j] = saved;
  }

  std::vector<std::vector<double>> ders(static_cast<std::size_t>(nd) + 1, std::vector<double>(P + 1, 0.0));
  for (std::size_t j = 0; j <= P; ++j) ders[0][j] = ndu[j][P];

  std::vector<std::vector<double>> a(2, std::vector<double>(P + 1, 0.0));
  for (int r = 0; r <= p; ++r) {
    int s1 = 0, s2 = 1;
    a[0][0] = 1.0;
    for (int k = 1; k <= nd; ++k) {
      double d = 0.0;
      const int rk = r - k, pk = p - k;
      if (r >= k) {
        a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
        d = a[s2][0] * ndu[rk][pk];
      }
      const int j1 = rk >= -1 ? 1 : -rk;
      const int j2 = (r - 1 <= pk) ? k - 1 : p - r;
      for (int j = j1; j <= j2; ++j) {
        a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][rk + j];
        d += a[s2][j] * ndu[rk + j][pk];
      }
      if (r <= pk) {
        a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
        d += a[s2][k] * ndu[r][pk];
      }
      ders[k][r] = d;
      std::swap(s1, s2);
    }
  }
  double factor = p;
  for (int k = 1; k <= nd; ++k) {
    for (auto& v : ders[k]) v *= factor;
    factor *= (p - k);
  }
  return ders;
}

// Type-7 quantile of an already sorted sequence.
inline double sorted_quantile(std::span<const double> sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace detail

/// Linear operator mapping curve samples to samples of the order-`order`
/// derivative of their least-squares B-spline fit. Interior knots sit at
/// quantiles of the grid abscissae.
class SplineDifferentiator {
 public:
  SplineDifferentiator(const Grid& grid, int order, BSpline cfg) {
    const int T = static_cast<int>(grid.size());
    if (order < 0) throw invalid_input("derivative order must be nonnegative");
    if (cfg.knots < 1) throw invalid_input("spline needs at least one interior knot");
    if (cfg.degree <= order) throw invalid_input("spline degree must exceed the derivative order");
    if (cfg.knots + cfg.degree + 1 > T)
      throw invalid_input("grid too short for " + std::to_string(cfg.knots) + " knots of degree " +
                          std::to_string(cfg.degree));

    const int p = cfg.degree;
    const int n_basis = cfg.knots + p + 1;
    std::vector<double> U;
    U.reserve(static_cast<std::size_t>(n_basis + p + 1));
    for (int k = 0; k <= p; ++k) U.push_back(grid.front());
    for (int j = 1; j <= cfg.knots; ++j)
      U.push_back(detail::sorted_quantile(grid.points(), static_cast<double>(j) / (cfg.knots + 1)));
    for (int k = 0; k <= p; ++k) U.push_back(grid.back());

    Eigen::MatrixXd design = Eigen::MatrixXd::Zero(T, n_basis);
    Eigen::MatrixXd deriv = Eigen::MatrixXd::Zero(T, n_basis);
    for (int r = 0; r < T; ++r) {
      const double u = grid[static_cast<std::size_t>(r)];
      const std::size_t span = detail::find_span(n_basis, p, u, U);
      const auto ders = detail::basis_derivatives(span, u, p, order, U);
      for (int j = 0; j <= p; ++j) {
        const int col = static_cast<int>(span) - p + j;
        design(r, col) = ders[0][static_cast<std::size_t>(j)];
        deriv(r, col) = ders[static_cast<std::size_t>(order)][static_cast<std::size_t>(j)];
      }
    }

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() < n_basis)
      throw rank_deficient("spline design has rank " + std::to_string(qr.rank()) + " < " +
                           std::to_string(n_basis) + "; reduce the number of knots");
    const Eigen::MatrixXd projector = qr.solve(Eigen::MatrixXd::Identity(T, T));
    op_ = deriv * projector;
  }

  std::vector<double> apply(std::span<const double> values) const {
    const Eigen::Map<const Eigen::VectorXd> x(values.data(), static_cast<Eigen::Index>(values.size()));
    const Eigen::VectorXd y = op_ * x;
    return {y.data(), y.data() + y.size()};
  }

 private:
  Eigen::MatrixXd op_;
};

/// Derivative samples of `values` on `grid`. Order 0 returns the input.
inline std::vector<double> derivative_values(const Grid& grid, std::span<const double> values,
                                             int order, const DerivMethod& method) {
  if (order < 0) throw invalid_input("derivative order must be nonnegative");
  if (order == 0) return {values.begin(), values.end()};
  if (std::holds_alternative<BSpline>(method))
    return SplineDifferentiator(grid, order, std::get<BSpline>(method)).apply(values);

  if (grid.size() < static_cast<std::size_t>(order) + 1)
    throw invalid_input("grid too short for derivative order " + std::to_string(order));
  std::vector<double> d(values.begin(), values.end());
  for (int q = 0; q < order; ++q) d = detail::first_difference(grid, d);
  return d;
}

inline Curve derivative(const Curve& c, int order, const DerivMethod& method = FiniteDiff{}) {
  if (order == 0) return c;
  return Curve(c.grid(), derivative_values(*c.grid(), c.values(), order, method));
}

/// Derivatives of every curve in a set; the spline operator is built once.
inline std::vector<std::vector<double>> derivative_rows(const CurveSet& set, int order,
                                                        const DerivMethod& method) {
  std::vector<std::vector<double>> out;
  out.reserve(set.size());
  if (order > 0 && std::holds_alternative<BSpline>(method)) {
    const SplineDifferentiator op(*set.grid(), order, std::get<BSpline>(method));
    for (const auto& c : set) out.push_back(op.apply(c.values()));
  } else {
    for (const auto& c : set) out.push_back(derivative_values(*set.grid(), c.values(), order, method));
  }
  return out;
}

}  // namespace funvar
