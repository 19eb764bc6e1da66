#pragma once

/// Semi-metrics between curves and the empirical small-ball diagnostic.
///
/// Both supported semi-metrics are weighted Euclidean distances between a
/// feature vector derived from each curve:
///   - deriv_l2(q): features are the q-th derivative samples, weights are the
///     trapezoid weights, so d(a, b) = sqrt(int (a^(q) - b^(q))^2 dt);
///   - pca_projection(k): features are the first k principal-component
///     scores, unit weights.
/// Fits embed their training curves once through a FeatureMap and reuse it.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "funvar/curves.hpp"
#include "funvar/errors.hpp"

namespace funvar {

struct DerivL2 {
  int order = 0;
  DerivMethod method = FiniteDiff{};
  friend bool operator==(const DerivL2&, const DerivL2&) = default;
};

struct PcaProjection {
  int dim = 3;
  friend bool operator==(const PcaProjection&, const PcaProjection&) = default;
};

/// Quadrature-weighted principal directions. Score k of a curve x is
/// sum_t loadings[k][t] * x(t).
struct PcaBasis {
  Grid grid;
  std::vector<std::vector<double>> loadings;
  std::vector<double> eigenvalues;
};

class SemiMetricSpec {
 public:
  using Kind = std::variant<DerivL2, PcaProjection>;

  SemiMetricSpec() = default;

  static SemiMetricSpec deriv_l2(int order, DerivMethod method = FiniteDiff{}) {
    if (order < 0) throw invalid_input("derivative order must be nonnegative");
    SemiMetricSpec s;
    s.kind_ = DerivL2{order, method};
    return s;
  }

  static SemiMetricSpec pca_projection(int dim) {
    if (dim < 1) throw invalid_input("projection dimension must be at least 1");
    SemiMetricSpec s;
    s.kind_ = PcaProjection{dim};
    return s;
  }

  const Kind& kind() const noexcept { return kind_; }
  bool is_pca() const noexcept { return std::holds_alternative<PcaProjection>(kind_); }
  bool is_trained() const noexcept { return !is_pca() || basis_ != nullptr; }
  const std::shared_ptr<const PcaBasis>& basis() const noexcept { return basis_; }

  /// Copy with a projection basis estimated from `train`; deriv_l2 specs are
  /// returned unchanged.
  SemiMetricSpec trained_on(const CurveSet& train) const;

  /// Equal kind and parameters; trained bases are not compared.
  bool same_kind(const SemiMetricSpec& o) const noexcept { return kind_ == o.kind_; }

 private:
  Kind kind_ = DerivL2{};
  std::shared_ptr<const PcaBasis> basis_;
};

inline SemiMetricSpec SemiMetricSpec::trained_on(const CurveSet& train) const {
  if (!is_pca()) return *this;
  const int dim = std::get<PcaProjection>(kind_).dim;
  const Grid& g = *train.grid();
  const auto n = static_cast<Eigen::Index>(train.size());
  const auto T = static_cast<Eigen::Index>(g.size());
  if (dim > n) throw invalid_input("projection dimension exceeds number of training curves");
  if (dim > T) throw invalid_input("projection dimension exceeds grid length");

  const auto w = trapezoid_weights(g);
  Eigen::VectorXd sqrt_w(T);
  for (Eigen::Index t = 0; t < T; ++t) sqrt_w(t) = std::sqrt(w[static_cast<std::size_t>(t)]);

  // W^{1/2} C W^{1/2} with C the uncentred second-moment matrix.
  Eigen::MatrixXd X(n, T);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index t = 0; t < T; ++t)
      X(i, t) = train[static_cast<std::size_t>(i)][static_cast<std::size_t>(t)] * sqrt_w(t);
  const Eigen::MatrixXd M = (X.transpose() * X) / static_cast<double>(n);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M);
  if (eig.info() != Eigen::Success) throw invalid_input("eigendecomposition failed");

  auto basis = std::make_shared<PcaBasis>(PcaBasis{g, {}, {}});
  for (int k = 0; k < dim; ++k) {
    const Eigen::Index col = T - 1 - k;  // eigenvalues ascend
    std::vector<double> loading(static_cast<std::size_t>(T));
    for (Eigen::Index t = 0; t < T; ++t)
      loading[static_cast<std::size_t>(t)] = eig.eigenvectors()(t, col) * sqrt_w(t);
    basis->loadings.push_back(std::move(loading));
    basis->eigenvalues.push_back(eig.eigenvalues()(col));
  }
  SemiMetricSpec out = *this;
  out.basis_ = std::move(basis);
  return out;
}

/// Feature vectors of a curve set with the quadrature weights that turn them
/// into a semi-metric.
struct Embedding {
  std::vector<std::vector<double>> rows;
  std::vector<double> weights;
};

/// Weighted Euclidean distance between two feature vectors.
inline double feature_distance(std::span<const double> a, std::span<const double> b,
                               std::span<const double> w) {
  double s = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double diff = a[k] - b[k];
    s += w[k] * diff * diff;
  }
  return std::sqrt(s);
}

/// A semi-metric bound to a grid, with any spline operator precomputed.
class FeatureMap {
 public:
  FeatureMap(const SemiMetricSpec& spec, GridPtr grid) : spec_(spec), grid_(std::move(grid)) {
    if (!spec_.is_trained()) throw invalid_input("projection semi-metric used before training");
    if (spec_.is_pca()) {
      if (!(spec_.basis()->grid == *grid_)) throw invalid_input("projection basis trained on a different grid");
      weights_.assign(spec_.basis()->loadings.size(), 1.0);
      return;
    }
    weights_ = trapezoid_weights(*grid_);
    const auto& d = std::get<DerivL2>(spec_.kind());
    if (d.order > 0 && std::holds_alternative<BSpline>(d.method))
      spline_ = std::make_shared<const SplineDifferentiator>(*grid_, d.order, std::get<BSpline>(d.method));
  }

  const SemiMetricSpec& spec() const noexcept { return spec_; }
  const GridPtr& grid() const noexcept { return grid_; }
  std::span<const double> weights() const noexcept { return weights_; }

  std::vector<double> features(const Curve& c) const {
    if (!same_grid(c.grid(), grid_)) throw invalid_input("curve is not on the semi-metric's grid");
    if (spec_.is_pca()) {
      const auto& L = spec_.basis()->loadings;
      std::vector<double> scores(L.size(), 0.0);
      for (std::size_t k = 0; k < L.size(); ++k)
        for (std::size_t t = 0; t < c.size(); ++t) scores[k] += L[k][t] * c[t];
      return scores;
    }
    if (spline_) return spline_->apply(c.values());
    const auto& d = std::get<DerivL2>(spec_.kind());
    return derivative_values(*grid_, c.values(), d.order, d.method);
  }

  Embedding embed(const CurveSet& set) const {
    Embedding e;
    e.weights = weights_;
    e.rows.reserve(set.size());
    for (const auto& c : set) e.rows.push_back(features(c));
    return e;
  }

 private:
  SemiMetricSpec spec_;
  GridPtr grid_;
  std::vector<double> weights_;
  std::shared_ptr<const SplineDifferentiator> spline_;
};

inline double distance(const SemiMetricSpec& spec, const Curve& a, const Curve& b) {
  if (!same_grid(a.grid(), b.grid())) throw invalid_input("curves are on different grids");
  const FeatureMap map(spec, a.grid());
  return feature_distance(map.features(a), map.features(b), map.weights());
}

/// Dense row-major matrix of nonnegative distances.
class DistanceMatrix {
 public:
  DistanceMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> data() const noexcept { return data_; }

  friend bool operator==(const DistanceMatrix&, const DistanceMatrix&) = default;

 private:
  std::size_t rows_, cols_;
  std::vector<double> data_;
};

inline DistanceMatrix distance_matrix(const Embedding& a, const Embedding& b) {
  DistanceMatrix D(a.rows.size(), b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i)
    for (std::size_t j = 0; j < b.rows.size(); ++j) D(i, j) = feature_distance(a.rows[i], b.rows[j], a.weights);
  return D;
}

/// Symmetric with an exactly zero diagonal.
inline DistanceMatrix self_distance_matrix(const Embedding& e) {
  const std::size_t n = e.rows.size();
  DistanceMatrix D(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) D(i, j) = D(j, i) = feature_distance(e.rows[i], e.rows[j], e.weights);
  return D;
}

inline DistanceMatrix distance_matrix(const SemiMetricSpec& spec, const CurveSet& A, const CurveSet& B) {
  if (!same_grid(A.grid(), B.grid())) throw invalid_input("curve sets are on different grids");
  const FeatureMap map(spec, A.grid());
  if (&A == &B) return self_distance_matrix(map.embed(A));
  return distance_matrix(map.embed(A), map.embed(B));
}

inline DistanceMatrix self_distance_matrix(const SemiMetricSpec& spec, const CurveSet& A) {
  return self_distance_matrix(FeatureMap(spec, A.grid()).embed(A));
}

/// Fraction of `distances` that are <= h.
inline double small_ball_fraction(std::span<const double> distances, double h) {
  if (!(h > 0.0)) throw invalid_input("small-ball radius must be positive");
  if (distances.empty()) throw invalid_input("no distances");
  std::size_t count = 0;
  for (double d : distances)
    if (d <= h) ++count;
  return static_cast<double>(count) / static_cast<double>(distances.size());
}

/// Empirical phi(h) = (1/n) #{i : d(x, X_i) <= h}.
inline double small_ball_fraction(const SemiMetricSpec& spec, const CurveSet& train, const Curve& x, double h) {
  if (!(h > 0.0)) throw invalid_input("small-ball radius must be positive");
  const FeatureMap map(spec, train.grid());
  const auto fx = map.features(x);
  std::vector<double> d;
  d.reserve(train.size());
  for (const auto& c : train) d.push_back(feature_distance(fx, map.features(c), map.weights()));
  return small_ball_fraction(d, h);
}

}  // namespace funvar
