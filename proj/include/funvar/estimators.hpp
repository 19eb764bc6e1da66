#pragma once

/// Kernel estimators of the mean and variance functions of a functional
/// regression Y = m(X) + sqrt(v(X)) eps, and leave-one-out bandwidth search.
///
/// The residual-based variance estimator smooths squared residuals
///   R_i = (Y_i - m_hat(X_i))^2
/// with its own semi-metric and bandwidth:
///   v_hat(x) = sum_i K(d_v(x, X_i) / h_v) R_i / sum_i K(d_v(x, X_i) / h_v).
/// The direct estimator smooths Y_i^2 and subtracts the squared mean fit,
/// clipping negative values at zero.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "funvar/curves.hpp"
#include "funvar/errors.hpp"
#include "funvar/kernel.hpp"
#include "funvar/semimetric.hpp"

namespace funvar {

enum class SelfInclusion { include_self, leave_one_out };

inline std::string_view to_string(SelfInclusion s) {
  return s == SelfInclusion::include_self ? "include_self" : "leave_one_out";
}

inline SelfInclusion parse_self_inclusion(std::string_view s) {
  if (s == "include_self") return SelfInclusion::include_self;
  if (s == "leave_one_out") return SelfInclusion::leave_one_out;
  throw invalid_input("unknown self-inclusion mode '" + std::string(s) + "' (valid: include_self, leave_one_out)");
}

enum class VarianceMethod { residual, direct };

inline std::string_view to_string(VarianceMethod m) { return m == VarianceMethod::residual ? "residual" : "direct"; }

inline VarianceMethod parse_variance_method(std::string_view s) {
  if (s == "residual") return VarianceMethod::residual;
  if (s == "direct") return VarianceMethod::direct;
  throw invalid_input("unknown variance method '" + std::string(s) + "' (valid: residual, direct)");
}

struct Prediction {
  double value = 0.0;
  bool fallback = false;
};

struct VariancePrediction {
  double value = 0.0;
  bool fallback = false;
  bool clipped = false;  ///< direct method only: s_hat - m_hat^2 was negative
};

namespace detail {

inline void check_bandwidth(double h) {
  if (!(h > 0.0) || !std::isfinite(h)) throw invalid_input("bandwidth must be positive and finite");
}

inline void check_responses(std::span<const double> y, std::size_t n, const char* what) {
  if (y.size() != n)
    throw invalid_input(std::string(what) + " length " + std::to_string(y.size()) + " does not match " +
                        std::to_string(n) + " curves");
  for (double v : y)
    if (!std::isfinite(v)) throw invalid_input(std::string(what) + " contain a non-finite value");
}

}  // namespace detail

/// Training curves, responses and the semi-metric/kernel/bandwidth of a
/// Nadaraya-Watson mean fit, with the training embedding and self-distance
/// matrix cached.
class MeanFit {
 public:
  MeanFit(CurveSet train, std::vector<double> responses, const SemiMetricSpec& spec, KernelSpec kernel,
          double bandwidth, WeightPolicy policy = {})
      : train_(std::move(train)),
        y_(std::move(responses)),
        map_(spec.is_trained() ? spec : spec.trained_on(train_), train_.grid()),
        kernel_(kernel),
        h_(bandwidth),
        policy_(policy),
        embedding_(map_.embed(train_)),
        dist_(self_distance_matrix(embedding_)) {
    if (train_.size() < 2) throw invalid_input("mean fit needs at least 2 training curves");
    detail::check_responses(y_, train_.size(), "responses");
    detail::check_bandwidth(h_);
  }

  const CurveSet& train() const noexcept { return train_; }
  std::span<const double> responses() const noexcept { return y_; }
  const SemiMetricSpec& spec() const noexcept { return map_.spec(); }
  const FeatureMap& feature_map() const noexcept { return map_; }
  const KernelSpec& kernel() const noexcept { return kernel_; }
  double bandwidth() const noexcept { return h_; }
  WeightPolicy policy() const noexcept { return policy_; }
  const DistanceMatrix& distances() const noexcept { return dist_; }
  std::size_t size() const noexcept { return train_.size(); }

  /// d(x, X_j) for every training curve.
  std::vector<double> distances_to(const Curve& x) const {
    const auto fx = map_.features(x);
    std::vector<double> d(embedding_.rows.size());
    for (std::size_t j = 0; j < d.size(); ++j) d[j] = feature_distance(fx, embedding_.rows[j], embedding_.weights);
    return d;
  }

  MeanFit with_bandwidth(double h) const {
    detail::check_bandwidth(h);
    MeanFit copy = *this;
    copy.h_ = h;
    return copy;
  }

 private:
  CurveSet train_;
  std::vector<double> y_;
  FeatureMap map_;
  KernelSpec kernel_;
  double h_;
  WeightPolicy policy_;
  Embedding embedding_;
  DistanceMatrix dist_;
};

inline MeanFit fit_mean(CurveSet train, std::vector<double> responses, const SemiMetricSpec& spec,
                        KernelSpec kernel, double bandwidth, WeightPolicy policy = {}) {
  return MeanFit(std::move(train), std::move(responses), spec, kernel, bandwidth, policy);
}

inline Prediction predict_mean(const MeanFit& fit, const Curve& x) {
  const auto d = fit.distances_to(x);
  const auto w = nw_weights(d, fit.bandwidth(), fit.kernel(), fit.policy());
  return {nw_estimate(w.weights, fit.responses()), w.fallback};
}

/// Row-stochastic in-sample weights w_ij.
struct SmootherMatrix {
  std::size_t n = 0;
  std::vector<double> entries;         ///< row-major n x n
  std::vector<bool> row_fallback;      ///< row i used the nearest-neighbour fallback

  double operator()(std::size_t i, std::size_t j) const { return entries[i * n + j]; }
  std::span<const double> row(std::size_t i) const { return {entries.data() + i * n, n}; }
  std::size_t fallback_count() const {
    return static_cast<std::size_t>(std::count(row_fallback.begin(), row_fallback.end(), true));
  }
};

/// Row i holds the weights predicting at X_i. With include_self the point's
/// own observation takes part (w_ii = K(0) / sum_k K(.)); leave_one_out
/// zeroes w_ii and renormalises.
inline SmootherMatrix smoother_matrix(const MeanFit& fit, SelfInclusion mode = SelfInclusion::include_self) {
  const std::size_t n = fit.size();
  SmootherMatrix S{n, std::vector<double>(n * n, 0.0), std::vector<bool>(n, false)};
  for (std::size_t i = 0; i < n; ++i) {
    const auto w = nw_weights(fit.distances().row(i), fit.bandwidth(), fit.kernel(), fit.policy(),
                              mode == SelfInclusion::leave_one_out ? std::optional<std::size_t>(i) : std::nullopt);
    std::copy(w.weights.begin(), w.weights.end(), S.entries.begin() + static_cast<std::ptrdiff_t>(i * n));
    S.row_fallback[i] = w.fallback;
  }
  return S;
}

struct Residuals {
  std::vector<double> values;    ///< (Y_i - m_hat_i)^2
  std::vector<double> fitted;    ///< m_hat_i
  std::size_t fallback_count = 0;
};

inline Residuals squared_residuals(const MeanFit& fit, SelfInclusion mode = SelfInclusion::include_self) {
  const auto S = smoother_matrix(fit, mode);
  Residuals r;
  r.values.reserve(fit.size());
  r.fitted.reserve(fit.size());
  for (std::size_t i = 0; i < fit.size(); ++i) {
    const double m = nw_estimate(S.row(i), fit.responses());
    const double e = fit.responses()[i] - m;
    r.fitted.push_back(m);
    r.values.push_back(e * e);
  }
  r.fallback_count = S.fallback_count();
  return r;
}

/// A fitted variance function. Residual fits smooth R_i; direct fits smooth
/// Y_i^2 and subtract the squared mean prediction.
class VarianceFit {
 public:
  /// Residual-method fit from externally supplied squared residuals, e.g.
  /// (Y_i - m(X_i))^2 with a known mean function.
  static VarianceFit from_residuals(CurveSet train, std::vector<double> residuals, const SemiMetricSpec& spec,
                                    KernelSpec kernel, double bandwidth, WeightPolicy policy = {}) {
    for (double r : residuals)
      if (r < 0.0) throw invalid_input("squared residuals must be nonnegative");
    return VarianceFit(VarianceMethod::residual, nullptr, std::move(train), std::move(residuals), spec, kernel,
                       bandwidth, SelfInclusion::include_self, policy, 0);
  }

  VarianceFit(VarianceMethod method, std::shared_ptr<const MeanFit> mean, CurveSet train,
              std::vector<double> pseudo, const SemiMetricSpec& spec, KernelSpec kernel, double bandwidth,
              SelfInclusion mode, WeightPolicy policy, std::size_t residual_fallbacks)
      : method_(method),
        mean_(std::move(mean)),
        train_(std::move(train)),
        pseudo_(std::move(pseudo)),
        map_(spec.is_trained() ? spec : spec.trained_on(train_), train_.grid()),
        kernel_(kernel),
        h_(bandwidth),
        mode_(mode),
        policy_(policy),
        residual_fallbacks_(residual_fallbacks),
        embedding_(map_.embed(train_)),
        dist_(self_distance_matrix(embedding_)) {
    detail::check_responses(pseudo_, train_.size(), "pseudo-responses");
    detail::check_bandwidth(h_);
    if (method_ == VarianceMethod::direct && !mean_) throw invalid_input("direct variance fit needs a mean fit");
  }

  VarianceMethod method() const noexcept { return method_; }
  const std::shared_ptr<const MeanFit>& mean_fit() const noexcept { return mean_; }
  const CurveSet& train() const noexcept { return train_; }
  std::span<const double> pseudo_responses() const noexcept { return pseudo_; }
  const SemiMetricSpec& spec() const noexcept { return map_.spec(); }
  const KernelSpec& kernel() const noexcept { return kernel_; }
  double bandwidth() const noexcept { return h_; }
  SelfInclusion self_inclusion() const noexcept { return mode_; }
  WeightPolicy policy() const noexcept { return policy_; }
  const DistanceMatrix& distances() const noexcept { return dist_; }
  /// Fallbacks that fired while computing the squared residuals.
  std::size_t residual_fallbacks() const noexcept { return residual_fallbacks_; }

  VarianceFit with_bandwidth(double h) const {
    detail::check_bandwidth(h);
    VarianceFit copy = *this;
    copy.h_ = h;
    return copy;
  }

  VariancePrediction predict(const Curve& x) const {
    const auto fx = map_.features(x);
    std::vector<double> d(embedding_.rows.size());
    for (std::size_t j = 0; j < d.size(); ++j) d[j] = feature_distance(fx, embedding_.rows[j], embedding_.weights);
    const auto w = nw_weights(d, h_, kernel_, policy_);
    const double smooth = nw_estimate(w.weights, pseudo_);
    if (method_ == VarianceMethod::residual) return {smooth, w.fallback, false};
    const Prediction m = predict_mean(*mean_, x);
    return finish_direct(smooth, m, w.fallback);
  }

  /// Predictions at the training curves from the cached distance matrices.
  std::vector<VariancePrediction> in_sample() const {
    const std::size_t n = train_.size();
    std::vector<VariancePrediction> out(n);
    std::optional<SmootherMatrix> S;
    if (method_ == VarianceMethod::direct) S = smoother_matrix(*mean_, SelfInclusion::include_self);
    for (std::size_t i = 0; i < n; ++i) {
      const auto w = nw_weights(dist_.row(i), h_, kernel_, policy_);
      const double smooth = nw_estimate(w.weights, pseudo_);
      if (method_ == VarianceMethod::residual) {
        out[i] = {smooth, w.fallback, false};
      } else {
        const Prediction m{nw_estimate(S->row(i), mean_->responses()), S->row_fallback[i]};
        out[i] = finish_direct(smooth, m, w.fallback);
      }
    }
    return out;
  }

 private:
  static VariancePrediction finish_direct(double second_moment, Prediction m, bool fallback) {
    const double v = second_moment - m.value * m.value;
    return {std::max(0.0, v), fallback || m.fallback, v < 0.0};
  }

  VarianceMethod method_;
  std::shared_ptr<const MeanFit> mean_;
  CurveSet train_;
  std::vector<double> pseudo_;
  FeatureMap map_;
  KernelSpec kernel_;
  double h_;
  SelfInclusion mode_;
  WeightPolicy policy_;
  std::size_t residual_fallbacks_;
  Embedding embedding_;
  DistanceMatrix dist_;
};

/// Pseudo-responses are R_i from `mean` (residual) or Y_i^2 (direct); the
/// training curves and responses are those of `mean`.
inline VarianceFit fit_variance(VarianceMethod method, std::shared_ptr<const MeanFit> mean,
                                const SemiMetricSpec& spec, KernelSpec kernel, double bandwidth,
                                SelfInclusion mode = SelfInclusion::include_self, WeightPolicy policy = {}) {
  if (!mean) throw invalid_input("variance fit needs a mean fit");
  std::vector<double> pseudo;
  std::size_t fallbacks = 0;
  if (method == VarianceMethod::residual) {
    auto r = squared_residuals(*mean, mode);
    pseudo = std::move(r.values);
    fallbacks = r.fallback_count;
  } else {
    pseudo.reserve(mean->size());
    for (double y : mean->responses()) pseudo.push_back(y * y);
  }
  CurveSet train = mean->train();
  return VarianceFit(method, std::move(mean), std::move(train), std::move(pseudo), spec, kernel, bandwidth, mode,
                     policy, fallbacks);
}

inline VarianceFit fit_variance(VarianceMethod method, const MeanFit& mean, const SemiMetricSpec& spec,
                                KernelSpec kernel, double bandwidth, SelfInclusion mode = SelfInclusion::include_self,
                                WeightPolicy policy = {}) {
  return fit_variance(method, std::make_shared<const MeanFit>(mean), spec, kernel, bandwidth, mode, policy);
}

inline VariancePrediction predict_variance(const VarianceFit& fit, const Curve& x) { return fit.predict(x); }

// ---------------------------------------------------------------------------
// Bandwidth selection

class BandwidthGrid {
 public:
  explicit BandwidthGrid(std::vector<double> candidates) : h_(std::move(candidates)) {
    if (h_.empty()) throw invalid_input("bandwidth grid is empty");
    for (std::size_t k = 0; k < h_.size(); ++k) {
      if (!(h_[k] > 0.0) || !std::isfinite(h_[k])) throw invalid_input("bandwidth candidates must be positive");
      if (k > 0 && !(h_[k] > h_[k - 1])) throw invalid_input("bandwidth candidates must be strictly increasing");
    }
  }

  std::span<const double> candidates() const noexcept { return h_; }
  std::size_t size() const noexcept { return h_.size(); }

 private:
  std::vector<double> h_;
};

/// Candidates at the q-quantiles (inverse empirical CDF) of the positive
/// off-diagonal distances, q evenly spaced on [0.05, 1], duplicates removed.
inline BandwidthGrid default_bandwidth_grid(const DistanceMatrix& D, std::size_t size = 20) {
  if (size == 0) throw invalid_input("bandwidth grid size must be positive");
  std::vector<double> pos;
  for (std::size_t i = 0; i < D.rows(); ++i)
    for (std::size_t j = 0; j < D.cols(); ++j)
      if (i != j && D(i, j) > 0.0) pos.push_back(D(i, j));
  if (pos.empty()) throw invalid_input("no positive off-diagonal distances to build a bandwidth grid from");
  std::sort(pos.begin(), pos.end());

  const auto N = static_cast<double>(pos.size());
  std::vector<double> h;
  for (std::size_t k = 0; k < size; ++k) {
    const double q = size == 1 ? 1.0 : 0.05 + 0.95 * static_cast<double>(k) / static_cast<double>(size - 1);
    auto idx = static_cast<std::ptrdiff_t>(std::ceil(q * N - 1e-9)) - 1;
    idx = std::clamp<std::ptrdiff_t>(idx, 0, static_cast<std::ptrdiff_t>(pos.size()) - 1);
    const double c = pos[static_cast<std::size_t>(idx)];
    if (h.empty() || c > h.back()) h.push_back(c);
  }
  return BandwidthGrid(std::move(h));
}

struct CvCandidate {
  double bandwidth = 0.0;
  double score = 0.0;          ///< sum_i (resp_i - NW_{-i}(X_i))^2
  double fallback_rate = 0.0;  ///< share of LOO predictions with no in-range neighbour
  bool qualified = false;

  friend bool operator==(const CvCandidate&, const CvCandidate&) = default;
};

struct CvResult {
  double bandwidth = 0.0;
  std::vector<CvCandidate> table;
};

/// Leave-one-out score of one bandwidth. Empty neighbourhoods fall back to
/// the nearest other point and are counted.
template <typename Kernel>
CvCandidate loo_score(const DistanceMatrix& D, std::span<const double> resp, const Kernel& kernel, double h) {
  const std::size_t n = resp.size();
  CvCandidate c{h, 0.0, 0.0, false};
  std::size_t fallbacks = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = D.row(i);
    // offsets from the first in-range response, as in nw_estimate
    double num = 0.0, den = 0.0, anchor = 0.0;
    bool anchored = false;
    std::size_t nearest = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double k = kernel(row[j] / h);
      if (k > 0.0 && !anchored) {
        anchor = resp[j];
        anchored = true;
      }
      num += k * (resp[j] - anchor);
      den += k;
      if (nearest == n || row[j] < row[nearest]) nearest = j;
    }
    double pred;
    if (den > 0.0) {
      pred = anchor + num / den;
    } else {
      ++fallbacks;
      pred = resp[nearest];
    }
    const double e = resp[i] - pred;
    c.score += e * e;
  }
  c.fallback_rate = static_cast<double>(fallbacks) / static_cast<double>(n);
  return c;
}

/// Picks the qualified candidate with the smallest LOO score; ties go to the
/// smaller bandwidth. A candidate is disqualified when its fallback rate
/// exceeds `max_fallback_rate`, or under the `error` policy when any LOO
/// neighbourhood is empty.
template <typename Kernel = KernelSpec>
CvResult cv_bandwidth(const DistanceMatrix& D, std::span<const double> responses, const Kernel& kernel,
                      const BandwidthGrid& grid, WeightPolicy policy = {}, double max_fallback_rate = 0.1) {
  if (D.rows() != D.cols() || D.rows() != responses.size())
    throw invalid_input("cross-validation needs a square distance matrix matching the responses");
  if (responses.size() < 2) throw invalid_input("cross-validation needs at least 2 observations");

  CvResult out;
  std::optional<std::size_t> best;
  for (double h : grid.candidates()) {
    auto c = loo_score(D, responses, kernel, h);
    c.qualified = c.fallback_rate <= max_fallback_rate &&
                  !(policy.empty_neighborhood == EmptyNeighborhood::error && c.fallback_rate > 0.0);
    out.table.push_back(c);
    if (c.qualified && (!best || c.score < out.table[*best].score)) best = out.table.size() - 1;
  }
  if (!best) throw cv_failure("every bandwidth candidate was disqualified by empty neighbourhoods");
  out.bandwidth = out.table[*best].bandwidth;
  return out;
}

inline CvResult cv_bandwidth(const CurveSet& train, std::span<const double> responses, const SemiMetricSpec& spec,
                             const KernelSpec& kernel, const BandwidthGrid& grid, WeightPolicy policy = {},
                             double max_fallback_rate = 0.1) {
  const SemiMetricSpec trained = spec.is_trained() ? spec : spec.trained_on(train);
  return cv_bandwidth(self_distance_matrix(trained, train), responses, kernel, grid, policy, max_fallback_rate);
}

}  // namespace funvar
