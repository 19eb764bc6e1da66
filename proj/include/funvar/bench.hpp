#pragma once

/// Monte-Carlo comparison of the residual and direct variance estimators,
/// an empirical convergence check, and the spectrometric train/validation
/// workflow.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "funvar/errors.hpp"
#include "funvar/io.hpp"
#include "funvar/parallel.hpp"
#include "funvar/pipeline.hpp"
#include "funvar/simulate.hpp"

namespace funvar {

inline double discrete_mse(std::span<const double> estimates, std::span<const double> truths) {
  if (estimates.size() != truths.size())
    throw invalid_input("mse inputs differ in length (" + std::to_string(estimates.size()) + " vs " +
                        std::to_string(truths.size()) + ")");
  if (estimates.empty()) throw invalid_input("mse needs at least one value");
  double s = 0.0;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    const double d = estimates[i] - truths[i];
    s += d * d;
  }
  return s / static_cast<double>(estimates.size());
}

/// Median of the values; the mean of the two middle values for even sizes.
inline double median(std::vector<double> v) {
  if (v.empty()) throw invalid_input("median of an empty sequence");
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

/// Semi-metric used for both mean and variance in each design: L2 between
/// curves for ex1/ex2, between first derivatives for ex3.
inline SemiMetricSpec default_metric(Example e) {
  return e == Example::ex3 ? SemiMetricSpec::deriv_l2(1) : SemiMetricSpec::deriv_l2(0);
}

struct ExperimentConfig {
  Example example = Example::ex1;
  std::size_t n = 200;
  std::size_t n_reps = 100;
  std::uint64_t base_seed = 0;
  std::size_t grid_size = 101;
  double brownian_variance_scale = 1.0;
  std::optional<SemiMetricSpec> mean_metric;      ///< default_metric(example) when empty
  std::optional<SemiMetricSpec> variance_metric;  ///< default_metric(example) when empty
  KernelSpec kernel{};
  std::size_t bandwidth_grid_size = 20;
  SelfInclusion self_inclusion = SelfInclusion::leave_one_out;
  WeightPolicy policy{};
  double max_fallback_rate = 0.1;
  std::vector<VarianceMethod> methods{VarianceMethod::residual, VarianceMethod::direct};
  /// ex3 only: feed the estimator the analytic derivatives (with the
  /// semi-metric order lowered by one) instead of differentiating samples.
  bool analytic_derivatives = false;
  std::size_t threads = 1;
  double max_failed_fraction = 0.2;

  PipelineConfig pipeline() const {
    PipelineConfig p;
    p.mean_metric = mean_metric.value_or(default_metric(example));
    p.variance_metric = variance_metric.value_or(default_metric(example));
    p.kernel = kernel;
    p.bandwidth_grid_size = bandwidth_grid_size;
    p.self_inclusion = self_inclusion;
    p.policy = policy;
    p.max_fallback_rate = max_fallback_rate;
    p.methods = methods;
    return p;
  }
};

struct MethodOutcome {
  VarianceMethod method = VarianceMethod::residual;
  double bandwidth = 0.0;
  double mse = 0.0;
  std::size_t clipped = 0;
  std::size_t fallbacks = 0;  ///< in-sample variance predictions that fell back
};

struct ReplicationRecord {
  std::size_t rep = 0;
  bool failed = false;
  std::string failure;
  double mean_bandwidth = 0.0;
  std::size_t residual_fallbacks = 0;
  std::vector<MethodOutcome> outcomes;

  const MethodOutcome* find(VarianceMethod m) const {
    for (const auto& o : outcomes)
      if (o.method == m) return &o;
    return nullptr;
  }
};

namespace detail {

inline SemiMetricSpec lowered(const SemiMetricSpec& s) {
  if (s.is_pca()) return s;
  auto d = std::get<DerivL2>(s.kind());
  if (d.order == 0) throw invalid_input("analytic derivatives need a derivative semi-metric of order >= 1");
  return SemiMetricSpec::deriv_l2(d.order - 1, d.method);
}

}  // namespace detail

/// One replication on a given dataset. The variance estimate is scored at
/// the n training curves against the known v(X_i).
inline ReplicationRecord run_replication_on(const ExperimentConfig& cfg, const SimulatedDataset& ds,
                                            std::size_t rep = 0) {
  ReplicationRecord rec;
  rec.rep = rep;
  if (cfg.methods.empty()) return rec;

  PipelineConfig pc = cfg.pipeline();
  const CurveSet* covariates = &ds.curves;
  if (cfg.analytic_derivatives && ds.derivs) {
    covariates = &*ds.derivs;
    pc.mean_metric = detail::lowered(pc.mean_metric);
    pc.variance_metric = detail::lowered(pc.variance_metric);
  }

  try {
    const FittedModel model = fit_model(*covariates, ds.y, pc);
    rec.mean_bandwidth = model.mean->bandwidth();
    for (const auto& fv : model.variances) {
      const auto preds = fv.fit.in_sample();
      std::vector<double> v_hat;
      v_hat.reserve(preds.size());
      MethodOutcome o;
      o.method = fv.method;
      o.bandwidth = fv.fit.bandwidth();
      for (const auto& p : preds) {
        v_hat.push_back(p.value);
        o.clipped += p.clipped;
        o.fallbacks += p.fallback;
      }
      o.mse = discrete_mse(v_hat, ds.true_v);
      if (fv.method == VarianceMethod::residual) rec.residual_fallbacks = fv.fit.residual_fallbacks();
      rec.outcomes.push_back(o);
    }
  } catch (const cv_failure& e) {
    rec.failed = true;
    rec.failure = e.what();
    rec.outcomes.clear();
  } catch (const empty_neighborhood& e) {
    rec.failed = true;
    rec.failure = e.what();
    rec.outcomes.clear();
  }
  return rec;
}

inline SimulatedDataset replication_dataset(const ExperimentConfig& cfg, std::size_t rep) {
  return gen_dataset(SimSpec{cfg.example, cfg.n, cfg.grid_size, cfg.base_seed, rep, cfg.brownian_variance_scale});
}

/// Replication `rep` draws its dataset from stream (base_seed, rep).
inline ReplicationRecord run_replication(const ExperimentConfig& cfg, std::size_t rep) {
  return run_replication_on(cfg, replication_dataset(cfg, rep), rep);
}

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<ReplicationRecord> reps;  ///< sorted by rep index
  std::vector<std::pair<VarianceMethod, double>> medians;
  std::size_t failed = 0;
  double wall_seconds = 0.0;  ///< not serialized

  std::optional<double> median_mse(VarianceMethod m) const {
    for (const auto& [method, v] : medians)
      if (method == m) return v;
    return std::nullopt;
  }
};

/// Medians over the successful replications.
inline void aggregate(ExperimentReport& report) {
  report.medians.clear();
  report.failed = 0;
  for (const auto& r : report.reps) report.failed += r.failed;
  for (VarianceMethod m : report.config.methods) {
    std::vector<double> v;
    for (const auto& r : report.reps)
      if (const auto* o = r.find(m)) v.push_back(o->mse);
    if (!v.empty()) report.medians.emplace_back(m, median(std::move(v)));
  }
}

inline ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  if (cfg.n_reps == 0) throw invalid_input("experiment needs at least one replication");
  if (cfg.n < 2) throw invalid_input("experiment needs n >= 2");
  const auto start = std::chrono::steady_clock::now();

  ExperimentReport report;
  report.config = cfg;
  report.reps.resize(cfg.n_reps);
  parallel_for(cfg.n_reps, cfg.threads, [&](std::size_t rep) { report.reps[rep] = run_replication(cfg, rep); });
  aggregate(report);
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  if (static_cast<double>(report.failed) > cfg.max_failed_fraction * static_cast<double>(cfg.n_reps)) {
    std::string msg = std::to_string(report.failed) + " of " + std::to_string(cfg.n_reps) +
                      " replications failed; first failures:";
    std::size_t shown = 0;
    for (const auto& r : report.reps)
      if (r.failed && shown++ < 3) msg += " [rep " + std::to_string(r.rep) + ": " + r.failure + "]";
    throw experiment_aborted(msg);
  }
  return report;
}

struct ConvergenceRow {
  std::size_t n = 0;
  double median_mse = 0.0;  ///< residual method
};

/// Median residual-method MSE for each sample size, with the same seeds at
/// every n.
inline std::vector<ConvergenceRow> convergence_check(ExperimentConfig cfg, const std::vector<std::size_t>& n_values) {
  if (n_values.size() < 2) throw invalid_input("convergence check needs at least two sample sizes");
  for (std::size_t k = 1; k < n_values.size(); ++k)
    if (n_values[k] < n_values[k - 1]) throw invalid_input("sample sizes must be nondecreasing");
  cfg.methods = {VarianceMethod::residual};
  std::vector<ConvergenceRow> rows;
  for (std::size_t n : n_values) {
    cfg.n = n;
    const auto rep = run_experiment(cfg);
    rows.push_back({n, *rep.median_mse(VarianceMethod::residual)});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Spectrometric workflow

struct ChemoConfig {
  std::filesystem::path curves_file;
  std::filesystem::path responses_file;
  std::size_t train_size = 150;
  int mean_order = 2;
  std::vector<int> variance_orders{0, 1, 2};
  bool spline_derivatives = true;  ///< least-squares B-spline derivatives, else finite differences
  int spline_knots = 20;
  KernelSpec kernel{};
  std::size_t bandwidth_grid_size = 20;
  SelfInclusion self_inclusion = SelfInclusion::leave_one_out;
  WeightPolicy policy{};
  double max_fallback_rate = 0.1;

  /// Spline degree is order + 2, at least cubic.
  SemiMetricSpec metric(int order) const {
    if (!spline_derivatives || order == 0) return SemiMetricSpec::deriv_l2(order, FiniteDiff{});
    return SemiMetricSpec::deriv_l2(order, BSpline{spline_knots, std::max(3, order + 2)});
  }
};

struct ChemoOrderResult {
  int order = 0;
  double bandwidth = 0.0;
  double validation_mse = 0.0;
  std::vector<double> v_hat;  ///< at the validation curves
  std::size_t fallbacks = 0;
};

struct ChemoReport {
  std::size_t n_train = 0, n_validation = 0;
  double mean_bandwidth = 0.0;
  std::vector<double> validation_residuals;  ///< (Y_i - m_hat(X_i))^2 on validation curves
  std::size_t mean_fallbacks = 0;
  std::vector<ChemoOrderResult> orders;
  int chosen_order = 0;
  double chosen_mse = 0.0;

  const ChemoOrderResult& chosen() const {
    for (const auto& o : orders)
      if (o.order == chosen_order) return o;
    throw invalid_input("no chosen order");
  }
};

/// Fits the mean on the first `train_size` curves; for each candidate order
/// fits the residual variance on training residuals and scores it on the
/// held-out curves by mean (R_i - v_hat(X_i))^2. Bandwidths never see the
/// validation data.
inline ChemoReport chemo_workflow(const CurveSet& curves, const std::vector<double>& y, const ChemoConfig& cfg) {
  if (y.size() != curves.size()) throw invalid_input("responses and curves differ in count");
  if (cfg.train_size < 2 || cfg.train_size >= curves.size())
    throw invalid_input("train size must be at least 2 and smaller than the number of curves");
  if (cfg.variance_orders.empty()) throw invalid_input("no variance semi-metric orders to compare");

  const std::size_t n_train = cfg.train_size;
  const std::size_t n_val = curves.size() - n_train;
  const CurveSet train = curves.slice(0, n_train);
  const CurveSet validation = curves.slice(n_train, n_val);
  const std::vector<double> y_train(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(n_train));

  PipelineConfig pc;
  pc.mean_metric = cfg.metric(cfg.mean_order);
  pc.kernel = cfg.kernel;
  pc.bandwidth_grid_size = cfg.bandwidth_grid_size;
  pc.self_inclusion = cfg.self_inclusion;
  pc.policy = cfg.policy;
  pc.max_fallback_rate = cfg.max_fallback_rate;
  pc.methods = {VarianceMethod::residual};

  ChemoReport report;
  report.n_train = n_train;
  report.n_validation = n_val;

  std::optional<FittedModel> first;
  for (int order : cfg.variance_orders) {
    pc.variance_metric = cfg.metric(order);
    FittedModel model = fit_model(train, y_train, pc);
    if (!first) {
      report.mean_bandwidth = model.mean->bandwidth();
      for (std::size_t i = 0; i < n_val; ++i) {
        const auto p = predict_mean(*model.mean, validation[i]);
        const double e = y[n_train + i] - p.value;
        report.validation_residuals.push_back(e * e);
        report.mean_fallbacks += p.fallback;
      }
      if (report.mean_fallbacks == n_val) throw cv_failure("every validation mean prediction fell back");
    }
    const auto& var = model.find(VarianceMethod::residual)->fit;
    ChemoOrderResult res;
    res.order = order;
    res.bandwidth = var.bandwidth();
    for (std::size_t i = 0; i < n_val; ++i) {
      const auto p = var.predict(validation[i]);
      res.v_hat.push_back(p.value);
      res.fallbacks += p.fallback;
    }
    if (res.fallbacks == n_val) throw cv_failure("every validation variance prediction fell back");
    res.validation_mse = discrete_mse(report.validation_residuals, res.v_hat);
    report.orders.push_back(std::move(res));
    if (!first) first = std::move(model);
  }

  const auto best = std::min_element(report.orders.begin(), report.orders.end(),
                                     [](const auto& a, const auto& b) { return a.validation_mse < b.validation_mse; });
  report.chosen_order = best->order;
  report.chosen_mse = best->validation_mse;
  return report;
}

inline ChemoReport chemo_workflow(const ChemoConfig& cfg) {
  const auto curves = io::read_curves_csv(cfg.curves_file);
  const auto y = io::read_responses_csv(cfg.responses_file);
  return chemo_workflow(curves, y, cfg);
}

}  // namespace funvar
