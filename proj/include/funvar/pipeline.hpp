#pragma once

/// Two-stage fit: choose h_m by leave-one-out CV on Y and fit the mean;
/// then, per variance method, choose h_v by CV on that method's
/// pseudo-responses (R_i or Y_i^2) and fit the variance. A fixed bandwidth
/// skips the corresponding CV step.

#include <cstddef>
#include <memory>
#include <optional>
#include <vector>

#include "funvar/estimators.hpp"

namespace funvar {

struct PipelineConfig {
  SemiMetricSpec mean_metric = SemiMetricSpec::deriv_l2(0);
  SemiMetricSpec variance_metric = SemiMetricSpec::deriv_l2(0);
  KernelSpec kernel{};
  std::size_t bandwidth_grid_size = 20;
  SelfInclusion self_inclusion = SelfInclusion::leave_one_out;
  WeightPolicy policy{};
  double max_fallback_rate = 0.1;
  std::optional<double> mean_bandwidth;
  std::optional<double> variance_bandwidth;
  std::vector<VarianceMethod> methods{VarianceMethod::residual, VarianceMethod::direct};
};

struct FittedVariance {
  VarianceMethod method;
  std::optional<CvResult> cv;
  VarianceFit fit;
};

struct FittedModel {
  std::optional<CvResult> mean_cv;
  std::shared_ptr<const MeanFit> mean;
  std::vector<FittedVariance> variances;

  const FittedVariance* find(VarianceMethod m) const {
    for (const auto& v : variances)
      if (v.method == m) return &v;
    return nullptr;
  }
};

inline FittedModel fit_model(const CurveSet& train, const std::vector<double>& y, const PipelineConfig& cfg) {
  FittedModel model;

  // The fit owns the cached distance matrix; CV reuses it before the
  // selected bandwidth is installed.
  MeanFit mean(train, y, cfg.mean_metric, cfg.kernel, cfg.mean_bandwidth.value_or(1.0), cfg.policy);
  if (!cfg.mean_bandwidth) {
    model.mean_cv = cv_bandwidth(mean.distances(), mean.responses(), cfg.kernel,
                                 default_bandwidth_grid(mean.distances(), cfg.bandwidth_grid_size), cfg.policy,
                                 cfg.max_fallback_rate);
    mean = mean.with_bandwidth(model.mean_cv->bandwidth);
  }
  model.mean = std::make_shared<const MeanFit>(std::move(mean));

  std::optional<BandwidthGrid> var_grid;
  for (VarianceMethod method : cfg.methods) {
    VarianceFit fit = fit_variance(method, model.mean, cfg.variance_metric, cfg.kernel,
                                   cfg.variance_bandwidth.value_or(1.0), cfg.self_inclusion, cfg.policy);
    std::optional<CvResult> cv;
    if (!cfg.variance_bandwidth) {
      if (!var_grid) var_grid = default_bandwidth_grid(fit.distances(), cfg.bandwidth_grid_size);
      cv = cv_bandwidth(fit.distances(), fit.pseudo_responses(), cfg.kernel, *var_grid, cfg.policy,
                        cfg.max_fallback_rate);
      fit = fit.with_bandwidth(cv->bandwidth);
    }
    model.variances.push_back({method, std::move(cv), std::move(fit)});
  }
  return model;
}

}  // namespace funvar
