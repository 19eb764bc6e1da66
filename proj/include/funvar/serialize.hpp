#pragma once

/// JSON forms of semi-metric specs, CV tables, fit models and reports.

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "funvar/bench.hpp"
#include "funvar/pipeline.hpp"

namespace funvar {

using json = nlohmann::ordered_json;

inline json to_json(const SemiMetricSpec& s) {
  if (s.is_pca()) return {{"kind", "pca_projection"}, {"dim", std::get<PcaProjection>(s.kind()).dim}};
  const auto& d = std::get<DerivL2>(s.kind());
  json j{{"kind", "deriv_l2"}, {"order", d.order}};
  if (const auto* b = std::get_if<BSpline>(&d.method)) {
    j["method"] = "bspline";
    j["knots"] = b->knots;
    j["degree"] = b->degree;
  } else {
    j["method"] = "finite_diff";
  }
  return j;
}

inline SemiMetricSpec semimetric_from_json(const json& j) {
  try {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "pca_projection") return SemiMetricSpec::pca_projection(j.at("dim").get<int>());
    if (kind != "deriv_l2") throw invalid_input("unknown semi-metric kind '" + kind + "'");
    const int order = j.at("order").get<int>();
    const auto method = j.value("method", std::string("finite_diff"));
    if (method == "bspline") return SemiMetricSpec::deriv_l2(order, BSpline{j.at("knots").get<int>(), j.at("degree").get<int>()});
    if (method != "finite_diff") throw invalid_input("unknown derivative method '" + method + "'");
    return SemiMetricSpec::deriv_l2(order, FiniteDiff{});
  } catch (const json::exception& e) {
    throw invalid_input(std::string("malformed semi-metric: ") + e.what());
  }
}

inline json to_json(const CvResult& cv) {
  json rows = json::array();
  for (const auto& c : cv.table)
    rows.push_back({{"bandwidth", c.bandwidth}, {"score", c.score}, {"fallback_rate", c.fallback_rate},
                    {"qualified", c.qualified}});
  return {{"selected", cv.bandwidth}, {"candidates", rows}};
}

struct FileRef {
  std::string path;
  std::string sha256;
};

/// Fit-model document. Training data are referenced by path and content
/// hash, not embedded; in-sample fitted values are included.
inline json fit_model_json(const FittedModel& model, const PipelineConfig& cfg, const FileRef& curves,
                           const FileRef& responses) {
  json j;
  j["format"] = "funvar-fit/1";
  j["training"] = {{"curves", {{"path", curves.path}, {"sha256", curves.sha256}}},
                   {"responses", {{"path", responses.path}, {"sha256", responses.sha256}}},
                   {"n", model.mean->size()}};
  j["kernel"] = std::string(to_string(cfg.kernel.kind));
  j["self_inclusion"] = std::string(to_string(cfg.self_inclusion));
  j["policy"] = std::string(to_string(cfg.policy.empty_neighborhood));
  j["max_fallback_rate"] = cfg.max_fallback_rate;

  const auto S = smoother_matrix(*model.mean, SelfInclusion::include_self);
  std::vector<double> m_hat;
  for (std::size_t i = 0; i < model.mean->size(); ++i) m_hat.push_back(nw_estimate(S.row(i), model.mean->responses()));
  j["mean"] = {{"semimetric", to_json(model.mean->spec())},
               {"bandwidth", model.mean->bandwidth()},
               {"in_sample_fallbacks", S.fallback_count()},
               {"cv", model.mean_cv ? to_json(*model.mean_cv) : json(nullptr)},
               {"in_sample", m_hat}};

  json vars = json::array();
  for (const auto& fv : model.variances) {
    const auto preds = fv.fit.in_sample();
    std::vector<double> v_hat;
    std::size_t clipped = 0, fallbacks = 0;
    for (const auto& p : preds) {
      v_hat.push_back(p.value);
      clipped += p.clipped;
      fallbacks += p.fallback;
    }
    vars.push_back({{"method", std::string(to_string(fv.method))},
                    {"semimetric", to_json(fv.fit.spec())},
                    {"bandwidth", fv.fit.bandwidth()},
                    {"residual_fallbacks", fv.fit.residual_fallbacks()},
                    {"in_sample_fallbacks", fallbacks},
                    {"in_sample_clipped", clipped},
                    {"cv", fv.cv ? to_json(*fv.cv) : json(nullptr)},
                    {"in_sample", v_hat}});
  }
  j["variance"] = vars;
  return j;
}

struct SavedVariance {
  VarianceMethod method = VarianceMethod::residual;
  SemiMetricSpec metric;
  double bandwidth = 0.0;
};

/// Settings needed to rebuild a saved model from its training files.
struct SavedModel {
  FileRef curves, responses;
  KernelSpec kernel{};
  SelfInclusion self_inclusion = SelfInclusion::include_self;
  WeightPolicy policy{};
  SemiMetricSpec mean_metric;
  double mean_bandwidth = 0.0;
  std::vector<SavedVariance> variances;
};

inline SavedModel saved_model_from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != "funvar-fit/1") throw invalid_input("unsupported model format");
    SavedModel s;
    s.curves = {j.at("training").at("curves").at("path").get<std::string>(),
                j.at("training").at("curves").at("sha256").get<std::string>()};
    s.responses = {j.at("training").at("responses").at("path").get<std::string>(),
                   j.at("training").at("responses").at("sha256").get<std::string>()};
    s.kernel.kind = parse_kernel_kind(j.at("kernel").get<std::string>());
    s.self_inclusion = parse_self_inclusion(j.at("self_inclusion").get<std::string>());
    s.policy.empty_neighborhood = parse_empty_neighborhood(j.at("policy").get<std::string>());
    s.mean_metric = semimetric_from_json(j.at("mean").at("semimetric"));
    s.mean_bandwidth = j.at("mean").at("bandwidth").get<double>();
    for (const auto& v : j.at("variance"))
      s.variances.push_back({parse_variance_method(v.at("method").get<std::string>()),
                             semimetric_from_json(v.at("semimetric")), v.at("bandwidth").get<double>()});
    return s;
  } catch (const json::exception& e) {
    throw invalid_input(std::string("malformed model file: ") + e.what());
  }
}

/// Refits a saved model on its training data with the stored bandwidths.
inline FittedModel rebuild_model(const SavedModel& s, const CurveSet& train, const std::vector<double>& y) {
  FittedModel model;
  model.mean = std::make_shared<const MeanFit>(train, y, s.mean_metric, s.kernel, s.mean_bandwidth, s.policy);
  for (const auto& v : s.variances)
    model.variances.push_back(
        {v.method, std::nullopt, fit_variance(v.method, model.mean, v.metric, s.kernel, v.bandwidth, s.self_inclusion, s.policy)});
  return model;
}

// ---------------------------------------------------------------------------

inline std::vector<std::string> method_names(const std::vector<VarianceMethod>& ms) {
  std::vector<std::string> out;
  for (auto m : ms) out.emplace_back(to_string(m));
  return out;
}

inline json to_json(const ExperimentConfig& c) {
  return {{"example", std::string(to_string(c.example))},
          {"n", c.n},
          {"n_reps", c.n_reps},
          {"base_seed", c.base_seed},
          {"grid_size", c.grid_size},
          {"brownian_variance_scale", c.brownian_variance_scale},
          {"mean_semimetric", to_json(c.mean_metric.value_or(default_metric(c.example)))},
          {"variance_semimetric", to_json(c.variance_metric.value_or(default_metric(c.example)))},
          {"kernel", std::string(to_string(c.kernel.kind))},
          {"bandwidth_grid_size", c.bandwidth_grid_size},
          {"self_inclusion", std::string(to_string(c.self_inclusion))},
          {"policy", std::string(to_string(c.policy.empty_neighborhood))},
          {"max_fallback_rate", c.max_fallback_rate},
          {"methods", method_names(c.methods)},
          {"analytic_derivatives", c.analytic_derivatives}};
}

inline json to_json(const ReplicationRecord& r) {
  json j{{"rep", r.rep}, {"failed", r.failed}};
  if (r.failed) j["failure"] = r.failure;
  j["mean_bandwidth"] = r.mean_bandwidth;
  j["residual_fallbacks"] = r.residual_fallbacks;
  json methods = json::object();
  for (const auto& o : r.outcomes)
    methods[std::string(to_string(o.method))] = {
        {"bandwidth", o.bandwidth}, {"mse", o.mse}, {"clipped", o.clipped}, {"fallbacks", o.fallbacks}};
  j["methods"] = methods;
  return j;
}

/// Wall-clock time is left out so identical runs produce identical bytes.
inline json to_json(const ExperimentReport& r) {
  json reps = json::array();
  for (const auto& rec : r.reps) reps.push_back(to_json(rec));
  json medians = json::object();
  for (const auto& [m, v] : r.medians) medians[std::string(to_string(m))] = v;
  return {{"config", to_json(r.config)}, {"failed", r.failed}, {"median_mse", medians}, {"replications", reps}};
}

inline json to_json(const std::vector<ConvergenceRow>& rows) {
  json j = json::array();
  for (const auto& r : rows) j.push_back({{"n", r.n}, {"median_mse_residual", r.median_mse}});
  return j;
}

inline json to_json(const ChemoReport& r) {
  json orders = json::array();
  for (const auto& o : r.orders)
    orders.push_back({{"order", o.order},
                      {"bandwidth", o.bandwidth},
                      {"validation_mse", o.validation_mse},
                      {"fallbacks", o.fallbacks}});
  return {{"n_train", r.n_train},
          {"n_validation", r.n_validation},
          {"mean_bandwidth", r.mean_bandwidth},
          {"mean_fallbacks", r.mean_fallbacks},
          {"orders", orders},
          {"chosen_order", r.chosen_order},
          {"chosen_mse", r.chosen_mse}};
}

/// Columns index, v_hat, r_squared over the validation curves.
inline std::string chemo_plot_csv(const ChemoReport& r) {
  const auto& best = r.chosen();
  std::string out = "index,v_hat,r_squared\n";
  for (std::size_t i = 0; i < best.v_hat.size(); ++i)
    out += std::to_string(r.n_train + i) + "," + io::format_double(best.v_hat[i]) + "," +
           io::format_double(r.validation_residuals[i]) + "\n";
  return out;
}

}  // namespace funvar
