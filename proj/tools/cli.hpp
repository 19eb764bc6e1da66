#pragma once

// Command-line front end: parse_args() validates flags into a CliConfig
// before any computation; dispatch() runs one subcommand.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "CLI11.hpp"
#include "funvar/funvar.hpp"

namespace funvar::cli {

namespace fs = std::filesystem;

enum ExitCode : int { ok = 0, usage = 2, io_failure = 3, computation = 4 };

/// Bad command line. `help` is set when the user asked for --help.
class usage_error : public std::runtime_error {
 public:
  usage_error(const std::string& msg, bool help = false) : std::runtime_error(msg), help_(help) {}
  bool help() const noexcept { return help_; }

 private:
  bool help_;
};

struct GlobalOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  fs::path output_dir = ".";
  std::string format = "csv";
};

struct SimulateCmd {
  SimSpec spec;
  std::size_t reps = 1;
};

struct FitCmd {
  fs::path curves, responses;
  PipelineConfig pipeline;
  fs::path out = "model.json";
};

struct PredictCmd {
  fs::path model, curves;
  fs::path out;  ///< default predictions.<format>
};

struct BenchCmd {
  ExperimentConfig experiment;
  std::vector<std::size_t> n_values;  ///< non-empty: convergence table instead of a single experiment
  fs::path out = "report.json";
};

struct ChemoCmd {
  ChemoConfig config;
  fs::path report = "chemo_report.json";
  fs::path plot = "chemo_plot.csv";
};

struct SmallBallCmd {
  fs::path curves;
  SemiMetricSpec metric;
  std::optional<std::size_t> x_index;  ///< empty: average over every curve as centre
  std::vector<double> radii;
  std::size_t points = 20;
  fs::path out;  ///< default smallball.<format>
};

using Command = std::variant<SimulateCmd, FitCmd, PredictCmd, BenchCmd, ChemoCmd, SmallBallCmd>;

struct CliConfig {
  GlobalOptions global;
  Command command;
};

namespace detail {

struct MetricFlags {
  std::optional<int> order;
  std::optional<int> pca_dim;
  std::string deriv = "finite_diff";
  int knots = 20;
  std::optional<int> degree;

  SemiMetricSpec build(int default_order) const {
    if (pca_dim) return SemiMetricSpec::pca_projection(*pca_dim);
    const int q = order.value_or(default_order);
    if (deriv == "bspline" && q > 0) return SemiMetricSpec::deriv_l2(q, BSpline{knots, degree.value_or(std::max(3, q + 2))});
    return SemiMetricSpec::deriv_l2(q, FiniteDiff{});
  }
};

inline const std::vector<std::string> kKernels{"quadratic", "uniform", "triangle"};
inline const std::vector<std::string> kPolicies{"error", "nearest_neighbor_fallback"};
inline const std::vector<std::string> kModes{"include_self", "leave_one_out"};
inline const std::vector<std::string> kExamples{"ex1", "ex2", "ex3"};

struct EstimatorFlags {
  std::string kernel = "quadratic";
  std::string policy = "nearest_neighbor_fallback";
  std::string self_inclusion = "leave_one_out";
  std::size_t bandwidth_grid = 20;
  double max_fallback_rate = 0.1;

  void add(CLI::App* app) {
    app->add_option("--kernel", kernel, "Kernel on [0,1]")->check(CLI::IsMember(kKernels))->capture_default_str();
    app->add_option("--policy", policy, "Empty-neighbourhood policy")->check(CLI::IsMember(kPolicies))->capture_default_str();
    app->add_option("--self-inclusion", self_inclusion, "How in-sample mean fits treat their own point")
        ->check(CLI::IsMember(kModes))
        ->capture_default_str();
    app->add_option("--bandwidth-grid", bandwidth_grid, "Number of CV bandwidth candidates")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app->add_option("--max-fallback-rate", max_fallback_rate, "CV disqualification threshold")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
  }
};

inline void add_metric(CLI::App* app, MetricFlags& f, const std::string& prefix, const std::string& what) {
  auto* order = app->add_option("--" + prefix + "-order", f.order, "Derivative order of the " + what + " semi-metric")
                    ->check(CLI::NonNegativeNumber);
  auto* pca = app->add_option("--" + prefix + "-pca", f.pca_dim, "Use a PCA projection semi-metric of this dimension for the " + what)
                  ->check(CLI::PositiveNumber);
  order->excludes(pca);
}

inline void add_deriv(CLI::App* app, MetricFlags& f) {
  app->add_option("--deriv", f.deriv, "Derivative method")
      ->check(CLI::IsMember(std::vector<std::string>{"finite_diff", "bspline"}))
      ->capture_default_str();
  app->add_option("--knots", f.knots, "Interior knots for bspline derivatives")->check(CLI::PositiveNumber)->capture_default_str();
  app->add_option("--degree", f.degree, "Spline degree (default max(3, order + 2))")->check(CLI::PositiveNumber);
}

inline std::vector<VarianceMethod> parse_methods(const std::vector<std::string>& names) {
  std::vector<VarianceMethod> out;
  for (const auto& n : names) out.push_back(parse_variance_method(n));
  return out;
}

}  // namespace detail

/// Parses and validates a full command line. Throws usage_error.
inline CliConfig parse_args(int argc, const char* const* argv) {
  CLI::App app{"Kernel estimation of mean and variance functions for functional covariates", "funvar"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--seed", g.seed, "Base random seed (required for simulate and bench)");
  app.add_option("--threads", g.threads, "Worker threads (default FUNVAR_THREADS or 1)")->check(CLI::PositiveNumber);
  app.add_option("--output-dir", g.output_dir, "Directory for output files")->capture_default_str();
  app.add_option("--format", g.format, "Tabular output format")
      ->check(CLI::IsMember(std::vector<std::string>{"csv", "json"}))
      ->capture_default_str();

  // simulate
  auto* sim = app.add_subcommand("simulate", "Generate datasets from a simulation design");
  std::string sim_example = "ex1";
  SimulateCmd sim_cmd;
  sim->add_option("--example", sim_example, "Simulation design")->check(CLI::IsMember(detail::kExamples))->capture_default_str();
  sim->add_option("--n", sim_cmd.spec.n, "Curves per dataset")->check(CLI::PositiveNumber)->capture_default_str();
  sim->add_option("--grid-points", sim_cmd.spec.grid_size, "Grid points on [-1,1]")->check(CLI::Range(2, 1000000))->capture_default_str();
  sim->add_option("--reps", sim_cmd.reps, "Number of datasets (stream ids 0..reps-1)")->check(CLI::PositiveNumber)->capture_default_str();
  sim->add_option("--bm-variance-scale", sim_cmd.spec.brownian_variance_scale, "Brownian increment variance per unit time")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  // fit
  auto* fit = app.add_subcommand("fit", "Fit mean and variance functions and write a model file");
  FitCmd fit_cmd;
  detail::MetricFlags fit_mean_metric, fit_var_metric;
  detail::EstimatorFlags fit_est;
  std::optional<double> h_mean, h_var;
  std::vector<std::string> fit_methods{"residual", "direct"};
  fit->add_option("--curves", fit_cmd.curves, "Curves CSV")->required()->check(CLI::ExistingFile);
  fit->add_option("--responses", fit_cmd.responses, "Responses CSV")->required()->check(CLI::ExistingFile);
  detail::add_metric(fit, fit_mean_metric, "mean", "mean");
  detail::add_metric(fit, fit_var_metric, "var", "variance");
  std::string fit_deriv = "finite_diff";
  int fit_knots = 20;
  std::optional<int> fit_degree;
  fit->add_option("--deriv", fit_deriv, "Derivative method")
      ->check(CLI::IsMember(std::vector<std::string>{"finite_diff", "bspline"}))
      ->capture_default_str();
  fit->add_option("--knots", fit_knots, "Interior knots for bspline derivatives")->check(CLI::PositiveNumber)->capture_default_str();
  fit->add_option("--degree", fit_degree, "Spline degree (default max(3, order + 2))")->check(CLI::PositiveNumber);
  fit_est.add(fit);
  fit->add_option("--h-mean", h_mean, "Fixed mean bandwidth (skips CV)")->check(CLI::PositiveNumber);
  fit->add_option("--h-var", h_var, "Fixed variance bandwidth (skips CV)")->check(CLI::PositiveNumber);
  fit->add_option("--methods", fit_methods, "Variance methods")
      ->delimiter(',')
      ->check(CLI::IsMember(std::vector<std::string>{"residual", "direct"}))
      ->capture_default_str();
  fit->add_option("--out", fit_cmd.out, "Model file name")->capture_default_str();

  // predict
  auto* pred = app.add_subcommand("predict", "Predict mean and variance at new curves");
  PredictCmd pred_cmd;
  pred->add_option("--model", pred_cmd.model, "Model JSON from `fit`")->required()->check(CLI::ExistingFile);
  pred->add_option("--curves", pred_cmd.curves, "Curves CSV to predict at")->required()->check(CLI::ExistingFile);
  pred->add_option("--out", pred_cmd.out, "Predictions file name (default predictions.csv or .json)");

  // bench
  auto* bench = app.add_subcommand("bench", "Monte-Carlo comparison of residual and direct variance estimators");
  BenchCmd bench_cmd;
  std::string bench_example = "ex1";
  detail::EstimatorFlags bench_est;
  detail::MetricFlags bench_mean_metric, bench_var_metric;
  std::vector<std::string> bench_methods{"residual", "direct"};
  auto& ec = bench_cmd.experiment;
  bench->add_option("--example", bench_example, "Simulation design")->check(CLI::IsMember(detail::kExamples))->capture_default_str();
  bench->add_option("--n", ec.n, "Curves per replication")->check(CLI::Range(2, 1000000))->capture_default_str();
  bench->add_option("--reps", ec.n_reps, "Replications")->check(CLI::PositiveNumber)->capture_default_str();
  bench->add_option("--grid-points", ec.grid_size, "Grid points on [-1,1]")->check(CLI::Range(2, 1000000))->capture_default_str();
  bench->add_option("--bm-variance-scale", ec.brownian_variance_scale, "Brownian increment variance per unit time")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  detail::add_metric(bench, bench_mean_metric, "mean", "mean");
  detail::add_metric(bench, bench_var_metric, "var", "variance");
  bench_est.add(bench);
  bench->add_option("--methods", bench_methods, "Variance methods")
      ->delimiter(',')
      ->check(CLI::IsMember(std::vector<std::string>{"residual", "direct"}))
      ->capture_default_str();
  bench->add_flag("--analytic-derivs", ec.analytic_derivatives, "ex3: feed analytic derivatives to the estimators");
  bench->add_option("--n-values", bench_cmd.n_values, "Run a convergence check over these sample sizes")->delimiter(',');
  bench->add_option("--out", bench_cmd.out, "Report file name")->capture_default_str();

  // chemo
  auto* chemo = app.add_subcommand("chemo", "Spectrometric train/validation variance workflow");
  ChemoCmd chemo_cmd;
  detail::EstimatorFlags chemo_est;
  auto& cc = chemo_cmd.config;
  std::string chemo_deriv = "bspline";
  chemo->add_option("--curves", cc.curves_file, "Spectra CSV")->required()->check(CLI::ExistingFile);
  chemo->add_option("--responses", cc.responses_file, "Responses CSV")->required()->check(CLI::ExistingFile);
  chemo->add_option("--train-size", cc.train_size, "Leading rows used for training")->check(CLI::Range(2, 100000000))->capture_default_str();
  chemo->add_option("--mean-order", cc.mean_order, "Derivative order of the mean semi-metric")->check(CLI::NonNegativeNumber)->capture_default_str();
  chemo->add_option("--var-orders", cc.variance_orders, "Candidate variance semi-metric orders")
      ->delimiter(',')
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  chemo->add_option("--deriv", chemo_deriv, "Derivative method")
      ->check(CLI::IsMember(std::vector<std::string>{"finite_diff", "bspline"}))
      ->capture_default_str();
  chemo->add_option("--knots", cc.spline_knots, "Interior knots for bspline derivatives")->check(CLI::PositiveNumber)->capture_default_str();
  chemo_est.add(chemo);
  chemo->add_option("--report", chemo_cmd.report, "Report file name")->capture_default_str();
  chemo->add_option("--plot", chemo_cmd.plot, "Plot-data CSV file name")->capture_default_str();

  // smallball
  auto* sb = app.add_subcommand("smallball", "Empirical small-ball probability phi(h) over a radius grid");
  SmallBallCmd sb_cmd;
  detail::MetricFlags sb_metric;
  sb->add_option("--curves", sb_cmd.curves, "Curves CSV")->required()->check(CLI::ExistingFile);
  sb->add_option("--order", sb_metric.order, "Derivative order of the semi-metric")->check(CLI::NonNegativeNumber);
  sb->add_option("--pca", sb_metric.pca_dim, "PCA projection dimension")->check(CLI::PositiveNumber)->excludes("--order");
  detail::add_deriv(sb, sb_metric);
  sb->add_option("--x-index", sb_cmd.x_index, "Centre curve (default: average over all curves)");
  sb->add_option("--radii", sb_cmd.radii, "Explicit radii h")->delimiter(',')->check(CLI::PositiveNumber);
  sb->add_option("--points", sb_cmd.points, "Radii evenly spaced up to the largest distance")->check(CLI::Range(2, 100000))->capture_default_str();
  sb->add_option("--out", sb_cmd.out, "Output file name (default smallball.csv or .json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    throw usage_error(app.help(), true);
  } catch (const CLI::CallForAllHelp&) {
    throw usage_error(app.help("", CLI::AppFormatMode::All), true);
  } catch (const CLI::ParseError& e) {
    const auto* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front();
    throw usage_error(std::string(e.what()) + "\nRun with " + (sub ? sub->get_name() + " " : std::string()) +
                      "--help for usage.");
  }

  CliConfig cfg{g, SimulateCmd{}};
  auto need_seed = [&](const char* name) {
    if (!g.seed) throw usage_error(std::string(name) + ": --seed is required (all randomness flows from it)");
  };
  try {
    if (sim->parsed()) {
      need_seed("simulate");
      sim_cmd.spec.example = parse_example(sim_example);
      sim_cmd.spec.seed = *g.seed;
      cfg.command = sim_cmd;
    } else if (fit->parsed()) {
      fit_mean_metric.deriv = fit_var_metric.deriv = fit_deriv;
      fit_mean_metric.knots = fit_var_metric.knots = fit_knots;
      fit_mean_metric.degree = fit_var_metric.degree = fit_degree;
      auto& p = fit_cmd.pipeline;
      p.mean_metric = fit_mean_metric.build(0);
      p.variance_metric = fit_var_metric.build(fit_mean_metric.order.value_or(0));
      if (fit_var_metric.pca_dim == std::nullopt && fit_var_metric.order == std::nullopt && fit_mean_metric.pca_dim)
        p.variance_metric = p.mean_metric;
      p.kernel.kind = parse_kernel_kind(fit_est.kernel);
      p.policy.empty_neighborhood = parse_empty_neighborhood(fit_est.policy);
      p.self_inclusion = parse_self_inclusion(fit_est.self_inclusion);
      p.bandwidth_grid_size = fit_est.bandwidth_grid;
      p.max_fallback_rate = fit_est.max_fallback_rate;
      p.mean_bandwidth = h_mean;
      p.variance_bandwidth = h_var;
      p.methods = detail::parse_methods(fit_methods);
      cfg.command = fit_cmd;
    } else if (pred->parsed()) {
      cfg.command = pred_cmd;
    } else if (bench->parsed()) {
      need_seed("bench");
      ec.example = parse_example(bench_example);
      ec.base_seed = *g.seed;
      if (bench_mean_metric.order || bench_mean_metric.pca_dim) ec.mean_metric = bench_mean_metric.build(0);
      if (bench_var_metric.order || bench_var_metric.pca_dim) ec.variance_metric = bench_var_metric.build(0);
      ec.kernel.kind = parse_kernel_kind(bench_est.kernel);
      ec.policy.empty_neighborhood = parse_empty_neighborhood(bench_est.policy);
      ec.self_inclusion = parse_self_inclusion(bench_est.self_inclusion);
      ec.bandwidth_grid_size = bench_est.bandwidth_grid;
      ec.max_fallback_rate = bench_est.max_fallback_rate;
      ec.methods = detail::parse_methods(bench_methods);
      if (ec.analytic_derivatives && ec.example != Example::ex3)
        throw usage_error("bench: --analytic-derivs only applies to --example ex3");
      if (bench_cmd.n_values.size() == 1) throw usage_error("bench: --n-values needs at least two sample sizes");
      for (std::size_t k = 1; k < bench_cmd.n_values.size(); ++k)
        if (bench_cmd.n_values[k] < bench_cmd.n_values[k - 1])
          throw usage_error("bench: --n-values must be nondecreasing");
      cfg.command = bench_cmd;
    } else if (chemo->parsed()) {
      cc.spline_derivatives = chemo_deriv == "bspline";
      cc.kernel.kind = parse_kernel_kind(chemo_est.kernel);
      cc.policy.empty_neighborhood = parse_empty_neighborhood(chemo_est.policy);
      cc.self_inclusion = parse_self_inclusion(chemo_est.self_inclusion);
      cc.bandwidth_grid_size = chemo_est.bandwidth_grid;
      cc.max_fallback_rate = chemo_est.max_fallback_rate;
      if (cc.variance_orders.empty()) throw usage_error("chemo: --var-orders needs at least one order");
      cfg.command = chemo_cmd;
    } else if (sb->parsed()) {
      sb_cmd.metric = sb_metric.build(0);
      cfg.command = sb_cmd;
    }
  } catch (const invalid_input& e) {
    throw usage_error(e.what());
  }
  return cfg;
}

// ---------------------------------------------------------------------------

namespace detail {

inline fs::path output_path(const GlobalOptions& g, const fs::path& out, const std::string& stem) {
  return g.output_dir / (out.empty() ? fs::path(stem + "." + g.format) : out);
}

inline std::string curve_set_summary(const CurveSet& s) {
  return std::to_string(s.size()) + " curves x " + std::to_string(s.grid()->size()) + " points";
}

inline void run_simulate(const GlobalOptions& g, const SimulateCmd& cmd, std::ostream& log) {
  for (std::size_t rep = 0; rep < cmd.reps; ++rep) {
    SimSpec spec = cmd.spec;
    spec.stream_id = rep;
    const auto ds = gen_dataset(spec);
    const std::string prefix = cmd.reps == 1 ? "" : "rep" + std::to_string(rep) + "_";
    io::write_dataset(io::dataset_files(g.output_dir, prefix), ds);
    log << "wrote " << prefix << "{curves,responses,truth}.csv (" << curve_set_summary(ds.curves) << ")\n";
  }
}

inline void run_fit(const GlobalOptions& g, const FitCmd& cmd, std::ostream& log) {
  const auto curves = io::read_curves_csv(cmd.curves);
  const auto y = io::read_responses_csv(cmd.responses);
  if (y.size() != curves.size())
    throw io_error("responses file has " + std::to_string(y.size()) + " rows but curves file has " +
                   std::to_string(curves.size()));
  const auto model = fit_model(curves, y, cmd.pipeline);
  const json doc = fit_model_json(model, cmd.pipeline,
                                  {fs::absolute(cmd.curves).lexically_normal().string(), io::sha256_file(cmd.curves)},
                                  {fs::absolute(cmd.responses).lexically_normal().string(), io::sha256_file(cmd.responses)});
  io::write_file_atomic(g.output_dir / cmd.out, doc.dump(2) + "\n");
  log << "h_mean = " << model.mean->bandwidth();
  for (const auto& v : model.variances) log << ", h_" << to_string(v.method) << " = " << v.fit.bandwidth();
  log << "\n";
}

inline void run_predict(const GlobalOptions& g, const PredictCmd& cmd, std::ostream& log) {
  json doc;
  try {
    doc = json::parse(io::read_file(cmd.model));
  } catch (const json::parse_error& e) {
    throw io_error(cmd.model.string() + ": " + e.what());
  }
  const SavedModel saved = saved_model_from_json(doc);
  if (io::sha256_file(saved.curves.path) != saved.curves.sha256)
    throw io_error("training curves " + saved.curves.path + " changed since the model was fitted");
  if (io::sha256_file(saved.responses.path) != saved.responses.sha256)
    throw io_error("training responses " + saved.responses.path + " changed since the model was fitted");
  const auto train = io::read_curves_csv(saved.curves.path);
  const auto y = io::read_responses_csv(saved.responses.path);
  const auto model = rebuild_model(saved, train, y);

  const auto raw = io::read_curves_csv(cmd.curves);
  if (!(*raw.grid() == *train.grid())) throw io_error(cmd.curves.string() + ": grid differs from the training grid");
  std::vector<std::vector<double>> rows;
  for (const auto& c : raw) rows.emplace_back(c.values().begin(), c.values().end());
  const auto query = CurveSet::from_rows(train.grid(), rows);

  json out = json::array();
  std::string csv = "index,m_hat,m_fallback";
  for (const auto& v : model.variances) {
    const std::string m(to_string(v.method));
    csv += "," + m + "_v_hat," + m + "_fallback," + m + "_clipped";
  }
  csv += "\n";
  for (std::size_t i = 0; i < query.size(); ++i) {
    const auto m = predict_mean(*model.mean, query[i]);
    json row{{"index", i}, {"m_hat", m.value}, {"m_fallback", m.fallback}};
    csv += std::to_string(i) + "," + io::format_double(m.value) + "," + (m.fallback ? "1" : "0");
    for (const auto& v : model.variances) {
      const auto p = v.fit.predict(query[i]);
      const std::string name(to_string(v.method));
      row[name] = {{"v_hat", p.value}, {"fallback", p.fallback}, {"clipped", p.clipped}};
      csv += "," + io::format_double(p.value) + "," + (p.fallback ? "1" : "0") + "," + (p.clipped ? "1" : "0");
    }
    csv += "\n";
    out.push_back(row);
  }
  io::write_file_atomic(output_path(g, cmd.out, "predictions"), g.format == "json" ? out.dump(2) + "\n" : csv);
  log << "predicted at " << query.size() << " curves\n";
}

inline void run_bench(const GlobalOptions& g, BenchCmd cmd, std::ostream& log) {
  cmd.experiment.threads = resolve_threads(g.threads);
  json doc;
  if (!cmd.n_values.empty()) {
    const auto rows = convergence_check(cmd.experiment, cmd.n_values);
    auto cfg = cmd.experiment;
    cfg.methods = {VarianceMethod::residual};
    doc = {{"config", to_json(cfg)}, {"convergence", to_json(rows)}};
    for (const auto& r : rows) log << "n = " << r.n << ": median residual MSE " << r.median_mse << "\n";
  } else {
    const auto report = run_experiment(cmd.experiment);
    doc = to_json(report);
    for (const auto& [m, v] : report.medians) log << to_string(m) << " median MSE " << v << "\n";
    log << report.failed << " failed replications, " << report.wall_seconds << " s\n";
  }
  io::write_file_atomic(g.output_dir / cmd.out, doc.dump(2) + "\n");
}

inline void run_chemo(const GlobalOptions& g, const ChemoCmd& cmd, std::ostream& log) {
  const auto report = chemo_workflow(cmd.config);
  io::write_file_atomic(g.output_dir / cmd.report, to_json(report).dump(2) + "\n");
  io::write_file_atomic(g.output_dir / cmd.plot, chemo_plot_csv(report));
  for (const auto& o : report.orders) log << "order " << o.order << ": validation MSE " << o.validation_mse << "\n";
  log << "chosen order " << report.chosen_order << "\n";
}

inline void run_smallball(const GlobalOptions& g, const SmallBallCmd& cmd, std::ostream& log) {
  const auto curves = io::read_curves_csv(cmd.curves);
  if (cmd.x_index && *cmd.x_index >= curves.size())
    throw invalid_input("--x-index " + std::to_string(*cmd.x_index) + " is out of range");
  const SemiMetricSpec spec = cmd.metric.trained_on(curves);
  const auto D = self_distance_matrix(spec, curves);

  std::vector<double> radii = cmd.radii;
  if (radii.empty()) {
    double lo = 0.0, hi = 0.0;
    for (double d : D.data())
      if (d > 0.0) {
        lo = lo == 0.0 ? d : std::min(lo, d);
        hi = std::max(hi, d);
      }
    if (hi == 0.0) throw invalid_input("all curves coincide; no radius grid to build");
    for (std::size_t k = 0; k < cmd.points; ++k)
      radii.push_back(k + 1 == cmd.points ? hi : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(cmd.points - 1));
  }
  std::sort(radii.begin(), radii.end());

  std::string csv = "h,phi\n";
  json out = json::array();
  for (double h : radii) {
    double phi = 0.0;
    if (cmd.x_index) {
      phi = small_ball_fraction(D.row(*cmd.x_index), h);
    } else {
      std::size_t inside = 0;
      for (double d : D.data()) inside += d <= h;
      phi = static_cast<double>(inside) / static_cast<double>(D.data().size());
    }
    csv += io::format_double(h) + "," + io::format_double(phi) + "\n";
    out.push_back({{"h", h}, {"phi", phi}});
  }
  io::write_file_atomic(output_path(g, cmd.out, "smallball"), g.format == "json" ? out.dump(2) + "\n" : csv);
  log << "phi(h) at " << radii.size() << " radii\n";
}

}  // namespace detail

/// Runs one subcommand; returns the process exit code.
inline int dispatch(const CliConfig& cfg, std::ostream& log = std::cerr) {
  try {
    std::visit(
        [&](const auto& cmd) {
          using T = std::decay_t<decltype(cmd)>;
          if constexpr (std::is_same_v<T, SimulateCmd>) detail::run_simulate(cfg.global, cmd, log);
          else if constexpr (std::is_same_v<T, FitCmd>) detail::run_fit(cfg.global, cmd, log);
          else if constexpr (std::is_same_v<T, PredictCmd>) detail::run_predict(cfg.global, cmd, log);
          else if constexpr (std::is_same_v<T, BenchCmd>) detail::run_bench(cfg.global, cmd, log);
          else if constexpr (std::is_same_v<T, ChemoCmd>) detail::run_chemo(cfg.global, cmd, log);
          else detail::run_smallball(cfg.global, cmd, log);
        },
        cfg.command);
  } catch (const io_error& e) {
    log << "error: " << e.what() << "\n";
    return io_failure;
  } catch (const std::filesystem::filesystem_error& e) {
    log << "error: " << e.what() << "\n";
    return io_failure;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return computation;
  }
  return ok;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& log = std::cerr) {
  CliConfig cfg;
  try {
    cfg = parse_args(argc, argv);
  } catch (const usage_error& e) {
    (e.help() ? out : log) << e.what() << "\n";
    return e.help() ? ok : usage;
  } catch (const invalid_input& e) {
    log << "error: " << e.what() << "\n";
    return usage;
  }
  return dispatch(cfg, log);
}

}  // namespace funvar::cli
