#pragma once

/// Simulation designs with known mean and variance functionals, all on a
/// uniform grid over [-1, 1]:
///   ex1: Brownian paths, m = 0,                 v = int |cos x(t)| dt
///   ex2: Brownian paths, m = int t x(t) dt,     v = int |t| x(t)^2 dt
///   ex3: x(t) = sin(w t) + (a + 2 pi) t + b,
///        m = int |x'(t)| (1 - cos(pi t)) dt,    v = int |x'(t)| (1 + cos(pi t)) dt
/// with Y = m + sqrt(v) eps, eps standard Gaussian.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "funvar/curves.hpp"
#include "funvar/errors.hpp"

namespace funvar {

/// Reproducible random stream keyed by (seed, stream_id). Uniforms and
/// Gaussians are derived from raw mt19937_64 output, so the sequence does
/// not depend on the standard library's distribution implementations.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id) : seed_(seed), stream_(stream_id) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream_id), static_cast<std::uint32_t>(stream_id >> 32),
                      0x66756e76u};
    engine_.seed(seq);
  }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_; }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard Gaussian by the Box-Muller transform.
  double normal() {
    if (spare_) {
      const double z = *spare_;
      spare_.reset();
      return z;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    return r * std::cos(theta);
  }

 private:
  std::uint64_t seed_, stream_;
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

enum class Example { ex1, ex2, ex3 };

inline std::string_view to_string(Example e) {
  switch (e) {
    case Example::ex1: return "ex1";
    case Example::ex2: return "ex2";
    case Example::ex3: return "ex3";
  }
  return "?";
}

inline Example parse_example(std::string_view s) {
  if (s == "ex1") return Example::ex1;
  if (s == "ex2") return Example::ex2;
  if (s == "ex3") return Example::ex3;
  throw invalid_input("unknown example '" + std::string(s) + "' (valid: ex1, ex2, ex3)");
}

/// Names of the per-curve generator parameters of an example.
inline std::vector<std::string> param_names(Example e) {
  if (e == Example::ex3) return {"omega", "a", "b"};
  return {"x0"};
}

inline GridPtr simulation_grid(std::size_t grid_size) { return make_grid(Grid::uniform(-1.0, 1.0, grid_size)); }

/// Brownian paths started at t_1 from Uniform(-1, 1). Increments have
/// variance `variance_scale` times the elapsed time.
inline CurveSet gen_brownian_curves(std::size_t n, std::size_t grid_size, RngStream& rng,
                                    double variance_scale = 1.0) {
  if (!(variance_scale > 0.0)) throw invalid_input("Brownian variance scale must be positive");
  if (n == 0) throw invalid_input("need at least one curve");
  const GridPtr grid = simulation_grid(grid_size);
  std::vector<Curve> curves;
  curves.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> x(grid_size);
    x[0] = rng.uniform(-1.0, 1.0);
    for (std::size_t k = 1; k < grid_size; ++k)
      x[k] = x[k - 1] + std::sqrt(variance_scale * ((*grid)[k] - (*grid)[k - 1])) * rng.normal();
    curves.emplace_back(grid, std::move(x));
  }
  return CurveSet(grid, std::move(curves));
}

struct SinParams {
  double omega = 0.0, a = 0.0, b = 0.0;
};

/// x(t) = sin(omega t) + (a + 2 pi) t + b and its analytic derivative.
inline std::pair<Curve, Curve> sin_curve(const GridPtr& grid, SinParams p) {
  std::vector<double> x(grid->size()), dx(grid->size());
  for (std::size_t k = 0; k < grid->size(); ++k) {
    const double t = (*grid)[k];
    x[k] = std::sin(p.omega * t) + (p.a + 2.0 * std::numbers::pi) * t + p.b;
    dx[k] = p.omega * std::cos(p.omega * t) + (p.a + 2.0 * std::numbers::pi);
  }
  return {Curve(grid, std::move(x)), Curve(grid, std::move(dx))};
}

struct SinCurves {
  CurveSet curves;
  CurveSet derivs;
  std::vector<SinParams> params;
};

inline SinCurves gen_sin_curves(std::size_t n, std::size_t grid_size, RngStream& rng) {
  if (n == 0) throw invalid_input("need at least one curve");
  const GridPtr grid = simulation_grid(grid_size);
  std::vector<Curve> xs, dxs;
  std::vector<SinParams> params;
  for (std::size_t i = 0; i < n; ++i) {
    SinParams p;
    p.omega = rng.uniform(0.0, 2.0 * std::numbers::pi);
    p.a = rng.uniform();
    p.b = rng.uniform();
    auto [x, dx] = sin_curve(grid, p);
    xs.push_back(std::move(x));
    dxs.push_back(std::move(dx));
    params.push_back(p);
  }
  return {CurveSet(grid, std::move(xs)), CurveSet(grid, std::move(dxs)), std::move(params)};
}

struct Truth {
  double m = 0.0;
  double v = 0.0;
};

inline Truth true_functionals(Example example, const Curve& x, const Curve* deriv = nullptr) {
  const Grid& g = *x.grid();
  std::vector<double> fm(g.size()), fv(g.size());
  switch (example) {
    case Example::ex1:
      for (std::size_t k = 0; k < g.size(); ++k) fv[k] = std::abs(std::cos(x[k]));
      return {0.0, integrate(g, fv)};
    case Example::ex2:
      for (std::size_t k = 0; k < g.size(); ++k) {
        fm[k] = g[k] * x[k];
        fv[k] = std::abs(g[k]) * x[k] * x[k];
      }
      return {integrate(g, fm), integrate(g, fv)};
    case Example::ex3: {
      if (!deriv) throw invalid_input("ex3 functionals need the curve derivative");
      if (!same_grid(deriv->grid(), x.grid())) throw invalid_input("derivative is on a different grid");
      for (std::size_t k = 0; k < g.size(); ++k) {
        const double c = std::cos(std::numbers::pi * g[k]);
        fm[k] = std::abs((*deriv)[k]) * (1.0 - c);
        fv[k] = std::abs((*deriv)[k]) * (1.0 + c);
      }
      return {integrate(g, fm), integrate(g, fv)};
    }
  }
  return {};
}

struct SimSpec {
  Example example = Example::ex1;
  std::size_t n = 200;
  std::size_t grid_size = 101;
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;
  double brownian_variance_scale = 1.0;  ///< ex1/ex2 increment variance per unit time
};

struct SimulatedDataset {
  Example example = Example::ex1;
  CurveSet curves;
  std::optional<CurveSet> derivs;  ///< analytic x' (ex3)
  std::vector<double> y;
  std::vector<double> true_m;
  std::vector<double> true_v;
  std::vector<std::vector<double>> params;  ///< per curve, see param_names()

  friend bool operator==(const SimulatedDataset&, const SimulatedDataset&) = default;
};

/// Responses for given curves: Y_i = m_i + sqrt(v_i) eps_i, eps drawn from `rng`.
inline SimulatedDataset make_dataset(Example example, CurveSet curves, std::optional<CurveSet> derivs,
                                     std::vector<std::vector<double>> params, RngStream& rng) {
  if (example == Example::ex3 && !derivs) throw invalid_input("ex3 datasets need analytic derivatives");
  SimulatedDataset ds{example, std::move(curves), std::move(derivs), {}, {}, {}, std::move(params)};
  const std::size_t n = ds.curves.size();
  ds.y.reserve(n);
  ds.true_m.reserve(n);
  ds.true_v.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Truth t = true_functionals(example, ds.curves[i], ds.derivs ? &(*ds.derivs)[i] : nullptr);
    ds.true_m.push_back(t.m);
    ds.true_v.push_back(t.v);
  }
  for (std::size_t i = 0; i < n; ++i) ds.y.push_back(ds.true_m[i] + std::sqrt(ds.true_v[i]) * rng.normal());
  return ds;
}

inline SimulatedDataset gen_dataset(const SimSpec& spec) {
  if (spec.n == 0) throw invalid_input("simulation needs n >= 1");
  if (spec.grid_size < 2) throw invalid_input("simulation grid needs at least 2 points");
  RngStream rng(spec.seed, spec.stream_id);
  if (spec.example == Example::ex3) {
    auto sc = gen_sin_curves(spec.n, spec.grid_size, rng);
    std::vector<std::vector<double>> params;
    for (const auto& p : sc.params) params.push_back({p.omega, p.a, p.b});
    return make_dataset(spec.example, std::move(sc.curves), std::move(sc.derivs), std::move(params), rng);
  }
  auto curves = gen_brownian_curves(spec.n, spec.grid_size, rng, spec.brownian_variance_scale);
  std::vector<std::vector<double>> params;
  for (const auto& c : curves) params.push_back({c[0]});
  return make_dataset(spec.example, std::move(curves), std::nullopt, std::move(params), rng);
}

}  // namespace funvar
