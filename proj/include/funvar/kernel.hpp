#pragma once

/// Asymmetric kernels supported on [0, 1] and Nadaraya-Watson weights.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "funvar/errors.hpp"

namespace funvar {

enum class KernelKind { quadratic, uniform, triangle };

inline std::string_view to_string(KernelKind k) {
  switch (k) {
    case KernelKind::quadratic: return "quadratic";
    case KernelKind::uniform: return "uniform";
    case KernelKind::triangle: return "triangle";
  }
  return "?";
}

inline KernelKind parse_kernel_kind(std::string_view s) {
  if (s == "quadratic") return KernelKind::quadratic;
  if (s == "uniform") return KernelKind::uniform;
  if (s == "triangle") return KernelKind::triangle;
  throw invalid_input("unknown kernel '" + std::string(s) + "' (valid: quadratic, uniform, triangle)");
}

/// K(u) for u in [0, 1], zero outside. `scale` multiplies K; NW output does
/// not depend on it.
struct KernelSpec {
  KernelKind kind = KernelKind::quadratic;
  double scale = 1.0;

  double operator()(double u) const noexcept {
    if (!(u >= 0.0) || u > 1.0) return 0.0;
    switch (kind) {
      case KernelKind::quadratic: return scale * (1.0 - u * u);
      case KernelKind::uniform: return scale;
      case KernelKind::triangle: return scale * (1.0 - u);
    }
    return 0.0;
  }

  friend bool operator==(const KernelSpec&, const KernelSpec&) = default;
};

inline double kernel_eval(const KernelSpec& spec, double u) { return spec(u); }

enum class EmptyNeighborhood { error, nearest_neighbor_fallback };

inline std::string_view to_string(EmptyNeighborhood p) {
  return p == EmptyNeighborhood::error ? "error" : "nearest_neighbor_fallback";
}

inline EmptyNeighborhood parse_empty_neighborhood(std::string_view s) {
  if (s == "error") return EmptyNeighborhood::error;
  if (s == "nearest_neighbor_fallback" || s == "fallback") return EmptyNeighborhood::nearest_neighbor_fallback;
  throw invalid_input("unknown policy '" + std::string(s) + "' (valid: error, nearest_neighbor_fallback)");
}

struct WeightPolicy {
  EmptyNeighborhood empty_neighborhood = EmptyNeighborhood::nearest_neighbor_fallback;
  friend bool operator==(const WeightPolicy&, const WeightPolicy&) = default;
};

struct NwWeights {
  std::vector<double> weights;
  bool fallback = false;  ///< all mass put on the nearest point
};

/// w_i = K(d_i / h) / sum_j K(d_j / h). Index `exclude`, when given, gets
/// weight 0 and is ignored by the fallback (leave-one-out).
template <typename Kernel>
NwWeights nw_weights(std::span<const double> distances, double h, const Kernel& kernel,
                     WeightPolicy policy = {}, std::optional<std::size_t> exclude = std::nullopt) {
  const std::size_t n = distances.size();
  if (n == 0) throw invalid_input("nw_weights needs at least one distance");
  if (!(h > 0.0) || !std::isfinite(h)) throw invalid_input("bandwidth must be positive and finite");

  NwWeights out{std::vector<double>(n, 0.0), false};
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = distances[i];
    if (!std::isfinite(d) || d < 0.0) throw invalid_input("distance must be finite and nonnegative");
    if (exclude && *exclude == i) continue;
    out.weights[i] = kernel(d / h);
    total += out.weights[i];
  }

  if (total > 0.0) {
    for (double& w : out.weights) w /= total;
    return out;
  }

  if (policy.empty_neighborhood == EmptyNeighborhood::error)
    throw empty_neighborhood("no training point within bandwidth " + std::to_string(h));

  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < n; ++i) {
    if (exclude && *exclude == i) continue;
    if (!best || distances[i] < distances[*best]) best = i;
  }
  if (!best) throw empty_neighborhood("no point available for the nearest-neighbour fallback");
  std::fill(out.weights.begin(), out.weights.end(), 0.0);
  out.weights[*best] = 1.0;
  out.fallback = true;
  return out;
}

/// sum_i w_i v_i, accumulated as offsets from the first weighted value so
/// that constant values are reproduced exactly.
inline double nw_estimate(std::span<const double> weights, std::span<const double> values) {
  if (weights.size() != values.size())
    throw invalid_input("weights and values differ in length (" + std::to_string(weights.size()) +
                        " vs " + std::to_string(values.size()) + ")");
  std::size_t first = 0;
  while (first < weights.size() && weights[first] == 0.0) ++first;
  if (first == weights.size()) return 0.0;
  const double anchor = values[first];
  double s = 0.0;
  for (std::size_t i = first; i < weights.size(); ++i) s += weights[i] * (values[i] - anchor);
  return anchor + s;
}

}  // namespace funvar
