#include "htefuse/penalty.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace htefuse {

void PenaltySpec::validate() const {
  if (family == PenaltyFamily::Mcp && !(gamma > 1.0))
    throw std::invalid_argument("MCP requires gamma > 1");
  if (family == PenaltyFamily::Scad && !(gamma > 2.0))
    throw std::invalid_argument("SCAD requires gamma > 2");
  if (adaptive_weights && (adaptive_weights->array() < 0.0).any())
    throw std::invalid_argument("adaptive weights must be nonnegative");
}

PenaltyValue rho_eval(double t, double lambda, const PenaltySpec& spec) {
  if (t < 0.0) throw std::invalid_argument("rho_eval: t must be nonnegative");
  if (!(lambda > 0.0)) throw std::invalid_argument("rho_eval: lambda must be positive");
  const double g = spec.gamma;
  switch (spec.family) {
    case PenaltyFamily::Mcp:
      if (t <= g * lambda) return {lambda * t - t * t / (2.0 * g), lambda - t / g};
      return {g * lambda * lambda / 2.0, 0.0};
    case PenaltyFamily::Scad:
      if (t <= lambda) return {lambda * t, lambda};
      if (t <= g * lambda)
        return {(2.0 * g * lambda * t - t * t - lambda * lambda) / (2.0 * (g - 1.0)),
                (g * lambda - t) / (g - 1.0)};
      return {lambda * lambda * (g + 1.0) / 2.0, 0.0};
    case PenaltyFamily::AdaptiveLasso:
      return {lambda * t, lambda};
  }
  return {};
}

namespace {

double scalar_objective(double theta, double z, double v, double lambda,
                        const PenaltySpec& spec) {
  return 0.5 * v * theta * theta - z * theta + rho_eval(std::abs(theta), lambda, spec).value;
}

}  // namespace

namespace detail {

// Exact minimizer by candidate enumeration: per-piece stationary points
// clamped into their pieces plus the piece boundaries. Evaluating the true
// objective at each candidate makes this correct even when a piece is
// concave (v below the usual convexity bound), where the minimum sits at a
// boundary.
double coordinate_update_any_v(double z, double v, double lambda, const PenaltySpec& spec) {
  if (!(v > 0.0)) throw std::invalid_argument("coordinate_update: v must be positive");
  if (lambda < 0.0) throw std::invalid_argument("coordinate_update: lambda must be nonnegative");
  if (lambda == 0.0) return z / v;
  const double g = spec.gamma;
  const double az = std::abs(z);
  const double sign = z < 0.0 ? -1.0 : 1.0;

  double cand[5];
  int nc = 0;
  cand[nc++] = 0.0;
  switch (spec.family) {
    case PenaltyFamily::Mcp: {
      const double knot = g * lambda;
      const double curv = v - 1.0 / g;
      if (curv > 0.0) cand[nc++] = std::clamp((az - lambda) / curv, 0.0, knot);
      cand[nc++] = std::max(az / v, knot);
      cand[nc++] = knot;
      break;
    }
    case PenaltyFamily::Scad: {
      const double curv = v - 1.0 / (g - 1.0);
      cand[nc++] = std::clamp((az - lambda) / v, 0.0, lambda);
      if (curv > 0.0)
        cand[nc++] = std::clamp((az - g * lambda / (g - 1.0)) / curv, lambda, g * lambda);
      cand[nc++] = std::max(az / v, g * lambda);
      cand[nc++] = lambda;
      break;
    }
    case PenaltyFamily::AdaptiveLasso:
      cand[nc++] = std::max(0.0, (az - lambda) / v);
      break;
  }

  double best = 0.0, best_obj = scalar_objective(0.0, az, v, lambda, spec);
  for (int i = 1; i < nc; ++i) {
    const double obj = scalar_objective(cand[i], az, v, lambda, spec);
    if (obj < best_obj) {
      best_obj = obj;
      best = cand[i];
    }
  }
  return sign * best;
}

}  // namespace detail

double coordinate_update(double z, double v, double lambda, const PenaltySpec& spec) {
  if (spec.family == PenaltyFamily::Mcp && !(v > 1.0 / spec.gamma))
    throw std::invalid_argument("coordinate_update: MCP requires v > 1/gamma");
  if (spec.family == PenaltyFamily::Scad && !(v > 1.0 / (spec.gamma - 1.0)))
    throw std::invalid_argument("coordinate_update: SCAD requires v > 1/(gamma-1)");
  return detail::coordinate_update_any_v(z, v, lambda, spec);
}

}  // namespace htefuse
