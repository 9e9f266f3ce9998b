#pragma once

#include <Eigen/Core>

#include <optional>

namespace htefuse {

enum class PenaltyFamily { Mcp, Scad, AdaptiveLasso };

struct PenaltySpec {
  PenaltyFamily family = PenaltyFamily::Mcp;
  double gamma = 3.0;  // > 1 for MCP, > 2 for SCAD; unused by adaptive lasso
  // Per-column multipliers on lambda (adaptive lasso weights, or general
  // penalty factors). Length must equal the column count of the problem
  // they are used with; entries for unpenalized columns are ignored.
  std::optional<Eigen::VectorXd> adaptive_weights;
  // Penalize weighted-standardized coefficients instead of data-scale ones.
  bool standardized_scale = false;

  static PenaltySpec mcp(double gamma = 3.0) { return {PenaltyFamily::Mcp, gamma, {}}; }
  static PenaltySpec scad(double gamma = 3.7) { return {PenaltyFamily::Scad, gamma, {}}; }
  static PenaltySpec adaptive_lasso() { return {PenaltyFamily::AdaptiveLasso, 1.0, {}}; }

  void validate() const;
};

struct PenaltyValue {
  double value = 0.0;
  double derivative = 0.0;
};

/// rho(t; lambda) and d rho/dt for t >= 0.
/// MCP:  lambda * integral_0^t (1 - x/(gamma*lambda))_+ dx.
/// SCAD: the usual three-piece form; adaptive lasso is plain lambda*t
/// (per-coordinate weights are folded into lambda by the caller).
PenaltyValue rho_eval(double t, double lambda, const PenaltySpec& spec);

/// Global minimizer of  0.5*v*theta^2 - z*theta + rho(|theta|; lambda).
/// Requires v > 1/gamma (MCP) or v > 1/(gamma-1) (SCAD) so every piece of
/// the scalar objective is convex.
double coordinate_update(double z, double v, double lambda, const PenaltySpec& spec);

namespace detail {
/// Same minimizer without the curvature precondition (boundary candidates
/// cover the concave pieces); the solver uses this on unstandardized scales.
double coordinate_update_any_v(double z, double v, double lambda, const PenaltySpec& spec);
}  // namespace detail

}  // namespace htefuse
