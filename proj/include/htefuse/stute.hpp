#pragma once

#include <Eigen/Core>

#include <vector>

namespace htefuse {

/// Kaplan-Meier-derived sample weights attached to the time-sorted ordering.
/// Ties sort events before censorings (then by original index), so each
/// uncensored weight matches the product-limit jump at its order statistic.
struct WeightVector {
  std::vector<int> order;   // permutation: order[i] = original index of the i-th sorted row
  Eigen::VectorXd weights;  // aligned with `order`

  double total_mass() const { return weights.sum(); }
};

/// Weights making the squared-error loss unbiased under right censoring:
///   w_1 = d_(1)/n,  w_i = d_(i)/(n-i+1) * prod_{j<i} ((n-j)/(n-j+1))^{d_(j)}.
/// When the largest observation is censored the leftover mass stays
/// unassigned unless `redistribute_to_last` is set.
WeightVector compute_weights(const Eigen::VectorXd& times, const Eigen::VectorXi& deltas,
                             bool redistribute_to_last = false);

/// Right-continuous step function; starts at 1 before the first jump.
struct StepFunction {
  std::vector<double> jump_times;  // strictly increasing
  std::vector<double> values;      // value on [jump_times[i], jump_times[i+1])

  double operator()(double t) const;
  /// Drop of the function exactly at time t (0 when t is not a jump time).
  double jump_at(double t) const;
};

/// Product-limit (Kaplan-Meier) survival estimate of the distribution whose
/// events are flagged 1; the complementary flags give the censoring law.
StepFunction km_estimator(const Eigen::VectorXd& times, const Eigen::VectorXi& event_flags);

}  // namespace htefuse
