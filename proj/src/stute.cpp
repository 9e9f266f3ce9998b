#include "htefuse/stute.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace htefuse {

namespace {

void check_inputs(const Eigen::VectorXd& times, const Eigen::VectorXi& flags) {
  if (times.size() == 0) throw std::invalid_argument("empty time vector");
  if (times.size() != flags.size())
    throw std::invalid_argument("times and indicator flags differ in length");
  for (Eigen::Index i = 0; i < times.size(); ++i) {
    if (!(times[i] > 0.0) || !std::isfinite(times[i]))
      throw std::invalid_argument("times must be positive and finite");
  }
}

// Events precede censorings at tied times; remaining ties keep input order.
std::vector<int> sorted_order(const Eigen::VectorXd& times, const Eigen::VectorXi& deltas) {
  std::vector<int> order(times.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (times[a] != times[b]) return times[a] < times[b];
    return deltas[a] > deltas[b];
  });
  return order;
}

}  // namespace

WeightVector compute_weights(const Eigen::VectorXd& times, const Eigen::VectorXi& deltas,
                             bool redistribute_to_last) {
  check_inputs(times, deltas);
  const int n = static_cast<int>(times.size());
  WeightVector wv;
  wv.order = sorted_order(times, deltas);
  wv.weights.resize(n);
  double prod = 1.0;  // prod_{j<i} ((n-j)/(n-j+1))^{d_(j)}
  for (int i = 1; i <= n; ++i) {
    const int di = deltas[wv.order[i - 1]];
    wv.weights[i - 1] = di ? prod / static_cast<double>(n - i + 1) : 0.0;
    if (di) prod *= static_cast<double>(n - i) / static_cast<double>(n - i + 1);
  }
  if (redistribute_to_last) {
    const double leftover = 1.0 - wv.weights.sum();
    if (leftover > 0.0) wv.weights[n - 1] += leftover;
  }
  return wv;
}

double StepFunction::operator()(double t) const {
  // value of the right-continuous step function at t
  auto it = std::upper_bound(jump_times.begin(), jump_times.end(), t);
  if (it == jump_times.begin()) return 1.0;
  return values[static_cast<std::size_t>(it - jump_times.begin()) - 1];
}

double StepFunction::jump_at(double t) const {
  auto it = std::lower_bound(jump_times.begin(), jump_times.end(), t);
  if (it == jump_times.end() || *it != t) return 0.0;
  const std::size_t k = static_cast<std::size_t>(it - jump_times.begin());
  const double before = k == 0 ? 1.0 : values[k - 1];
  return before - values[k];
}

StepFunction km_estimator(const Eigen::VectorXd& times, const Eigen::VectorXi& event_flags) {
  check_inputs(times, event_flags);
  const int n = static_cast<int>(times.size());
  const auto order = sorted_order(times, event_flags);

  StepFunction sf;
  double surv = 1.0;
  int i = 0;
  int at_risk = n;
  while (i < n) {
    const double t = times[order[i]];
    int events = 0, total = 0;
    while (i < n && times[order[i]] == t) {
      events += event_flags[order[i]];
      ++total;
      ++i;
    }
    if (events > 0) {
      surv *= 1.0 - static_cast<double>(events) / static_cast<double>(at_risk);
      sf.jump_times.push_back(t);
      sf.values.push_back(surv);
    }
    at_risk -= total;
  }
  return sf;
}

}  // namespace htefuse
