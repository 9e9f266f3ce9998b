#include "htefuse/estimators.hpp"

#include <algorithm>
#include <stdexcept>

namespace htefuse {

std::string to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::Rl: return "rl";
    case EstimatorKind::Oa: return "oa";
    case EstimatorKind::Gm0: return "gm0";
    case EstimatorKind::Gm1: return "gm1";
    case EstimatorKind::Gm01: return "gm01";
    case EstimatorKind::Meta: return "meta";
    case EstimatorKind::Rct: return "rct";
    case EstimatorKind::Naive: return "naive";
  }
  return "?";
}

EstimatorKind estimator_from_string(const std::string& name) {
  if (name == "rl") return EstimatorKind::Rl;
  if (name == "oa") return EstimatorKind::Oa;
  if (name == "gm0") return EstimatorKind::Gm0;
  if (name == "gm1") return EstimatorKind::Gm1;
  if (name == "gm01") return EstimatorKind::Gm01;
  if (name == "meta") return EstimatorKind::Meta;
  if (name == "rct") return EstimatorKind::Rct;
  if (name == "naive") return EstimatorKind::Naive;
  throw std::invalid_argument("unknown estimator: " + name);
}

std::vector<int> estimator_rows(EstimatorKind kind, const Dataset& d,
                                const std::vector<int>& candidates) {
  std::vector<int> rows;
  rows.reserve(candidates.size());
  for (int r : candidates) {
    switch (kind) {
      case EstimatorKind::Gm0:
        if (d.treatment()[r] == 1) rows.push_back(r);
        break;
      case EstimatorKind::Gm1:
        if (d.treatment()[r] == 0) rows.push_back(r);
        break;
      case EstimatorKind::Rct:
        if (d.source()[r] == 1) rows.push_back(r);
        break;
      default:
        rows.push_back(r);
    }
  }
  return rows;
}

namespace {

WeightVector subset_weights(const Dataset& d, const std::vector<int>& rows) {
  Eigen::VectorXd t(rows.size());
  Eigen::VectorXi del(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    t[i] = d.time()[rows[i]];
    del[i] = d.status()[rows[i]];
  }
  return compute_weights(t, del);
}

}  // namespace

RegressionProblem build_problem(EstimatorKind kind, const Dataset& d,
                                const std::vector<int>& rows_in, const NuisanceFit& nf,
                                bool penalize_intercepts) {
  if (kind == EstimatorKind::Meta)
    throw std::invalid_argument("meta combines GM0 and GM1 fits; it has no design of its own");
  const std::vector<int> rows = estimator_rows(kind, d, rows_in);
  if (rows.empty()) throw DataError(to_string(kind) + ": no rows available for this variant");
  const int nr = static_cast<int>(rows.size());
  const int p = d.p();
  const int block = p + 1;
  const bool residualized = kind == EstimatorKind::Rl || kind == EstimatorKind::Rct ||
                            kind == EstimatorKind::Naive;
  const int n_blocks =
      (kind == EstimatorKind::Rct || kind == EstimatorKind::Naive) ? 1 : 2;

  Eigen::VectorXd response(nr);
  Eigen::MatrixXd design(nr, block * n_blocks);
  double max_resid_treat = 0.0;
  const WeightVector w = subset_weights(d, rows);
  Eigen::VectorXd row_weight(nr);  // weight of subset row i (inverse permutation)
  for (int pos = 0; pos < nr; ++pos) row_weight[w.order[pos]] = w.weights[pos];
  for (int i = 0; i < nr; ++i) {
    const int r = rows[i];
    const double e = nf.e_hat[r];
    const double logt = d.log_time()[r];
    const int a = d.treatment()[r];
    const int s = d.source()[r];

    double mult = 1.0;
    switch (kind) {
      case EstimatorKind::Rl:
      case EstimatorKind::Rct:
      case EstimatorKind::Naive:
        response[i] = logt - nf.mu_hat[r];
        mult = a - e;
        break;
      case EstimatorKind::Oa:
        response[i] = a * (logt - nf.mu1_hat[r]) / e + nf.mu1_hat[r] -
                      (1 - a) * (logt - nf.mu0_hat[r]) / (1.0 - e) - nf.mu0_hat[r];
        break;
      case EstimatorKind::Gm0:
        response[i] = logt - nf.mu0_hat[r];
        break;
      case EstimatorKind::Gm1:
        response[i] = nf.mu1_hat[r] - logt;
        break;
      case EstimatorKind::Gm01:
        response[i] = nf.mu1_hat[r] - nf.mu0_hat[r];
        break;
      case EstimatorKind::Meta:
        break;  // unreachable
    }
    design(i, 0) = mult;
    design.row(i).segment(1, p) = mult * d.x().row(r);
    if (n_blocks == 2) {
      const double ms = mult * (1 - s);
      design(i, block) = ms;
      design.row(i).segment(block + 1, p) = ms * d.x().row(r);
    }
    if (residualized && row_weight[i] != 0.0)
      max_resid_treat = std::max(max_resid_treat, std::abs(mult));
  }
  if (residualized && w.weights.sum() > 0.0 && max_resid_treat == 0.0)
    throw std::invalid_argument("degenerate residual treatment");

  return make_problem(response, design, w, block, n_blocks, penalize_intercepts, rows);
}

}  // namespace htefuse
