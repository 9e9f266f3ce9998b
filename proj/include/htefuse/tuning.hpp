#pragma once

#include "htefuse/estimators.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace htefuse {

enum class TuningMethod { Cv, Bic };

std::string to_string(TuningMethod m);
TuningMethod tuning_from_string(const std::string& name);

struct TuningResult {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  int index1 = 0;
  int index2 = 0;
  std::vector<double> grid1, grid2;
  Eigen::MatrixXd criterion;  // grid1.size() x grid2.size()
  double band = 0.0;          // tolerance used when resolving near-ties
  TuningMethod method = TuningMethod::Cv;
  int warnings = 0;  // e.g. all-censored validation folds
};

/// K-fold cross-validation over the (lambda1, lambda2) grid. Per fold the
/// Stute weights are recomputed on the training subsample, and the held-out
/// error is the validation subsample's own Stute-weighted squared residual.
/// Ties resolve toward the larger (sparser) pair; `se_band` widens the tie
/// tolerance to that multiple of the fold-to-fold standard error of the
/// paired criterion differences (a one-standard-error-style rule).
/// When `nested_nuisance` is given, each fold refits the nuisance models on
/// its training rows so the held-out error is nuisance-out-of-sample too;
/// otherwise the shared cross-fitted predictions in `nf` are used.
TuningResult cv_select(const Dataset& d, const NuisanceFit& nf, EstimatorKind kind,
                       const std::vector<double>& grid1, const std::vector<double>& grid2, int k,
                       std::uint64_t seed, const PenaltySpec& spec,
                       bool penalize_intercepts = false, double se_band = 0.0, int repeats = 1,
                       const NuisanceConfig* nested_nuisance = nullptr);

/// BIC(l1,l2) = n_eff log(weighted RSS / sum w) + log(n_eff) df over a
/// solved path, n_eff = number of positive-weight rows.
TuningResult bic_select(const RegressionProblem& prob, const PathResult& path);

}  // namespace htefuse
