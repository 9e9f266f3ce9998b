#pragma once

#include "htefuse/dataset.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace htefuse {

enum class PropensityMode { KnownConstant, PenalizedLogistic };

struct NuisanceConfig {
  int k_folds = 2;
  PropensityMode propensity_mode = PropensityMode::PenalizedLogistic;
  // When provided, the corresponding source stratum uses the constant
  // (e.g. the RCT randomization probability) even in estimation mode.
  std::optional<double> known_e1;
  std::optional<double> known_e0;
  std::vector<double> ridge_grid = default_ridge_grid();
  double clip = 0.01;
  bool interact_source = true;  // add S*X terms to the mean basis
  // Compose mu_hat as e*mu1 + (1-e)*mu0 from the arm fits instead of one
  // direct regression: conditioning on the arm keeps the mean linear in the
  // basis even when the propensity varies with X.
  bool mu_tower = true;

  static std::vector<double> default_ridge_grid() {
    return {1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0};
  }
  void validate() const;
};

/// Weighted-ridge regression of log T on (1, X, S[, S*X]).
struct MeanModel {
  Eigen::VectorXd coef;  // basis order: intercept, X..., S[, S*X...]
  bool interact_source = false;

  double predict(const Eigen::Ref<const Eigen::RowVectorXd>& x, int s) const;
};

/// Per-source-stratum propensity: known constant or ridge logistic in (1, X).
struct PropensityModel {
  std::array<std::optional<double>, 2> constant;           // by source
  std::array<std::optional<Eigen::VectorXd>, 2> logit_coef;  // by source
  double clip = 0.01;

  double predict(const Eigen::Ref<const Eigen::RowVectorXd>& x, int s) const;
};

/// Out-of-fold nuisance predictions; predictions for row i never come from
/// a model trained on row i's fold.
struct NuisanceFit {
  Eigen::VectorXd e_hat;    // in [clip, 1-clip]
  Eigen::VectorXd mu_hat;   // E[log T | X, S]
  Eigen::VectorXd mu0_hat;  // arm-0 conditional mean
  Eigen::VectorXd mu1_hat;  // arm-1 conditional mean
  FoldAssignment folds;
  NuisanceConfig config;

  std::string digest() const;
};

PropensityModel fit_propensity(const Dataset& d, const std::vector<int>& train,
                               const NuisanceConfig& cfg, std::uint64_t seed = 0);

MeanModel fit_conditional_mean(const Dataset& d, const std::vector<int>& train,
                               const NuisanceConfig& cfg, std::uint64_t seed = 0);

/// Same weighted-ridge fit restricted to one treatment arm, with Stute
/// weights recomputed on that arm's subsample.
MeanModel fit_arm_mean(const Dataset& d, const std::vector<int>& train, int arm,
                       const NuisanceConfig& cfg, std::uint64_t seed = 0);

NuisanceFit cross_fit(const Dataset& d, const NuisanceConfig& cfg, std::uint64_t seed);

}  // namespace htefuse
