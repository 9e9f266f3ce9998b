#pragma once

#include "htefuse/tuning.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace htefuse {

struct FitOptions {
  PenaltySpec penalty{};
  TuningMethod tuning = TuningMethod::Cv;
  int cv_folds = 5;
  double cv_se_band = 2.0;      // near-tie tolerance toward sparser; 0 = plain minimizer
  int cv_repeats = 3;           // fold splits averaged into the criterion
  bool cv_nested_nuisance = false;  // refit nuisances inside each tuning fold
  int grid_size = 20;
  double grid_min_ratio = 1e-3;
  bool penalize_intercepts = false;
  bool verdict_counts_intercept = false;
};

struct FitResult {
  EstimatorKind kind = EstimatorKind::Rl;
  Coefficients coefficients;
  std::vector<int> support_alpha;  // covariate indices (0-based over p) with nonzero HTE effect
  std::vector<int> support_beta;   // nonzero confounding-block covariates
  bool confounded = false;
  TuningResult tuning;
  std::string nuisance_digest;
  int n_used = 0;  // fitted rows (meta combination weights)
};

/// Tune on the given cross-fitted nuisances and solve the warm-started path
/// on the full problem; the estimate is the path solution at the selected
/// (lambda1, lambda2).
FitResult fit_with_nuisance(EstimatorKind kind, const Dataset& d, const NuisanceFit& nf,
                            const FitOptions& opts, std::uint64_t seed);

struct PipelineConfig {
  EstimatorKind kind = EstimatorKind::Rl;
  FitOptions fit{};
  NuisanceConfig nuisance{};
  bool retune_bootstrap = false;  // re-select lambdas inside each replicate
};

/// RCT-only analysis defaults: the source is constant there, so the
/// interacted basis only duplicates columns, and the plain single-regression
/// conditional mean with a two-fold split is the standard configuration.
NuisanceConfig rct_pipeline_nuisance(NuisanceConfig base);

/// Cross-fit nuisances, tune, fit. Rct runs self-contained on the S=1 rows.
FitResult fit_pipeline(const Dataset& d, const PipelineConfig& pc, std::uint64_t seed);

struct BootstrapResult {
  int n_replicates = 0;
  double level = 0.95;
  Eigen::VectorXd se;        // per coordinate, (alpha; beta) layout
  Eigen::VectorXd ci_lower;
  Eigen::VectorXd ci_upper;
  Eigen::MatrixXd replicate_matrix;  // B x m
  int attempts = 0;
  int failures = 0;
};

/// Nonparametric 0.632 bootstrap: each replicate draws round(0.632 n) rows
/// without replacement, stratified by source, and reruns the full pipeline
/// at the full-data lambdas (or retunes when configured). The point estimate
/// stays the full-data fit; replicates only supply dispersion.
BootstrapResult bootstrap_se(const Dataset& d, const PipelineConfig& pc, int B, double level,
                             std::uint64_t seed, const FitResult* point = nullptr);

enum class ConfoundingVerdict { Confounded, NotConfounded };

ConfoundingVerdict detect_confounding(const FitResult& fit);

double normal_quantile(double prob);

}  // namespace htefuse
