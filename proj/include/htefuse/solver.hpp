#pragma once

#include "htefuse/dataset.hpp"
#include "htefuse/nuisance.hpp"
#include "htefuse/penalty.hpp"
#include "htefuse/stute.hpp"

#include <Eigen/Core>

#include <limits>
#include <utility>
#include <vector>

namespace htefuse {

/// Stute-ordered weighted regression problem. Columns are standardized to
/// unit weighted sum of squares for solver conditioning only; penalties act
/// on the original-scale coefficients, which is also the reporting scale.
struct RegressionProblem {
  Eigen::VectorXd response;  // log T - mu_hat, Stute order
  Eigen::MatrixXd design;    // n x m, original scale, Stute order
  Eigen::VectorXd weights;   // Stute weights, aligned
  Eigen::VectorXd col_scale; // sqrt(sum_i w_i d_ij^2); 1 for inactive columns
  int block = 0;             // columns per coefficient block (p + 1, intercept first)
  int n_blocks = 2;          // 1 when the confounding block is absent
  std::vector<std::uint8_t> active;     // zero weighted variance -> 0 (frozen)
  std::vector<std::uint8_t> penalized;  // block intercepts -> 0 by default
  std::vector<int> rows;     // dataset row index behind each design row

  // standardized moments used by the solver
  Eigen::MatrixXd gram;  // Ds' W Ds
  Eigen::VectorXd cty;   // Ds' W y
  double yty = 0.0;      // sum w y^2

  int m() const { return block * n_blocks; }
  int n() const { return static_cast<int>(response.size()); }
  /// lambda multiplier for column j (adaptive weights), 1 otherwise.
  double lambda_factor(int j, const PenaltySpec& spec) const;
  /// converts solver coefficients to the scale the penalty acts on
  double pen_scale(int j, const PenaltySpec& spec) const {
    return spec.standardized_scale ? 1.0 : col_scale[j];
  }
};

/// Assembles a problem from already-built response/design on the raw row
/// order of `w`; rows are reordered by the Stute ordering internally.
RegressionProblem make_problem(const Eigen::VectorXd& response, const Eigen::MatrixXd& design,
                               const WeightVector& w, int block, int n_blocks,
                               bool penalize_intercepts = false,
                               std::vector<int> row_ids = {});

/// Robinson-residualized design for the main estimator:
/// response log T - mu_hat, row j of the design (A - e_hat) * (X~, (1-S) X~).
RegressionProblem assemble_design(const Dataset& d, const NuisanceFit& nf, const WeightVector& w,
                                  bool penalize_intercepts = false);

struct Coefficients {
  Eigen::VectorXd alpha;  // block 0 on the original scale; [0] is the intercept
  Eigen::VectorXd beta;   // block 1; empty when n_blocks == 1
  double objective = std::numeric_limits<double>::quiet_NaN();  // weighted RSS + penalty
  double rss = std::numeric_limits<double>::quiet_NaN();        // weighted RSS alone
  int iterations = 0;
  bool converged = false;
  bool objective_monotone = true;  // nonincreasing across full cycles
  double kkt = std::numeric_limits<double>::quiet_NaN();

  int df() const;
  Eigen::VectorXd stacked() const;  // (alpha; beta)
};

/// Cyclic coordinate descent with exact per-coordinate minimization;
/// lambda1 penalizes block 0, lambda2 block 1 (intercepts exempt unless
/// toggled at assembly). Stops when the largest standardized coefficient
/// change falls below `tol` and the stationarity residual is small.
Coefficients coordinate_descent(const RegressionProblem& prob, double lambda1, double lambda2,
                                const PenaltySpec& spec, const Coefficients* init = nullptr,
                                double tol = 1e-7, int max_iter = 10000);

struct PathResult {
  std::vector<std::pair<double, double>> grid;  // (lambda1, lambda2), lambda1-major
  std::vector<Coefficients> solutions;
  std::vector<int> df;
  std::vector<int> warm_from;  // index of the warm-start source, -1 for cold

  int cell(int i1, int i2, int n2) const { return i1 * n2 + i2; }
};

/// Full product grid. Every cell is solved from both neighbor warm starts
/// (lambda1 and lambda2 predecessor) and keeps the lower objective;
/// warm_from records the winning chain.
PathResult solution_path(const RegressionProblem& prob, const std::vector<double>& grid1,
                         const std::vector<double>& grid2, const PenaltySpec& spec,
                         double tol = 1e-7, int max_iter = 10000);

struct KktReport {
  double max_violation = 0.0;
  int worst_column = -1;
};

/// Stationarity check of the penalized objective at `c`:
/// active coordinates must satisfy the gradient + rho' sign condition,
/// inactive penalized ones |gradient| <= rho'(0+).
KktReport kkt_check(const RegressionProblem& prob, const Coefficients& c, double lambda1,
                    double lambda2, const PenaltySpec& spec);

/// max |gradient at 0| over the penalized active columns of one block,
/// deflated by adaptive weights when present.
double lambda_max(const RegressionProblem& prob, int block_index, const PenaltySpec& spec);

std::vector<double> log_grid(double max_value, double min_ratio, int count);

/// Default 20-point log-spaced grids per block, lambda_min = 1e-3 lambda_max.
/// A block with no penalized active column gets the single value 0.
std::pair<std::vector<double>, std::vector<double>> default_grids(const RegressionProblem& prob,
                                                                  const PenaltySpec& spec,
                                                                  int count = 20,
                                                                  double min_ratio = 1e-3);

}  // namespace htefuse
