#include "htefuse/solver.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace htefuse {

double RegressionProblem::lambda_factor(int j, const PenaltySpec& spec) const {
  if (!spec.adaptive_weights) return 1.0;
  if (spec.adaptive_weights->size() != m())
    throw std::invalid_argument("adaptive weights length does not match column count");
  return (*spec.adaptive_weights)[j];
}

RegressionProblem make_problem(const Eigen::VectorXd& response, const Eigen::MatrixXd& design,
                               const WeightVector& w, int block, int n_blocks,
                               bool penalize_intercepts, std::vector<int> row_ids) {
  const int n = static_cast<int>(response.size());
  const int m = static_cast<int>(design.cols());
  if (design.rows() != n || static_cast<int>(w.order.size()) != n)
    throw std::invalid_argument("make_problem: dimension mismatch");
  if (block * n_blocks != m) throw std::invalid_argument("make_problem: block layout mismatch");

  RegressionProblem prob;
  prob.block = block;
  prob.n_blocks = n_blocks;
  prob.response.resize(n);
  prob.design.resize(n, m);
  prob.weights.resize(n);
  prob.rows.resize(n);
  for (int i = 0; i < n; ++i) {
    const int r = w.order[i];
    prob.response[i] = response[r];
    prob.design.row(i) = design.row(r);
    prob.weights[i] = w.weights[i];
    prob.rows[i] = row_ids.empty() ? r : row_ids[r];
  }

  prob.active.assign(m, 0);
  prob.penalized.assign(m, 1);
  prob.col_scale = Eigen::VectorXd::Ones(m);
  const double wsum = prob.weights.sum();
  Eigen::MatrixXd ds = prob.design;
  Eigen::VectorXd sw = prob.weights.cwiseSqrt();
  ds.array().colwise() *= sw.array();
  int n_active = 0;
  for (int j = 0; j < m; ++j) {
    const double ssq = ds.col(j).squaredNorm();
    if (ssq > 1e-280) {
      prob.active[j] = 1;
      prob.col_scale[j] = std::sqrt(ssq);
      ds.col(j) /= prob.col_scale[j];
      ++n_active;
    } else {
      ds.col(j).setZero();
    }
    if (j % block == 0 && !penalize_intercepts) prob.penalized[j] = 0;
  }
  if (wsum > 0.0 && n_active == 0)
    throw std::invalid_argument("degenerate design: no active columns");

  prob.gram = ds.transpose() * ds;
  prob.cty = ds.transpose() * (sw.asDiagonal() * prob.response);
  prob.yty = (prob.weights.array() * prob.response.array().square()).sum();
  return prob;
}

RegressionProblem assemble_design(const Dataset& d, const NuisanceFit& nf, const WeightVector& w,
                                  bool penalize_intercepts) {
  const int n = d.n();
  const int p = d.p();
  if (nf.e_hat.size() != n || static_cast<int>(w.order.size()) != n)
    throw std::invalid_argument("assemble_design: nuisance/weights not built from this dataset");

  double resid_treat = 0.0;
  for (int i = 0; i < n; ++i) {
    const double r = d.treatment()[i] - nf.e_hat[i];
    resid_treat = std::max(resid_treat, w.weights[i] == 0.0 ? 0.0 : std::abs(r));
  }
  if (w.weights.sum() > 0.0 && resid_treat == 0.0)
    throw std::invalid_argument("degenerate residual treatment");

  const int block = p + 1;
  Eigen::VectorXd response(n);
  Eigen::MatrixXd design(n, 2 * block);
  for (int i = 0; i < n; ++i) {
    response[i] = d.log_time()[i] - nf.mu_hat[i];
    const double r = d.treatment()[i] - nf.e_hat[i];
    design(i, 0) = r;
    design.row(i).segment(1, p) = r * d.x().row(i);
    const double rs = r * (1 - d.source()[i]);
    design(i, block) = rs;
    design.row(i).segment(block + 1, p) = rs * d.x().row(i);
  }
  return make_problem(response, design, w, block, 2, penalize_intercepts);
}

int Coefficients::df() const {
  int count = 0;
  for (Eigen::Index j = 0; j < alpha.size(); ++j) count += alpha[j] != 0.0;
  for (Eigen::Index j = 0; j < beta.size(); ++j) count += beta[j] != 0.0;
  return count;
}

Eigen::VectorXd Coefficients::stacked() const {
  Eigen::VectorXd out(alpha.size() + beta.size());
  out.head(alpha.size()) = alpha;
  out.tail(beta.size()) = beta;
  return out;
}

namespace {

// Penalty derivative; rho'(t) with lambda_j = lambda * factor.
double rho_deriv(double t, double lambda, const PenaltySpec& spec) {
  if (lambda <= 0.0) return 0.0;
  return rho_eval(t, lambda, spec).derivative;
}

// Penalties act on the original-scale coefficients theta_j = theta_std_j / c_j.
double penalty_total(const RegressionProblem& prob, const Eigen::VectorXd& theta_std,
                     double lambda1, double lambda2, const PenaltySpec& spec) {
  double total = 0.0;
  for (int j = 0; j < prob.m(); ++j) {
    if (!prob.active[j] || !prob.penalized[j]) continue;
    const double lam = (j < prob.block ? lambda1 : lambda2) * prob.lambda_factor(j, spec);
    if (lam <= 0.0) continue;
    total += rho_eval(std::abs(theta_std[j]) / prob.pen_scale(j, spec), lam, spec).value;
  }
  return total;
}

struct KktScratch {
  double max_violation = 0.0;
  int worst = -1;
  void consider(double v, int j) {
    if (v > max_violation) {
      max_violation = v;
      worst = j;
    }
  }
};

// Stationarity residuals on the original coefficient scale from g = G theta:
// d/d theta_j of the weighted RSS is 2 (g_j - cty_j) c_j.
KktScratch kkt_from_gradient(const RegressionProblem& prob, const Eigen::VectorXd& theta_std,
                             const Eigen::VectorXd& g, double lambda1, double lambda2,
                             const PenaltySpec& spec) {
  KktScratch out;
  for (int j = 0; j < prob.m(); ++j) {
    if (!prob.active[j]) continue;
    const double grad = 2.0 * (g[j] - prob.cty[j]) * prob.pen_scale(j, spec);
    if (!prob.penalized[j]) {
      out.consider(std::abs(grad), j);
      continue;
    }
    const double lam = (j < prob.block ? lambda1 : lambda2) * prob.lambda_factor(j, spec);
    if (theta_std[j] != 0.0) {
      const double sgn = theta_std[j] > 0.0 ? 1.0 : -1.0;
      const double pen_coef = std::abs(theta_std[j]) / prob.pen_scale(j, spec);
      out.consider(std::abs(grad + sgn * rho_deriv(pen_coef, lam, spec)), j);
    } else {
      out.consider(std::max(0.0, std::abs(grad) - lam), j);
    }
  }
  return out;
}

}  // namespace

Coefficients coordinate_descent(const RegressionProblem& prob, double lambda1, double lambda2,
                                const PenaltySpec& spec, const Coefficients* init, double tol,
                                int max_iter) {
  spec.validate();
  if (lambda1 < 0.0 || lambda2 < 0.0)
    throw std::invalid_argument("coordinate_descent: negative lambda");
  const int m = prob.m();
  const int block = prob.block;

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(m);  // standardized scale
  if (init) {
    for (int j = 0; j < block; ++j) theta[j] = init->alpha[j] * prob.col_scale[j];
    if (prob.n_blocks == 2 && init->beta.size() == block)
      for (int j = 0; j < block; ++j) theta[block + j] = init->beta[j] * prob.col_scale[block + j];
  }
  for (int j = 0; j < m; ++j)
    if (!prob.active[j]) theta[j] = 0.0;

  Eigen::VectorXd g = prob.gram * theta;

  auto objective_at = [&](const Eigen::VectorXd& th, const Eigen::VectorXd& gth) {
    const double rss = prob.yty - 2.0 * prob.cty.dot(th) + th.dot(gth);
    return rss + penalty_total(prob, th, lambda1, lambda2, spec);
  };

  // One pass over `cols`; returns the largest standardized coefficient
  // change. The scalar subproblem is solved on the original coefficient
  // scale theta_raw = theta_j / c_j, where the penalty lives.
  auto sweep = [&](const std::vector<int>& cols) {
    double max_delta = 0.0;
    for (int j : cols) {
      const double zt = prob.cty[j] - g[j] + prob.gram(j, j) * theta[j];
      double updated;
      if (!prob.penalized[j]) {
        updated = zt / prob.gram(j, j);
      } else {
        const double lam = (j < block ? lambda1 : lambda2) * prob.lambda_factor(j, spec);
        const double s = prob.pen_scale(j, spec);
        const double pen_coef =
            detail::coordinate_update_any_v(2.0 * zt * s, 2.0 * prob.gram(j, j) * s * s, lam, spec);
        updated = pen_coef * s;
      }
      const double delta = updated - theta[j];
      if (delta != 0.0) {
        theta[j] = updated;
        g += prob.gram.col(j) * delta;
        max_delta = std::max(max_delta, std::abs(delta));
      }
    }
    return max_delta;
  };

  std::vector<int> all_cols, active_set;
  for (int j = 0; j < m; ++j)
    if (prob.active[j]) all_cols.push_back(j);

  Coefficients out;
  out.objective_monotone = true;
  double prev_obj = objective_at(theta, g);
  int iter = 0;
  bool converged = false;
  while (iter < max_iter) {
    const double full_delta = sweep(all_cols);
    ++iter;
    if (iter % 64 == 0) g = prob.gram * theta;  // refresh accumulated rounding

    const double obj = objective_at(theta, g);
    if (obj > prev_obj + 1e-10 * std::max(1.0, std::abs(prev_obj)))
      out.objective_monotone = false;
    prev_obj = obj;
    if (!std::isfinite(obj)) throw std::runtime_error("coordinate_descent: non-finite objective");

    if (full_delta < tol) {
      const auto kkt = kkt_from_gradient(prob, theta, g, lambda1, lambda2, spec);
      if (kkt.max_violation < 1e-7 || iter >= max_iter) {
        converged = full_delta < tol;
        break;
      }
      continue;  // polish: a few more full sweeps until stationarity is tight
    }

    // inner iterations on the current nonzero set
    active_set.clear();
    for (int j : all_cols)
      if (theta[j] != 0.0 || !prob.penalized[j]) active_set.push_back(j);
    while (iter < max_iter) {
      const double delta = sweep(active_set);
      ++iter;
      if (delta < tol) break;
    }
  }
  if (iter >= max_iter) {
    const auto kkt = kkt_from_gradient(prob, theta, g, lambda1, lambda2, spec);
    converged = kkt.max_violation < 1e-6;
  }

  out.iterations = iter;
  out.converged = converged;
  g = prob.gram * theta;
  out.rss = prob.yty - 2.0 * prob.cty.dot(theta) + theta.dot(g);
  out.objective = out.rss + penalty_total(prob, theta, lambda1, lambda2, spec);
  out.kkt = kkt_from_gradient(prob, theta, g, lambda1, lambda2, spec).max_violation;

  out.alpha.resize(block);
  for (int j = 0; j < block; ++j) out.alpha[j] = theta[j] / prob.col_scale[j];
  if (prob.n_blocks == 2) {
    out.beta.resize(block);
    for (int j = 0; j < block; ++j) out.beta[j] = theta[block + j] / prob.col_scale[block + j];
  }
  return out;
}

PathResult solution_path(const RegressionProblem& prob, const std::vector<double>& grid1,
                         const std::vector<double>& grid2, const PenaltySpec& spec, double tol,
                         int max_iter) {
  auto check_desc = [](const std::vector<double>& g) {
    if (g.empty()) throw std::invalid_argument("solution_path: empty grid");
    for (std::size_t i = 1; i < g.size(); ++i)
      if (g[i] > g[i - 1]) throw std::invalid_argument("solution_path: grid must be descending");
  };
  check_desc(grid1);
  check_desc(grid2);

  const int n1 = static_cast<int>(grid1.size());
  const int n2 = static_cast<int>(grid2.size());
  PathResult path;
  path.grid.reserve(n1 * n2);
  path.solutions.resize(n1 * n2);
  path.df.resize(n1 * n2);
  path.warm_from.assign(n1 * n2, -1);
  for (int i1 = 0; i1 < n1; ++i1)
    for (int i2 = 0; i2 < n2; ++i2) path.grid.emplace_back(grid1[i1], grid2[i2]);

  // Each cell is first solved from its lambda1/lambda2 predecessor warm
  // starts keeping the lower objective. With a nonconvex penalty the chains
  // can land in different local minima around support boundaries, so reverse
  // relaxation passes then re-solve cells from their denser neighbors until
  // no objective improves anywhere.
  for (int i1 = 0; i1 < n1; ++i1) {
    for (int i2 = 0; i2 < n2; ++i2) {
      const int cell = i1 * n2 + i2;
      const Coefficients* warm1 = nullptr;
      const Coefficients* warm2 = nullptr;
      int from1 = -1, from2 = -1;
      if (i1 > 0) {
        from1 = (i1 - 1) * n2 + i2;
        warm1 = &path.solutions[from1];
      }
      if (i2 > 0) {
        from2 = i1 * n2 + (i2 - 1);
        warm2 = &path.solutions[from2];
      }
      Coefficients best = coordinate_descent(prob, grid1[i1], grid2[i2], spec, warm1, tol, max_iter);
      path.warm_from[cell] = from1;
      if (warm2 != nullptr) {
        Coefficients alt =
            coordinate_descent(prob, grid1[i1], grid2[i2], spec, warm2, tol, max_iter);
        if (alt.objective < best.objective) {
          best = std::move(alt);
          path.warm_from[cell] = from2;
        }
      }
      path.solutions[cell] = std::move(best);
      path.df[cell] = path.solutions[cell].df();
    }
  }

  const double improve_tol = 1e-12;
  for (int pass = 0; pass < 4; ++pass) {
    bool improved = false;
    for (int i1 = n1 - 1; i1 >= 0; --i1) {
      for (int i2 = n2 - 1; i2 >= 0; --i2) {
        const int cell = i1 * n2 + i2;
        for (const int from : {i1 + 1 < n1 ? (i1 + 1) * n2 + i2 : -1,
                               i2 + 1 < n2 ? i1 * n2 + (i2 + 1) : -1}) {
          if (from < 0) continue;
          const Eigen::VectorXd diff =
              path.solutions[from].stacked() - path.solutions[cell].stacked();
          if (diff.lpNorm<Eigen::Infinity>() < 1e-10) continue;  // same basin
          Coefficients alt = coordinate_descent(prob, grid1[i1], grid2[i2], spec,
                                                &path.solutions[from], tol, max_iter);
          if (alt.objective < path.solutions[cell].objective - improve_tol) {
            path.solutions[cell] = std::move(alt);
            path.warm_from[cell] = from;
            path.df[cell] = path.solutions[cell].df();
            improved = true;
          }
        }
      }
    }
    if (!improved) break;
  }
  return path;
}

KktReport kkt_check(const RegressionProblem& prob, const Coefficients& c, double lambda1,
                    double lambda2, const PenaltySpec& spec) {
  const int m = prob.m();
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(m);
  for (int j = 0; j < prob.block; ++j) theta[j] = c.alpha[j] * prob.col_scale[j];
  if (prob.n_blocks == 2)
    for (int j = 0; j < prob.block; ++j)
      theta[prob.block + j] = c.beta[j] * prob.col_scale[prob.block + j];
  const Eigen::VectorXd g = prob.gram * theta;
  const auto s = kkt_from_gradient(prob, theta, g, lambda1, lambda2, spec);
  return {s.max_violation, s.worst};
}

namespace {

// Original-scale penalty gradients |2 D' W r| at the intercept-only fit,
// deflated by adaptive factors; zero entries for inactive/unpenalized.
Eigen::VectorXd entry_gradients(const RegressionProblem& prob, const PenaltySpec& spec) {
  std::vector<int> unpen;
  for (int j = 0; j < prob.m(); ++j)
    if (prob.active[j] && !prob.penalized[j]) unpen.push_back(j);
  Eigen::VectorXd resid_corr = prob.cty;
  if (!unpen.empty()) {
    Eigen::MatrixXd guu(unpen.size(), unpen.size());
    Eigen::VectorXd cu(unpen.size());
    for (std::size_t a = 0; a < unpen.size(); ++a) {
      cu[a] = prob.cty[unpen[a]];
      for (std::size_t b = 0; b < unpen.size(); ++b) guu(a, b) = prob.gram(unpen[a], unpen[b]);
    }
    const Eigen::VectorXd tu = guu.ldlt().solve(cu);
    for (std::size_t a = 0; a < unpen.size(); ++a)
      resid_corr -= prob.gram.col(unpen[a]) * tu[a];
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(prob.m());
  for (int j = 0; j < prob.m(); ++j) {
    if (!prob.active[j] || !prob.penalized[j]) continue;
    const double f = prob.lambda_factor(j, spec);
    if (f <= 0.0) continue;
    out[j] = 2.0 * std::abs(resid_corr[j]) * prob.pen_scale(j, spec) / f;
  }
  return out;
}

}  // namespace

double lambda_max(const RegressionProblem& prob, int block_index, const PenaltySpec& spec) {
  // gradient at the intercept-only fit, so every penalized coordinate stays
  // zero at lambda >= lambda_max
  const Eigen::VectorXd g = entry_gradients(prob, spec);
  double lmax = 0.0;
  for (int j = block_index * prob.block; j < (block_index + 1) * prob.block; ++j)
    lmax = std::max(lmax, g[j]);
  return lmax;
}

std::vector<double> log_grid(double max_value, double min_ratio, int count) {
  if (count < 1 || !(max_value > 0.0)) return {0.0};
  if (count == 1) return {max_value};
  std::vector<double> grid(count);
  for (int i = 0; i < count; ++i)
    grid[i] = max_value * std::pow(min_ratio, static_cast<double>(i) / (count - 1));
  return grid;
}

std::pair<std::vector<double>, std::vector<double>> default_grids(const RegressionProblem& prob,
                                                                  const PenaltySpec& spec,
                                                                  int count, double min_ratio) {
  std::vector<double> g1 = log_grid(lambda_max(prob, 0, spec), min_ratio, count);
  std::vector<double> g2 =
      prob.n_blocks == 2 ? log_grid(lambda_max(prob, 1, spec), min_ratio, count)
                         : std::vector<double>{0.0};
  return {std::move(g1), std::move(g2)};
}

}  // namespace htefuse
