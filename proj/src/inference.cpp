#include "htefuse/inference.hpp"

#include "htefuse/baselines.hpp"
#include "htefuse/rng.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace htefuse {

namespace {

// Adaptive-lasso weights 1/|pilot| from a light ridge fit on the
// standardized problem; unpenalized columns keep factor 1.
PenaltySpec with_pilot_weights(const RegressionProblem& prob, const PenaltySpec& spec) {
  if (spec.family != PenaltyFamily::AdaptiveLasso || spec.adaptive_weights) return spec;
  Eigen::MatrixXd gram = prob.gram;
  gram.diagonal().array() += 1e-2;
  const Eigen::VectorXd pilot = gram.ldlt().solve(prob.cty);
  PenaltySpec out = spec;
  Eigen::VectorXd w = Eigen::VectorXd::Ones(prob.m());
  for (int j = 0; j < prob.m(); ++j) {
    if (!prob.active[j] || !prob.penalized[j]) continue;
    // pilot is on the standardized scale; weights target raw coefficients
    w[j] = 1.0 / std::max(std::abs(pilot[j]) / prob.col_scale[j], 1e-6);
  }
  out.adaptive_weights = w;
  return out;
}

std::vector<int> nonzero_covariates(const Eigen::VectorXd& block_coef) {
  std::vector<int> out;
  for (Eigen::Index j = 1; j < block_coef.size(); ++j)
    if (block_coef[j] != 0.0) out.push_back(static_cast<int>(j) - 1);
  return out;
}

std::vector<int> all_rows(const Dataset& d) {
  std::vector<int> rows(d.n());
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

// Warm chain down to a fixed pair: short geometric ladders ending exactly at
// the requested lambdas, so replicate solves follow the same large-to-small
// annealing as the tuned path.
Coefficients solve_at(const RegressionProblem& prob, double l1, double l2,
                      const PenaltySpec& spec) {
  auto ladder = [](double lmax, double target, int steps) {
    std::vector<double> g;
    if (!(lmax > 0.0) || target >= lmax) {
      g.push_back(target);
      return g;
    }
    const double lo = std::max(target, 1e-12);
    for (int i = 0; i < steps; ++i)
      g.push_back(lmax * std::pow(lo / lmax, static_cast<double>(i) / steps));
    g.push_back(target);
    return g;
  };
  const std::vector<double> g1 = ladder(lambda_max(prob, 0, spec), l1, 5);
  const std::vector<double> g2 = prob.n_blocks == 2
                                     ? ladder(lambda_max(prob, 1, spec), l2, 5)
                                     : std::vector<double>{l2};
  const PathResult path = solution_path(prob, g1, g2, spec);
  return path.solutions.back();
}

}  // namespace

FitResult fit_with_nuisance(EstimatorKind kind, const Dataset& d, const NuisanceFit& nf,
                            const FitOptions& opts, std::uint64_t seed) {
  if (kind == EstimatorKind::Meta)
    throw std::invalid_argument("meta is combined from GM0 and GM1; use fit_baseline");
  const RegressionProblem prob =
      build_problem(kind, d, all_rows(d), nf, opts.penalize_intercepts);
  const PenaltySpec spec = with_pilot_weights(prob, opts.penalty);
  const auto [grid1, grid2] = default_grids(prob, spec, opts.grid_size, opts.grid_min_ratio);

  const PathResult path = solution_path(prob, grid1, grid2, spec);
  TuningResult tuned;
  if (opts.tuning == TuningMethod::Cv) {
    tuned = cv_select(d, nf, kind, grid1, grid2, opts.cv_folds, derive_seed(seed, 0xC5), spec,
                      opts.penalize_intercepts, opts.cv_se_band, opts.cv_repeats,
                      opts.cv_nested_nuisance ? &nf.config : nullptr);
  } else {
    tuned = bic_select(prob, path);
  }

  FitResult fr;
  fr.kind = kind;
  fr.coefficients =
      path.solutions[path.cell(tuned.index1, tuned.index2, static_cast<int>(grid2.size()))];
  fr.coefficients.kkt =
      kkt_check(prob, fr.coefficients, tuned.lambda1, tuned.lambda2, spec).max_violation;
  fr.support_alpha = nonzero_covariates(fr.coefficients.alpha);
  if (fr.coefficients.beta.size() > 0) {
    fr.support_beta = nonzero_covariates(fr.coefficients.beta);
    fr.confounded = !fr.support_beta.empty() ||
                    (opts.verdict_counts_intercept && fr.coefficients.beta[0] != 0.0);
  }
  fr.tuning = std::move(tuned);
  fr.nuisance_digest = nf.digest();
  fr.n_used = prob.n();
  return fr;
}

NuisanceConfig rct_pipeline_nuisance(NuisanceConfig base) {
  base.k_folds = 2;
  base.interact_source = false;
  base.mu_tower = false;
  return base;
}

FitResult fit_pipeline(const Dataset& d, const PipelineConfig& pc, std::uint64_t seed) {
  const Dataset work = pc.kind == EstimatorKind::Rct ? d.rct_only() : d;
  const NuisanceFit nf = cross_fit(work, pc.nuisance, derive_seed(seed, 0x27));
  if (pc.kind == EstimatorKind::Meta) {
    const FitResult g0 =
        fit_with_nuisance(EstimatorKind::Gm0, work, nf, pc.fit, derive_seed(seed, 0x29));
    const FitResult g1 =
        fit_with_nuisance(EstimatorKind::Gm1, work, nf, pc.fit, derive_seed(seed, 0x2a));
    return fit_meta(g0, g1, work);
  }
  return fit_with_nuisance(pc.kind, work, nf, pc.fit, derive_seed(seed, 0x28));
}

BootstrapResult bootstrap_se(const Dataset& d, const PipelineConfig& pc, int B, double level,
                             std::uint64_t seed, const FitResult* point) {
  if (B < 2) throw std::invalid_argument("bootstrap_se: B must be >= 2");
  if (!(level > 0.0 && level < 1.0))
    throw std::invalid_argument("bootstrap_se: level must lie in (0, 1)");

  FitResult full;
  if (point == nullptr) {
    full = fit_pipeline(d, pc, seed);
    point = &full;
  }
  const Dataset work = pc.kind == EstimatorKind::Rct ? d.rct_only() : d;
  const double l1 = point->tuning.lambda1;
  const double l2 = point->tuning.lambda2;

  std::vector<int> s1_rows, s0_rows;
  for (int i = 0; i < work.n(); ++i)
    (work.source()[i] == 1 ? s1_rows : s0_rows).push_back(i);
  const int m1 = static_cast<int>(std::lround(0.632 * s1_rows.size()));
  const int m0 = static_cast<int>(std::lround(0.632 * s0_rows.size()));

  const Eigen::VectorXd point_theta = point->coefficients.stacked();
  const int m = static_cast<int>(point_theta.size());
  BootstrapResult out;
  out.level = level;
  out.replicate_matrix.resize(B, m);

  int done = 0;
  int attempt = 0;
  const int max_attempts = 3 * B;
  while (done < B && attempt < max_attempts) {
    const std::uint64_t rs = derive_seed(seed, 0xB0075 + attempt);
    ++attempt;
    try {
      auto eng = make_engine(rs, 0);
      std::vector<int> draw;
      draw.reserve(m1 + m0);
      std::sample(s1_rows.begin(), s1_rows.end(), std::back_inserter(draw), m1, eng);
      std::sample(s0_rows.begin(), s0_rows.end(), std::back_inserter(draw), m0, eng);
      const Dataset rep = work.subset(draw);

      Coefficients c;
      if (pc.retune_bootstrap || pc.kind == EstimatorKind::Meta) {
        // meta carries two lambda pairs, so its replicates always retune
        c = fit_pipeline(rep, pc, derive_seed(rs, 1)).coefficients;
      } else {
        const NuisanceFit nf = cross_fit(rep, pc.nuisance, derive_seed(rs, 2));
        const RegressionProblem prob =
            build_problem(pc.kind, rep, all_rows(rep), nf, pc.fit.penalize_intercepts);
        c = solve_at(prob, l1, l2, with_pilot_weights(prob, pc.fit.penalty));
      }
      Eigen::VectorXd theta = c.stacked();
      if (theta.size() != m) throw std::runtime_error("replicate coefficient layout mismatch");
      out.replicate_matrix.row(done) = theta.transpose();
      ++done;
    } catch (const std::exception&) {
      ++out.failures;
    }
  }
  if (done < B)
    throw std::runtime_error("bootstrap_se: too many failed replicates (" +
                             std::to_string(out.failures) + " of " + std::to_string(attempt) +
                             " attempts)");

  out.n_replicates = B;
  out.attempts = attempt;
  // m-out-of-n subsampling: replicate spread estimates (1/m - 1/n) sigma^2,
  // so the full-sample standard error needs the sqrt(m/(n-m)) rescale
  const double m_drawn = m1 + m0;
  const double fpc = std::sqrt(m_drawn / (work.n() - m_drawn));
  const Eigen::RowVectorXd mean = out.replicate_matrix.colwise().mean();
  out.se.resize(m);
  for (int j = 0; j < m; ++j) {
    const double ss = (out.replicate_matrix.col(j).array() - mean[j]).square().sum();
    out.se[j] = fpc * std::sqrt(ss / (B - 1));
  }
  const double z = normal_quantile(0.5 * (1.0 + level));
  out.ci_lower = point_theta - z * out.se;
  out.ci_upper = point_theta + z * out.se;
  return out;
}

ConfoundingVerdict detect_confounding(const FitResult& fit) {
  return fit.confounded ? ConfoundingVerdict::Confounded : ConfoundingVerdict::NotConfounded;
}

// Acklam's rational approximation; |error| < 1.2e-9 over (0, 1).
double normal_quantile(double prob) {
  if (!(prob > 0.0 && prob < 1.0)) throw std::invalid_argument("normal_quantile: p in (0,1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double dd[] = {7.784695709041462e-03, 3.224671290700398e-01,
                              2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double q, r;
  if (prob < plow) {
    q = std::sqrt(-2.0 * std::log(prob));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((dd[0] * q + dd[1]) * q + dd[2]) * q + dd[3]) * q + 1.0);
  }
  if (prob > 1.0 - plow) {
    q = std::sqrt(-2.0 * std::log(1.0 - prob));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((dd[0] * q + dd[1]) * q + dd[2]) * q + dd[3]) * q + 1.0);
  }
  q = prob - 0.5;
  r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace htefuse
