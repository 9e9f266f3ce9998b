#include "htefuse/inference.hpp"
#include "htefuse/simulation.hpp"

#include <doctest.h>

using namespace htefuse;

namespace {

PipelineConfig quick_pipeline(EstimatorKind kind) {
  PipelineConfig pc;
  pc.kind = kind;
  pc.fit.grid_size = 8;
  pc.fit.cv_folds = 3;
  pc.nuisance.known_e1 = 0.5;
  pc.nuisance.known_e0 = 0.5;
  return pc;
}

}  // namespace

TEST_CASE("normal quantile spot values") {
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959964).epsilon(1e-5));
  CHECK(normal_quantile(0.5) == doctest::Approx(0.0));
  CHECK(normal_quantile(0.025) == doctest::Approx(-1.959964).epsilon(1e-5));
  CHECK_THROWS_AS(normal_quantile(0.0), std::invalid_argument);
}

TEST_CASE("detect_confounding reads the penalized support") {
  FitResult fr;
  fr.coefficients.alpha = Eigen::VectorXd::Zero(3);
  fr.coefficients.beta = Eigen::VectorXd::Zero(3);
  fr.confounded = false;
  CHECK(detect_confounding(fr) == ConfoundingVerdict::NotConfounded);
  fr.confounded = true;
  CHECK(detect_confounding(fr) == ConfoundingVerdict::Confounded);
}

TEST_CASE("pipeline fit on simulated data is deterministic and labeled") {
  SimulationConfig cfg;
  cfg.n = 400;
  cfg.p = 8;
  cfg.target_cr = 0.2;
  auto [t0, t1] = calibrate_censoring(cfg, 10000, 3);
  auto [d, truth] = generate(cfg, t0, t1, 3);

  const PipelineConfig pc = quick_pipeline(EstimatorKind::Rl);
  const FitResult a = fit_pipeline(d, pc, 11);
  const FitResult b = fit_pipeline(d, pc, 11);
  CHECK((a.coefficients.stacked() - b.coefficients.stacked()).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(a.tuning.lambda1 == b.tuning.lambda1);
  CHECK(a.kind == EstimatorKind::Rl);
  CHECK(a.coefficients.alpha.size() == cfg.p + 1);
  CHECK(a.coefficients.beta.size() == cfg.p + 1);
  CHECK(a.n_used == cfg.n);
  CHECK(a.coefficients.kkt < 1e-6);
}

TEST_CASE("bootstrap on a degenerate constant dataset has zero spread") {
  // constant outcome: every subsample fits the same all-zero model
  const int n = 40;
  Eigen::VectorXd t = Eigen::VectorXd::Constant(n, 2.0);
  Eigen::VectorXi st = Eigen::VectorXi::Ones(n);
  Eigen::VectorXi tr(n);
  for (int i = 0; i < n; ++i) tr[i] = i % 2;
  Eigen::VectorXi so = Eigen::VectorXi::Ones(n);
  Eigen::MatrixXd x = Eigen::MatrixXd::Constant(n, 2, 1.0);
  const Dataset d(t, st, tr, so, x);

  PipelineConfig pc = quick_pipeline(EstimatorKind::Rct);
  const BootstrapResult boot = bootstrap_se(d, pc, 2, 0.95, 5);
  CHECK(boot.se.lpNorm<Eigen::Infinity>() == doctest::Approx(0.0));
  CHECK(boot.n_replicates == 2);
}

TEST_CASE("bootstrap determinism, CI symmetry and failure accounting") {
  SimulationConfig cfg;
  cfg.n = 300;
  cfg.p = 8;
  cfg.target_cr = 0.2;
  cfg.confounded = false;
  auto [t0, t1] = calibrate_censoring(cfg, 10000, 17);
  auto [d, truth] = generate(cfg, t0, t1, 17);

  PipelineConfig pc = quick_pipeline(EstimatorKind::Rl);
  const FitResult point = fit_pipeline(d, pc, 23);
  const BootstrapResult a = bootstrap_se(d, pc, 5, 0.9, 23, &point);
  const BootstrapResult b = bootstrap_se(d, pc, 5, 0.9, 23, &point);
  CHECK((a.se - b.se).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(a.attempts >= 5);

  const Eigen::VectorXd theta = point.coefficients.stacked();
  for (int j = 0; j < theta.size(); ++j) {
    CHECK(a.ci_upper[j] - theta[j] == doctest::Approx(theta[j] - a.ci_lower[j]).epsilon(1e-12));
    CHECK(a.ci_lower[j] <= theta[j]);
    CHECK(a.ci_upper[j] >= theta[j]);
  }
  CHECK_THROWS_AS(bootstrap_se(d, pc, 1, 0.95, 1), std::invalid_argument);
  CHECK_THROWS_AS(bootstrap_se(d, pc, 2, 1.5, 1), std::invalid_argument);
}

TEST_CASE("verdict excludes the unpenalized confounding intercept by default") {
  SimulationConfig cfg;
  cfg.n = 350;
  cfg.p = 8;
  cfg.confounded = false;
  cfg.target_cr = 0.2;
  auto [t0, t1] = calibrate_censoring(cfg, 10000, 29);
  auto [d, truth] = generate(cfg, t0, t1, 29);
  const PipelineConfig pc = quick_pipeline(EstimatorKind::Rl);
  const FitResult fr = fit_pipeline(d, pc, 31);
  // the beta intercept is unpenalized and almost surely numerically nonzero,
  // yet the verdict must key on the penalized coordinates only
  CHECK(fr.coefficients.beta[0] != 0.0);
  CHECK(fr.confounded == !fr.support_beta.empty());
}
