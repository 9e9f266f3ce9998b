#include "htefuse/nuisance.hpp"
#include "htefuse/rng.hpp"

#include <doctest.h>

#include <Eigen/Cholesky>

#include <random>

using namespace htefuse;

namespace {

// X ~ N(0, I), A ~ Bernoulli(0.5) independent of X, log T = 2 + eps
Dataset independent_arms(int n, int p, double noise_sd, std::uint64_t seed) {
  auto eng = make_engine(seed, 0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::VectorXd t(n);
  Eigen::VectorXi st = Eigen::VectorXi::Ones(n), tr(n), so(n);
  Eigen::MatrixXd x(n, p);
  for (int i = 0; i < n; ++i) {
    tr[i] = unif(eng) < 0.5;
    so[i] = unif(eng) < 0.3;
    for (int j = 0; j < p; ++j) x(i, j) = gauss(eng);
    t[i] = std::exp(2.0 + noise_sd * gauss(eng));
  }
  return Dataset(t, st, tr, so, x);
}

std::vector<int> iota_rows(int n) {
  std::vector<int> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

}  // namespace

TEST_CASE("known-constant propensity returns the constants, clipped") {
  const Dataset d = independent_arms(60, 2, 0.1, 1);
  NuisanceConfig cfg;
  cfg.propensity_mode = PropensityMode::KnownConstant;
  cfg.known_e1 = 0.5;
  cfg.known_e0 = 0.5;
  const PropensityModel m = fit_propensity(d, iota_rows(d.n()), cfg);
  for (int i = 0; i < d.n(); ++i)
    CHECK(m.predict(d.x().row(i), d.source()[i]) == doctest::Approx(0.5));
}

TEST_CASE("estimated propensity stays near 0.5 when A is independent of X") {
  const Dataset d = independent_arms(2000, 4, 0.1, 2);
  NuisanceConfig cfg;  // penalized logistic in both strata
  const PropensityModel m = fit_propensity(d, iota_rows(d.n()), cfg, 5);
  for (int i = 0; i < d.n(); ++i) {
    const double e = m.predict(d.x().row(i), d.source()[i]);
    CHECK(e > 0.5 - 0.05);
    CHECK(e < 0.5 + 0.05);
  }
}

TEST_CASE("single-arm stratum in estimation mode is an error") {
  Eigen::VectorXd t(8);
  Eigen::VectorXi st = Eigen::VectorXi::Ones(8), tr(8), so(8);
  Eigen::MatrixXd x(8, 1);
  for (int i = 0; i < 8; ++i) {
    t[i] = 1.0 + i;
    tr[i] = i < 4 ? 1 : 0;
    so[i] = i < 4;  // all RCT rows treated, all RWD rows control
    x(i, 0) = i;
  }
  const Dataset d(t, st, tr, so, x);
  NuisanceConfig cfg;
  CHECK_THROWS_AS(fit_propensity(d, iota_rows(8), cfg), DataError);
}

TEST_CASE("conditional mean recovers a constant signal") {
  const Dataset d = independent_arms(500, 3, 0.1, 3);
  NuisanceConfig cfg;
  const MeanModel m = fit_conditional_mean(d, iota_rows(d.n()), cfg, 7);
  CHECK(m.coef[0] == doctest::Approx(2.0).epsilon(0.05));
  Eigen::RowVectorXd x0 = Eigen::RowVectorXd::Zero(3);
  CHECK(m.predict(x0, 0) == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("one uncensored training row gives a constant predictor") {
  Eigen::VectorXd t(3);
  t << 4.0, 2.0, 3.0;
  Eigen::VectorXi st(3), tr(3), so(3);
  st << 1, 0, 0;
  tr << 1, 0, 1;
  so << 1, 1, 0;
  Eigen::MatrixXd x(3, 2);
  x << 0.5, -1.0, 2.0, 0.3, 1.0, 1.0;
  const Dataset d(t, st, tr, so, x);
  NuisanceConfig cfg;
  const MeanModel m = fit_conditional_mean(d, {0}, cfg);
  Eigen::RowVectorXd probe(2);
  probe << 9.0, -3.0;
  CHECK(m.predict(probe, 1) == doctest::Approx(std::log(4.0)));
}

TEST_CASE("all-censored training set is an error") {
  Eigen::VectorXd t(5);
  t << 1, 2, 3, 4, 5;
  Eigen::VectorXi st = Eigen::VectorXi::Zero(5);
  Eigen::VectorXi tr(5), so(5);
  tr << 1, 0, 1, 0, 1;
  so << 1, 1, 0, 0, 1;
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(5, 2);
  const Dataset d(t, st, tr, so, x);
  NuisanceConfig cfg;
  CHECK_THROWS_AS(fit_conditional_mean(d, iota_rows(5), cfg), DataError);
}

TEST_CASE("tiny ridge on uncensored data matches ordinary least squares") {
  auto eng = make_engine(21, 0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int n = 400, p = 3;
  Eigen::VectorXd t(n);
  Eigen::VectorXi st = Eigen::VectorXi::Ones(n), tr(n), so(n);
  Eigen::MatrixXd x(n, p);
  for (int i = 0; i < n; ++i) {
    tr[i] = i % 2;
    so[i] = (i / 2) % 2;
    for (int j = 0; j < p; ++j) x(i, j) = gauss(eng);
    t[i] = std::exp(1.0 + 0.5 * x(i, 0) - 0.25 * x(i, 2) + 0.3 * so[i] + 0.05 * gauss(eng));
  }
  const Dataset d(t, st, tr, so, x);
  NuisanceConfig cfg;
  cfg.ridge_grid = {1e-10};
  cfg.interact_source = false;
  const MeanModel m = fit_conditional_mean(d, iota_rows(n), cfg);

  // OLS oracle on the (1, X, S) basis
  Eigen::MatrixXd basis(n, p + 2);
  for (int i = 0; i < n; ++i) {
    basis(i, 0) = 1.0;
    basis.row(i).segment(1, p) = x.row(i);
    basis(i, p + 1) = so[i];
  }
  const Eigen::VectorXd ols =
      (basis.transpose() * basis).ldlt().solve(basis.transpose() * d.log_time());
  CHECK((m.coef - ols).lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("cross_fit bookkeeping") {
  const Dataset d = independent_arms(200, 3, 0.3, 9);
  NuisanceConfig cfg;
  cfg.k_folds = 2;
  const NuisanceFit a = cross_fit(d, cfg, 2024);

  SUBCASE("identical seed reproduces the fit") {
    const NuisanceFit b = cross_fit(d, cfg, 2024);
    CHECK((a.e_hat - b.e_hat).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((a.mu_hat - b.mu_hat).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((a.mu0_hat - b.mu0_hat).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((a.mu1_hat - b.mu1_hat).lpNorm<Eigen::Infinity>() == 0.0);
  }
  SUBCASE("different seed moves the predictions") {
    const NuisanceFit b = cross_fit(d, cfg, 2025);
    CHECK((a.mu_hat - b.mu_hat).lpNorm<Eigen::Infinity>() > 0.0);
  }
  SUBCASE("propensities are clipped") {
    for (int i = 0; i < d.n(); ++i) {
      CHECK(a.e_hat[i] >= cfg.clip);
      CHECK(a.e_hat[i] <= 1.0 - cfg.clip);
    }
  }
  SUBCASE("out-of-fold purity: altering one fold's rows leaves the other fold's models alone") {
    // move a single row's covariates in fold 0; predictions of rows in fold 0
    // come from the fold-1 model and must not change except through that row
    const auto f0 = a.folds.members(0);
    Eigen::MatrixXd x2 = d.x();
    x2(f0[0], 0) += 50.0;
    const Dataset d2(d.time(), d.status(), d.treatment(), d.source(), x2);
    const NuisanceFit b = cross_fit(d2, cfg, 2024);
    for (int r : a.folds.members(0)) {
      if (r == f0[0]) continue;  // same model, same row -> same prediction
      CHECK(b.mu_hat[r] == doctest::Approx(a.mu_hat[r]).epsilon(1e-12));
    }
  }
}

TEST_CASE("config validation") {
  NuisanceConfig cfg;
  cfg.clip = 0.7;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.propensity_mode = PropensityMode::KnownConstant;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.known_e1 = 0.5;
  cfg.known_e0 = 1.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
