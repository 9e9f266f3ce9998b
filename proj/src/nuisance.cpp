#include "htefuse/nuisance.hpp"

#include "htefuse/rng.hpp"
#include "htefuse/stute.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace htefuse {

void NuisanceConfig::validate() const {
  if (k_folds < 2) throw std::invalid_argument("nuisance k_folds must be >= 2");
  if (!(clip > 0.0 && clip < 0.5)) throw std::invalid_argument("clip must lie in (0, 0.5)");
  for (auto e : {known_e1, known_e0}) {
    if (e && !(*e > 0.0 && *e < 1.0))
      throw std::invalid_argument("known propensity must lie in (0, 1)");
  }
  if (propensity_mode == PropensityMode::KnownConstant && (!known_e1 || !known_e0)) {
    throw std::invalid_argument("known-constant propensity requires known_e1 and known_e0");
  }
  if (ridge_grid.empty()) throw std::invalid_argument("ridge grid is empty");
}

double MeanModel::predict(const Eigen::Ref<const Eigen::RowVectorXd>& x, int s) const {
  const int p = static_cast<int>(x.size());
  double out = coef[0] + x.dot(coef.segment(1, p)) + coef[1 + p] * s;
  if (interact_source && s) out += x.dot(coef.segment(2 + p, p));
  return out;
}

double PropensityModel::predict(const Eigen::Ref<const Eigen::RowVectorXd>& x, int s) const {
  double e;
  if (constant[s]) {
    e = *constant[s];
  } else if (logit_coef[s]) {
    const Eigen::VectorXd& b = *logit_coef[s];
    const double eta = b[0] + x.dot(b.segment(1, x.size()));
    e = 1.0 / (1.0 + std::exp(-eta));
  } else {
    throw std::logic_error("propensity model has no fit for this source stratum");
  }
  return std::clamp(e, clip, 1.0 - clip);
}

namespace {

// Basis for the conditional-mean models: (1, X, S[, S*X]).
Eigen::MatrixXd mean_basis(const Dataset& d, const std::vector<int>& rows, bool interact) {
  const int p = d.p();
  const int q = interact ? 2 + 2 * p : 2 + p;
  Eigen::MatrixXd b(static_cast<int>(rows.size()), q);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int r = rows[i];
    b(i, 0) = 1.0;
    b.row(i).segment(1, p) = d.x().row(r);
    b(i, 1 + p) = d.source()[r];
    if (interact) b.row(i).segment(2 + p, p) = d.x().row(r) * d.source()[r];
  }
  return b;
}

// Weighted-ridge solves sharing one standardized Gram across penalty levels;
// the intercept is unpenalized. `w` need not be normalized; zero-weight rows
// drop out.
class RidgeSolver {
 public:
  RidgeSolver(const Eigen::MatrixXd& basis, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
    const int q = static_cast<int>(basis.cols());
    const double wsum = w.sum();
    if (!(wsum > 0.0)) throw DataError("conditional-mean fit: all rows carry zero weight");
    const Eigen::VectorXd wn = w / wsum;

    center_ = Eigen::VectorXd::Zero(q);
    scale_ = Eigen::VectorXd::Ones(q);
    Eigen::MatrixXd bs = basis;
    for (int j = 1; j < q; ++j) {
      center_[j] = wn.dot(basis.col(j));
      bs.col(j).array() -= center_[j];
      const double v = (wn.array() * bs.col(j).array().square()).sum();
      scale_[j] = v > 1e-14 ? std::sqrt(v) : 0.0;
      if (scale_[j] > 0.0)
        bs.col(j) /= scale_[j];
      else
        bs.col(j).setZero();
    }
    ybar_ = wn.dot(y);
    const Eigen::VectorXd yc = y.array() - ybar_;
    gram_ = bs.transpose() * wn.asDiagonal() * bs;
    gram_(0, 0) += 1.0;  // centered intercept column is 0; pin its coefficient
    rhs_ = bs.transpose() * (wn.asDiagonal() * yc);
  }

  Eigen::VectorXd solve(double lambda) const {
    const int q = static_cast<int>(rhs_.size());
    Eigen::MatrixXd g = gram_;
    g.diagonal().segment(1, q - 1).array() += lambda;
    const Eigen::VectorXd cs = g.ldlt().solve(rhs_);
    Eigen::VectorXd coef(q);
    double intercept = ybar_;
    for (int j = 1; j < q; ++j) {
      coef[j] = scale_[j] > 0.0 ? cs[j] / scale_[j] : 0.0;
      intercept -= coef[j] * center_[j];
    }
    coef[0] = intercept;
    return coef;
  }

 private:
  Eigen::MatrixXd gram_;
  Eigen::VectorXd rhs_, center_, scale_;
  double ybar_ = 0.0;
};

struct WeightedRows {
  Eigen::VectorXd y;  // log T in Stute order of the subset
  Eigen::MatrixXd basis;
  Eigen::VectorXd w;
};

WeightedRows stute_weighted_rows(const Dataset& d, const std::vector<int>& rows, bool interact) {
  Eigen::VectorXd t(rows.size());
  Eigen::VectorXi del(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    t[i] = d.time()[rows[i]];
    del[i] = d.status()[rows[i]];
  }
  WeightVector wv = compute_weights(t, del);
  std::vector<int> ordered(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) ordered[i] = rows[wv.order[i]];
  WeightedRows out;
  out.basis = mean_basis(d, ordered, interact);
  out.y.resize(ordered.size());
  for (std::size_t i = 0; i < ordered.size(); ++i) out.y[i] = d.log_time()[ordered[i]];
  out.w = wv.weights;
  return out;
}

MeanModel ridge_mean_cv(const Dataset& d, const std::vector<int>& rows,
                        const NuisanceConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (rows.empty()) throw DataError("conditional-mean fit: empty training set");
  int n_events = 0;
  for (int r : rows) n_events += d.status()[r];
  if (n_events == 0) throw DataError("conditional-mean fit: all training rows are censored");

  const bool interact = cfg.interact_source;
  if (n_events == 1 || rows.size() < 4) {
    // degenerate ridge limit: weighted mean of the observed log-times
    WeightedRows wr = stute_weighted_rows(d, rows, interact);
    MeanModel m;
    m.interact_source = interact;
    m.coef = Eigen::VectorXd::Zero(wr.basis.cols());
    m.coef[0] = wr.w.dot(wr.y) / wr.w.sum();
    return m;
  }

  double best_lambda = cfg.ridge_grid.front();
  if (cfg.ridge_grid.size() > 1) {
    // inner CV: weights recomputed per split, held-out error weighted by the
    // validation subset's own Stute weights
    const int k_inner = 4;
    std::vector<int> shuffled = rows;
    auto eng = make_engine(seed, 0x5EED);
    std::shuffle(shuffled.begin(), shuffled.end(), eng);

    std::vector<double> grid = cfg.ridge_grid;
    std::sort(grid.begin(), grid.end(), std::greater<>());
    std::vector<double> err(grid.size(), 0.0);
    for (int f = 0; f < k_inner; ++f) {
      std::vector<int> tr, va;
      for (std::size_t i = 0; i < shuffled.size(); ++i)
        (static_cast<int>(i) % k_inner == f ? va : tr).push_back(shuffled[i]);
      int tr_events = 0;
      for (int r : tr) tr_events += d.status()[r];
      int va_events = 0;
      for (int r : va) va_events += d.status()[r];
      if (tr_events == 0 || va_events == 0) continue;
      WeightedRows wtr = stute_weighted_rows(d, tr, interact);
      WeightedRows wva = stute_weighted_rows(d, va, interact);
      const RidgeSolver solver(wtr.basis, wtr.y, wtr.w);
      for (std::size_t g = 0; g < grid.size(); ++g) {
        const Eigen::VectorXd coef = solver.solve(grid[g]);
        const Eigen::VectorXd resid = wva.y - wva.basis * coef;
        err[g] += wva.w.dot(resid.cwiseAbs2());
      }
    }
    std::size_t best = 0;
    for (std::size_t g = 1; g < grid.size(); ++g)
      if (err[g] < err[best]) best = g;
    best_lambda = grid[best];
  }

  WeightedRows wr = stute_weighted_rows(d, rows, interact);
  MeanModel m;
  m.interact_source = interact;
  m.coef = RidgeSolver(wr.basis, wr.y, wr.w).solve(best_lambda);
  return m;
}

// Ridge logistic on mean log-likelihood scale with standardized columns, so
// the grid means the same thing at any sample size or covariate unit.
Eigen::VectorXd logistic_irls(const Eigen::MatrixXd& basis, const Eigen::VectorXd& a,
                              double lambda) {
  const int q = static_cast<int>(basis.cols());
  const int n = static_cast<int>(basis.rows());
  Eigen::VectorXd center = Eigen::VectorXd::Zero(q), scale = Eigen::VectorXd::Ones(q);
  Eigen::MatrixXd bs = basis;
  for (int j = 1; j < q; ++j) {
    center[j] = basis.col(j).mean();
    bs.col(j).array() -= center[j];
    const double v = bs.col(j).squaredNorm() / n;
    scale[j] = v > 1e-14 ? std::sqrt(v) : 0.0;
    if (scale[j] > 0.0)
      bs.col(j) /= scale[j];
    else
      bs.col(j).setZero();
  }
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(q);
  for (int it = 0; it < 40; ++it) {
    Eigen::VectorXd eta = (bs * beta).cwiseMax(-30.0).cwiseMin(30.0);
    Eigen::VectorXd mu = eta.unaryExpr([](double e) { return 1.0 / (1.0 + std::exp(-e)); });
    Eigen::VectorXd grad = bs.transpose() * (a - mu) / n;
    grad.tail(q - 1) -= lambda * beta.tail(q - 1);
    if (grad.lpNorm<Eigen::Infinity>() < 1e-9) break;
    Eigen::VectorXd wirls = (mu.array() * (1.0 - mu.array()) + 1e-10) / n;
    Eigen::MatrixXd hess = bs.transpose() * wirls.asDiagonal() * bs;
    hess.diagonal().tail(q - 1).array() += lambda;
    beta += hess.ldlt().solve(grad);
  }
  Eigen::VectorXd coef(q);
  double intercept = beta[0];
  for (int j = 1; j < q; ++j) {
    coef[j] = scale[j] > 0.0 ? beta[j] / scale[j] : 0.0;
    intercept -= coef[j] * center[j];
  }
  coef[0] = intercept;
  return coef;
}

double heldout_loglik(const Eigen::MatrixXd& basis, const Eigen::VectorXd& a,
                      const Eigen::VectorXd& beta) {
  Eigen::VectorXd eta = (basis * beta).cwiseMax(-30.0).cwiseMin(30.0);
  double ll = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    ll += a[i] * eta[i] - std::log1p(std::exp(eta[i]));
  }
  return ll;
}

}  // namespace

PropensityModel fit_propensity(const Dataset& d, const std::vector<int>& train,
                               const NuisanceConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  PropensityModel m;
  m.clip = cfg.clip;
  const std::array<std::optional<double>, 2> known = {cfg.known_e0, cfg.known_e1};
  for (int s = 0; s < 2; ++s) {
    if (known[s]) {
      m.constant[s] = *known[s];
      continue;
    }
    if (cfg.propensity_mode == PropensityMode::KnownConstant) continue;  // unreachable; validated
    std::vector<int> rows;
    for (int r : train)
      if (d.source()[r] == s) rows.push_back(r);
    if (rows.empty()) continue;
    int treated = 0;
    for (int r : rows) treated += d.treatment()[r];
    if (treated == 0 || treated == static_cast<int>(rows.size())) {
      throw DataError("propensity fit: single-arm source stratum s=" + std::to_string(s));
    }
    const int p = d.p();
    Eigen::MatrixXd basis(rows.size(), 1 + p);
    Eigen::VectorXd a(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      basis(i, 0) = 1.0;
      basis.row(i).segment(1, p) = d.x().row(rows[i]);
      a[i] = d.treatment()[rows[i]];
    }
    double best_lambda = cfg.ridge_grid.front();
    if (cfg.ridge_grid.size() > 1 && rows.size() >= 8) {
      // held-out log-likelihood over internal folds; ties within one nat of
      // the best go to the larger (more regularized) level
      const int k_inner = 4;
      std::vector<int> perm(rows.size());
      std::iota(perm.begin(), perm.end(), 0);
      auto eng = make_engine(seed, 0xE5715 + s);
      std::shuffle(perm.begin(), perm.end(), eng);

      std::vector<double> grid = cfg.ridge_grid;
      std::sort(grid.begin(), grid.end(), std::greater<>());
      std::vector<double> ll(grid.size(), 0.0);
      for (int f = 0; f < k_inner; ++f) {
        std::vector<int> tr, va;
        for (std::size_t i = 0; i < perm.size(); ++i)
          (static_cast<int>(i) % k_inner == f ? va : tr).push_back(perm[i]);
        double tr_treated = 0.0;
        for (int i : tr) tr_treated += a[i];
        if (tr_treated == 0.0 || tr_treated == static_cast<double>(tr.size())) continue;
        Eigen::MatrixXd btr(tr.size(), 1 + p), bva(va.size(), 1 + p);
        Eigen::VectorXd atr(tr.size()), ava(va.size());
        for (std::size_t i = 0; i < tr.size(); ++i) {
          btr.row(i) = basis.row(tr[i]);
          atr[i] = a[tr[i]];
        }
        for (std::size_t i = 0; i < va.size(); ++i) {
          bva.row(i) = basis.row(va[i]);
          ava[i] = a[va[i]];
        }
        for (std::size_t g = 0; g < grid.size(); ++g)
          ll[g] += heldout_loglik(bva, ava, logistic_irls(btr, atr, grid[g]));
      }
      const double top = *std::max_element(ll.begin(), ll.end());
      for (std::size_t g = 0; g < grid.size(); ++g) {
        if (ll[g] >= top - 1.0) {
          best_lambda = grid[g];  // grid is descending: first within band wins
          break;
        }
      }
    }
    m.logit_coef[s] = logistic_irls(basis, a, best_lambda);
  }
  return m;
}

MeanModel fit_conditional_mean(const Dataset& d, const std::vector<int>& train,
                               const NuisanceConfig& cfg, std::uint64_t seed) {
  return ridge_mean_cv(d, train, cfg, seed);
}

MeanModel fit_arm_mean(const Dataset& d, const std::vector<int>& train, int arm,
                       const NuisanceConfig& cfg, std::uint64_t seed) {
  std::vector<int> rows;
  for (int r : train)
    if (d.treatment()[r] == arm) rows.push_back(r);
  if (rows.empty()) throw DataError("arm-mean fit: no rows with treatment " + std::to_string(arm));
  return ridge_mean_cv(d, rows, cfg, seed);
}

NuisanceFit cross_fit(const Dataset& d, const NuisanceConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  NuisanceFit nf;
  nf.config = cfg;
  nf.folds = split_folds(d, cfg.k_folds, derive_seed(seed, 0xF01D5));
  nf.e_hat.resize(d.n());
  nf.mu_hat.resize(d.n());
  nf.mu0_hat.resize(d.n());
  nf.mu1_hat.resize(d.n());
  for (int f = 0; f < cfg.k_folds; ++f) {
    const std::vector<int> train = nf.folds.complement(f);
    const std::vector<int> holdout = nf.folds.members(f);
    const std::uint64_t fs = derive_seed(seed, 7000 + f);
    const PropensityModel e = fit_propensity(d, train, cfg, derive_seed(fs, 1));
    const MeanModel mu0 = fit_arm_mean(d, train, 0, cfg, derive_seed(fs, 3));
    const MeanModel mu1 = fit_arm_mean(d, train, 1, cfg, derive_seed(fs, 4));
    std::optional<MeanModel> mu;
    if (!cfg.mu_tower) mu = fit_conditional_mean(d, train, cfg, derive_seed(fs, 2));
    for (int r : holdout) {
      const auto x = d.x().row(r);
      const int s = d.source()[r];
      nf.e_hat[r] = e.predict(x, s);
      nf.mu0_hat[r] = mu0.predict(x, s);
      nf.mu1_hat[r] = mu1.predict(x, s);
      nf.mu_hat[r] = cfg.mu_tower
                         ? nf.e_hat[r] * nf.mu1_hat[r] + (1.0 - nf.e_hat[r]) * nf.mu0_hat[r]
                         : mu->predict(x, s);
    }
  }
  return nf;
}

std::string NuisanceFit::digest() const {
  std::ostringstream out;
  out << "k" << config.k_folds << "-"
      << (config.propensity_mode == PropensityMode::KnownConstant ? "known" : "logistic")
      << (config.mu_tower ? "-tower" : "-direct");
  if (config.known_e1) out << "-e1=" << *config.known_e1;
  if (config.known_e0) out << "-e0=" << *config.known_e0;
  out << "-clip" << config.clip << "-seed" << folds.seed;
  return out.str();
}

}  // namespace htefuse
