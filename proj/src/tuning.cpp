#include "htefuse/tuning.hpp"

#include "htefuse/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace htefuse {

std::string to_string(TuningMethod m) { return m == TuningMethod::Cv ? "cv" : "bic"; }

TuningMethod tuning_from_string(const std::string& name) {
  if (name == "cv") return TuningMethod::Cv;
  if (name == "bic") return TuningMethod::Bic;
  throw std::invalid_argument("unknown tuning method: " + name);
}

namespace {

// argmin with ties (within `band`) resolved toward smaller indices, i.e.
// larger lambdas on descending grids
void pick_minimum(TuningResult* t, double band = 0.0) {
  const int n1 = static_cast<int>(t->grid1.size());
  const int n2 = static_cast<int>(t->grid2.size());
  const double cutoff = t->criterion.minCoeff() + band;
  int best1 = -1, best2 = -1;
  for (int i1 = 0; i1 < n1 && best1 < 0; ++i1)
    for (int i2 = 0; i2 < n2; ++i2)
      if (t->criterion(i1, i2) <= cutoff) {
        best1 = i1;
        best2 = i2;
        break;
      }
  t->band = band;
  t->index1 = best1;
  t->index2 = best2;
  t->lambda1 = t->grid1[best1];
  t->lambda2 = t->grid2[best2];
}

}  // namespace

TuningResult cv_select(const Dataset& d, const NuisanceFit& nf, EstimatorKind kind,
                       const std::vector<double>& grid1, const std::vector<double>& grid2, int k,
                       std::uint64_t seed, const PenaltySpec& spec, bool penalize_intercepts,
                       double se_band, int repeats, const NuisanceConfig* nested_nuisance) {
  if (k < 2) throw std::invalid_argument("cv_select: k must be >= 2");
  if (repeats < 1) throw std::invalid_argument("cv_select: repeats must be >= 1");
  TuningResult t;
  t.method = TuningMethod::Cv;
  t.grid1 = grid1;
  t.grid2 = grid2;
  t.criterion = Eigen::MatrixXd::Zero(grid1.size(), grid2.size());
  std::vector<Eigen::MatrixXd> per_fold;

  for (int rep = 0; rep < repeats; ++rep) {
    const FoldAssignment folds = split_folds(d, k, derive_seed(seed, 0xCF0 + rep));
    for (int f = 0; f < k; ++f) {
      const NuisanceFit* fold_nf = &nf;
      NuisanceFit nested;
      if (nested_nuisance != nullptr) {
        // refit the nuisances on this fold's training rows; validation rows
        // then carry genuinely out-of-sample predictions
        const std::vector<int> tr = folds.complement(f);
        const std::uint64_t fs = derive_seed(seed, 0xAE57 + 31 * rep + f);
        const PropensityModel pe = fit_propensity(d, tr, *nested_nuisance, derive_seed(fs, 1));
        const MeanModel m0 = fit_arm_mean(d, tr, 0, *nested_nuisance, derive_seed(fs, 3));
        const MeanModel m1 = fit_arm_mean(d, tr, 1, *nested_nuisance, derive_seed(fs, 4));
        std::optional<MeanModel> mu;
        if (!nested_nuisance->mu_tower)
          mu = fit_conditional_mean(d, tr, *nested_nuisance, derive_seed(fs, 2));
        nested.config = *nested_nuisance;
        nested.e_hat.resize(d.n());
        nested.mu_hat.resize(d.n());
        nested.mu0_hat.resize(d.n());
        nested.mu1_hat.resize(d.n());
        for (int r = 0; r < d.n(); ++r) {
          const auto x = d.x().row(r);
          const int s = d.source()[r];
          nested.e_hat[r] = pe.predict(x, s);
          nested.mu0_hat[r] = m0.predict(x, s);
          nested.mu1_hat[r] = m1.predict(x, s);
          nested.mu_hat[r] =
              nested_nuisance->mu_tower
                  ? nested.e_hat[r] * nested.mu1_hat[r] + (1.0 - nested.e_hat[r]) * nested.mu0_hat[r]
                  : mu->predict(x, s);
        }
        fold_nf = &nested;
      }
      const RegressionProblem train =
          build_problem(kind, d, folds.complement(f), *fold_nf, penalize_intercepts);
      const PathResult path = solution_path(train, grid1, grid2, spec);

      const RegressionProblem val =
          build_problem(kind, d, folds.members(f), *fold_nf, penalize_intercepts);
      if (!(val.weights.sum() > 0.0)) {
        ++t.warnings;  // all-censored validation fold contributes 0
        continue;
      }
      Eigen::MatrixXd fold_err = Eigen::MatrixXd::Zero(grid1.size(), grid2.size());
      for (std::size_t i1 = 0; i1 < grid1.size(); ++i1) {
        for (std::size_t i2 = 0; i2 < grid2.size(); ++i2) {
          const Coefficients& c = path.solutions[path.cell(i1, i2, grid2.size())];
          Eigen::VectorXd pred = val.design.leftCols(val.block) * c.alpha;
          if (val.n_blocks == 2) pred += val.design.rightCols(val.block) * c.beta;
          const Eigen::VectorXd resid = val.response - pred;
          fold_err(i1, i2) = val.weights.dot(resid.cwiseAbs2());
        }
      }
      t.criterion += fold_err;
      per_fold.push_back(std::move(fold_err));
    }
  }
  t.criterion /= repeats;
  for (auto& fe : per_fold) fe *= static_cast<double>(k) / per_fold.size();

  if (se_band > 0.0 && per_fold.size() > 1) {
    // near-tie resolution toward the sparser corner: a cell near the
    // minimizer counts as tied when its criterion excess is within `se_band`
    // standard errors of the fold-wise paired differences against the min
    int mi = 0, mj = 0;
    t.criterion.minCoeff(&mi, &mj);
    const int nf_used = static_cast<int>(per_fold.size());
    const int reach = 4;
    auto tied_to_min = [&](int i1, int i2) {
      const double excess = t.criterion(i1, i2) - t.criterion(mi, mj);
      const double mean_d = excess / nf_used;
      double ss = 0.0;
      for (const auto& fe : per_fold) {
        const double df = (fe(i1, i2) - fe(mi, mj)) - mean_d;
        ss += df * df;
      }
      const double se_diff = std::sqrt(ss / (nf_used - 1) * nf_used);
      return excess <= se_band * se_diff;
    };
    for (int i1 = std::max(0, mi - reach); i1 <= mi; ++i1) {
      for (int i2 = std::max(0, mj - reach); i2 <= mj; ++i2) {
        if (tied_to_min(i1, i2)) {
          t.band = se_band;
          t.index1 = i1;
          t.index2 = i2;
          t.lambda1 = t.grid1[i1];
          t.lambda2 = t.grid2[i2];
          return t;
        }
      }
    }
  }
  pick_minimum(&t);
  return t;
}

TuningResult bic_select(const RegressionProblem& prob, const PathResult& path) {
  if (path.solutions.empty()) throw std::invalid_argument("bic_select: empty path");
  const double wsum = prob.weights.sum();
  int n_eff = 0;
  for (Eigen::Index i = 0; i < prob.weights.size(); ++i) n_eff += prob.weights[i] > 0.0;
  if (n_eff == 0 || !(wsum > 0.0)) throw std::invalid_argument("bic_select: zero total weight");

  // recover the grid axes from the lambda1-major layout: n2 is the run
  // length of the leading lambda1 value
  std::size_t n2 = 1;
  while (n2 < path.grid.size() && path.grid[n2].first == path.grid.front().first) ++n2;

  TuningResult t;
  t.method = TuningMethod::Bic;
  for (std::size_t i = 0; i < n2; ++i) t.grid2.push_back(path.grid[i].second);
  for (std::size_t i = 0; i < path.grid.size(); i += n2) t.grid1.push_back(path.grid[i].first);
  t.criterion.resize(t.grid1.size(), t.grid2.size());
  for (std::size_t i1 = 0; i1 < t.grid1.size(); ++i1) {
    for (std::size_t i2 = 0; i2 < t.grid2.size(); ++i2) {
      const Coefficients& c = path.solutions[i1 * t.grid2.size() + i2];
      const double rss = std::max(c.rss, 1e-300);
      t.criterion(i1, i2) = n_eff * std::log(rss / wsum) + std::log(double(n_eff)) * c.df();
    }
  }
  pick_minimum(&t);
  return t;
}

}  // namespace htefuse
