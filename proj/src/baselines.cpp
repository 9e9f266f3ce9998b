#include "htefuse/baselines.hpp"

#include "htefuse/rng.hpp"

#include <stdexcept>

namespace htefuse {

FitResult fit_baseline(const BaselineVariant& variant, const Dataset& d, const NuisanceFit& nf,
                       const PenaltySpec& spec, std::uint64_t seed, const FitOptions* opts) {
  FitOptions o = opts ? *opts : FitOptions{};
  o.penalty = spec;
  o.tuning = variant.tuning;
  if (variant.kind == EstimatorKind::Meta) {
    const FitResult g0 =
        fit_with_nuisance(EstimatorKind::Gm0, d, nf, o, derive_seed(seed, 0x60));
    const FitResult g1 =
        fit_with_nuisance(EstimatorKind::Gm1, d, nf, o, derive_seed(seed, 0x61));
    return fit_meta(g0, g1, d);
  }
  return fit_with_nuisance(variant.kind, d, nf, o, seed);
}

FitResult fit_meta(const FitResult& gm0, const FitResult& gm1, const Dataset& d) {
  if (gm0.coefficients.alpha.size() != gm1.coefficients.alpha.size() ||
      gm0.coefficients.alpha.size() != d.p() + 1)
    throw std::invalid_argument("fit_meta: mismatched covariate dimension");
  const double w0 = gm0.n_used;
  const double w1 = gm1.n_used;
  const double total = w0 + w1;
  if (!(total > 0.0)) throw std::invalid_argument("fit_meta: no rows behind either fit");

  FitResult out;
  out.kind = EstimatorKind::Meta;
  out.coefficients.alpha =
      (w0 * gm0.coefficients.alpha + w1 * gm1.coefficients.alpha) / total;
  out.coefficients.beta = (w0 * gm0.coefficients.beta + w1 * gm1.coefficients.beta) / total;
  out.coefficients.converged = gm0.coefficients.converged && gm1.coefficients.converged;
  out.coefficients.iterations = gm0.coefficients.iterations + gm1.coefficients.iterations;
  out.coefficients.kkt = std::max(gm0.coefficients.kkt, gm1.coefficients.kkt);
  out.coefficients.objective_monotone =
      gm0.coefficients.objective_monotone && gm1.coefficients.objective_monotone;
  for (Eigen::Index j = 1; j < out.coefficients.alpha.size(); ++j)
    if (out.coefficients.alpha[j] != 0.0) out.support_alpha.push_back(static_cast<int>(j) - 1);
  for (Eigen::Index j = 1; j < out.coefficients.beta.size(); ++j)
    if (out.coefficients.beta[j] != 0.0) out.support_beta.push_back(static_cast<int>(j) - 1);
  out.confounded = !out.support_beta.empty();
  out.nuisance_digest = gm0.nuisance_digest;
  out.n_used = static_cast<int>(total);
  return out;
}

}  // namespace htefuse
