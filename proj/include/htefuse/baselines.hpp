#pragma once

#include "htefuse/inference.hpp"

namespace htefuse {

struct BaselineVariant {
  EstimatorKind kind = EstimatorKind::Oa;
  TuningMethod tuning = TuningMethod::Cv;
};

/// Fits a comparison estimator on shared cross-fitted nuisances; Meta is
/// dispatched to the GM0/GM1 pair and combined.
FitResult fit_baseline(const BaselineVariant& variant, const Dataset& d, const NuisanceFit& nf,
                       const PenaltySpec& spec, std::uint64_t seed,
                       const FitOptions* opts = nullptr);

/// Coefficient-wise combination of the GM0 and GM1 fits weighted by the row
/// counts each used (A=1 rows for GM0, A=0 for GM1).
FitResult fit_meta(const FitResult& gm0, const FitResult& gm1, const Dataset& d);

}  // namespace htefuse
