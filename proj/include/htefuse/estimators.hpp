#pragma once

#include "htefuse/dataset.hpp"
#include "htefuse/nuisance.hpp"
#include "htefuse/solver.hpp"

#include <string>
#include <vector>

namespace htefuse {

/// The proposed estimator and the comparison estimators sharing its
/// machinery. Rct restricts to S=1 and drops the confounding block; Naive
/// keeps all rows but forces the confounding block to zero.
enum class EstimatorKind { Rl, Oa, Gm0, Gm1, Gm01, Meta, Rct, Naive };

std::string to_string(EstimatorKind kind);
EstimatorKind estimator_from_string(const std::string& name);

/// Rows the variant fits on, out of `candidates` (pass all rows for a full
/// fit, a fold complement during cross-validation).
std::vector<int> estimator_rows(EstimatorKind kind, const Dataset& d,
                                const std::vector<int>& candidates);

/// Variant response/design on the given rows, with Stute weights recomputed
/// on that subsample. Meta has no problem of its own.
RegressionProblem build_problem(EstimatorKind kind, const Dataset& d,
                                const std::vector<int>& rows, const NuisanceFit& nf,
                                bool penalize_intercepts = false);

}  // namespace htefuse
