#pragma once

#include <vector>

#include "strata/dataset.hpp"
#include "strata/m1.hpp"
#include "strata/wlasso.hpp"

namespace strata {

/// Output of a baseline reduction. `fits` holds one solver result per lasso
/// solved (K for the independent fit, one otherwise); `objective` is on the
/// common 1/(2n) scale, n the grand total.
struct BaselineFit {
    CoefMatrix coef;
    std::vector<FitResult> fits;
    double objective = 0.0;
};

/// Column k is the lasso on stratum k alone at lambda[k], with the loss divided by
/// the total n rather than n_k. Per-stratum failures are rethrown naming k.
BaselineFit fit_indep(const StratifiedDataset& data, const std::vector<double>& lambda, const SolverConfig& cfg = {},
                      bool intercept = false);

/// One lasso on the row-concatenated data; every column of the result is the same.
BaselineFit fit_ident(const StratifiedDataset& data, double lambda, const SolverConfig& cfg = {},
                      bool intercept = false);

/// Interaction lasso: beta_k = beta_ref + delta_k with delta_ref = 0, penalized by
/// lambda1 |beta_ref|_1 + sum_k lambda2_k |delta_k|_1, solved as a stacked lasso.
/// Star weights of the interaction lasso: unit weights, fusion forced at `reference`.
AdaptiveWeights inter_weights(int strata, int features, int reference);

BaselineFit fit_inter(const StratifiedDataset& data, int reference, const PenaltySpec& pen,
                      const SolverConfig& cfg = {});

} // namespace strata
