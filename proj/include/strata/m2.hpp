#pragma once

#include <functional>
#include <vector>

#include "strata/dataset.hpp"
#include "strata/m1.hpp"
#include "strata/wlasso.hpp"

namespace strata {

/// lambda1[k] on ||beta_k||_1 and lambda2[k] on ||beta_k - common||_1.
struct M2PenaltySpec {
    std::vector<double> lambda1;
    std::vector<double> lambda2;

    static M2PenaltySpec uniform(int strata, double lambda1, double lambda2);
    void validate(int strata) const;
};

/// Star-graph fused problem solved by the M2 code path:
///
///   sum_k loss_k / n + sum_{k,j} l1(k,j) |beta_{k,j}| + fuse(k,j) |beta_{k,j} - c_j|
///
/// where the center c_j is a free variable (plain M2) or, when `references` is set,
/// the coefficient of the reference stratum (adaptive M2; its own fuse entry is
/// ignored). Infinite l1 pins a coefficient to 0, infinite fuse ties it to c_j.
struct M2Problem {
    const StratifiedDataset* data = nullptr;
    Eigen::MatrixXd l1;    // K x p
    Eigen::MatrixXd fuse;  // K x p
    std::vector<int> references;  // empty: free center
    bool intercept = false;       // unpenalized intercept per stratum

    bool free_center() const noexcept { return references.empty(); }
    void validate() const;
};

M2Problem make_m2_problem(const StratifiedDataset& data, const M2PenaltySpec& pen, bool intercept = false);
M2Problem make_adaptive_m2_problem(const StratifiedDataset& data, const M2PenaltySpec& pen,
                                   const AdaptiveWeights& adaptive, bool intercept = false);

struct M2Fit {
    CoefMatrix coef;
    Eigen::VectorXd common;  // free center, or the reference-stratum coefficients
    FitResult fit;           // theta = column-major vec(B); df = fused nonzero groups
};

/// Exact minimizer of (c/2)(b - z)^2 + t1 |b| + t2 |b - a| for c > 0.
double prox_two_kink(double z, double c, double a, double t1, double t2);

/// Block coordinate descent over covariates; each block (the K coefficients of
/// covariate j and its center) is minimized exactly. Terminates on the
/// subgradient certificate m2_kkt_residual <= cfg.tol; throws ConvergenceError
/// past cfg.max_iter sweeps.
M2Fit solve_m2(const M2Problem& problem, const SolverConfig& cfg = {}, const CoefMatrix* warm = nullptr);

M2Fit fit_m2(const StratifiedDataset& data, const M2PenaltySpec& pen, const SolverConfig& cfg = {},
             bool intercept = false, const CoefMatrix* warm = nullptr);

M2Fit fit_m2_adaptive(const StratifiedDataset& data, const M2PenaltySpec& pen, const CoefMatrix& initial, double rho,
                      const SolverConfig& cfg = {}, bool intercept = false);

double m2_objective(const M2Problem& problem, const CoefMatrix& coef, const Eigen::VectorXd& common);

/// Worst violation of the subgradient optimality system at (coef, common),
/// computed from the data. For every covariate the per-stratum conditions are
/// met as closely as possible first, and the center condition is then checked
/// over the remaining freedom, so the value bounds the true minimal residual.
double m2_kkt_residual(const M2Problem& problem, const CoefMatrix& coef, const Eigen::VectorXd& common);

/// max_j distance from common_j to the median set of row j of B.
double median_certificate(const CoefMatrix& coef, const Eigen::VectorXd& common);

/// Number of distinct nonzero values summed over the rows of B.
int fused_group_count(const Eigen::MatrixXd& B);

using M2Observer = std::function<void(const M2Problem&, const M2Fit&)>;
void set_m2_observer(M2Observer observer);

} // namespace strata
