#pragma once

#include <optional>
#include <string>
#include <vector>

#include "strata/dataset.hpp"
#include "strata/stacking.hpp"
#include "strata/wlasso.hpp"

namespace strata {

/// lambda1 on the common effect, lambda2[k] on the deviation of stratum k.
struct PenaltySpec {
    double lambda1 = 0.0;
    std::vector<double> lambda2;

    static PenaltySpec uniform(int strata, double lambda1, double lambda2);
    void validate(int strata) const;
};

/// Adaptive weights built from initial estimates: w_{k,j} = 1/|b_{k,j}|^rho and
/// nu_{k,j} = 1/|b_{k,j} - b_{ref_j,j}|^rho, with nu infinite at the reference
/// stratum of every covariate (and wherever the difference vanishes when rho > 0).
struct AdaptiveWeights {
    Eigen::MatrixXd w;   // K x p
    Eigen::MatrixXd nu;  // K x p
    double rho = 1.0;
    std::vector<int> references;  // p entries, 0-based strata
    CoefMatrix initial;

    static AdaptiveWeights from_initial(const CoefMatrix& initial, double rho);
};

/// Per-stratum unpenalized estimates (least squares, least-norm when singular;
/// maximum likelihood for logistic loss). Intercepts are fitted when `intercept`.
CoefMatrix initial_estimates(const StratifiedDataset& data, bool intercept = false);

struct M1Fit {
    CoefDecomposition decomposition;
    CoefMatrix coef;
    Eigen::VectorXd theta;  // stacked coefficients on the original scale
    FitResult fit;          // solver output (theta on the solver's scale)
};

/// Reusable M1 solver on one dataset: the stacked design (and its Gram matrix)
/// are built once and every fit only changes the weights and lambda. Not safe
/// for concurrent fit() calls on the same object.
class M1Estimator {
public:
    M1Estimator(const StratifiedDataset& data, StackOptions opts = {}, SolverConfig cfg = {});
    /// Adaptive variant: the common block uses w_{ref_j, j}, deviation blocks nu_{k,j}.
    M1Estimator(const StratifiedDataset& data, const AdaptiveWeights& adaptive, StackOptions opts = {},
                SolverConfig cfg = {});

    /// Solve at `pen`; `warm` is an optional stacked theta on the solver's scale.
    M1Fit fit(const PenaltySpec& pen, const Eigen::VectorXd* warm = nullptr, double warm_intercept = 0.0);

    /// The weighted lasso actually solved at `pen` (weights and lambda set).
    const WeightedLassoProblem& problem_at(const PenaltySpec& pen);

    const StackedProblem& stacked() const noexcept { return stacked_; }
    int strata() const noexcept { return stacked_.layout.strata; }
    const SolverConfig& config() const noexcept { return cfg_; }

private:
    void configure(const PenaltySpec& pen);
    void canonicalize(const PenaltySpec& pen, Eigen::VectorXd& theta) const;

    StackedProblem stacked_;
    Eigen::VectorXd base_weights_;  // 1, or infinite for excluded columns
    Eigen::VectorXd multipliers_;   // adaptive factors, 1 for plain M1
    std::optional<GramCache> gram_;
    SolverConfig cfg_;
};

M1Fit fit_m1(const StratifiedDataset& data, const PenaltySpec& pen, const StackOptions& opts = {},
             const SolverConfig& cfg = {});

M1Fit fit_m1_adaptive(const StratifiedDataset& data, const PenaltySpec& pen, const CoefMatrix& initial, double rho,
                      const StackOptions& opts = {}, const SolverConfig& cfg = {});

struct RelaxSpec {
    std::vector<double> grid{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    void validate() const;
};

struct RelaxedPoint {
    double phi = 1.0;
    M1Fit fit;
    std::string warning;  // set when the phi = 0 refit is singular
};

/// Refits restricted to the support of the M1 solution at (phi lambda1, phi lambda2),
/// for each phi of the grid; phi = 1 returns the M1 fit itself. Points come back
/// in the order of `relax.grid`.
std::vector<RelaxedPoint> fit_m1_relaxed(const StratifiedDataset& data, const PenaltySpec& pen,
                                         const RelaxSpec& relax = {}, const StackOptions& opts = {},
                                         const SolverConfig& cfg = {});

/// Joint objective sum_k ||y_k - X_k(common + dev_k)||^2/(2n) + lambda1 ||common||_1
/// + sum_k lambda2_k ||dev_k||_1 (intercepts are unpenalized here).
double m1_objective(const StratifiedDataset& data, const PenaltySpec& pen, const CoefDecomposition& dec);

SparseMatrix select_columns(const SparseMatrix& m, const std::vector<int>& cols);

} // namespace strata
