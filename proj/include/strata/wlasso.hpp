#pragma once

#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "strata/dataset.hpp"

namespace strata {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Minimize L(theta) + lambda * sum_j w_j |theta_j| where L is the squared loss
/// ||y - b - X theta||^2 / (2n) or the mean logistic negative log-likelihood.
/// An infinite weight pins its coordinate to exactly zero; a zero weight leaves it
/// unpenalized. With `unpenalized_intercept` an implicit free intercept b is fitted.
struct WeightedLassoProblem {
    SparseMatrix design;
    Eigen::VectorXd response;
    Eigen::VectorXd weights;
    double lambda = 0.0;
    Loss loss = Loss::linear;
    bool unpenalized_intercept = false;

    int rows() const noexcept { return static_cast<int>(design.rows()); }
    int cols() const noexcept { return static_cast<int>(design.cols()); }
    /// Throws InvalidArgument / DimensionError on violated invariants.
    void validate() const;
};

struct SolverConfig {
    double tol = 1e-7;        // bound on the coordinatewise KKT residual
    int max_iter = 100000;    // cap on coordinate sweeps
    bool screening = true;    // iterate on the active set between full sweeps
    bool trace = false;       // record the objective after every sweep
    int covariance_max_columns = 2000;  // Gram-based updates up to this many columns
};

struct FitResult {
    Eigen::VectorXd theta;
    double intercept = 0.0;
    double objective = 0.0;
    double kkt_residual = 0.0;
    int iterations = 0;
    int df = 0;
    std::vector<double> objective_trace;
};

/// Precomputed X'X/n, X'y/n and y'y/n (intercept column appended last when the
/// problem has one). Depends on design and response only, so one cache serves a
/// whole lambda/weight path.
struct GramCache {
    Eigen::MatrixXd gram;
    Eigen::VectorXd xty;
    double yty = 0.0;
};

GramCache make_gram(const WeightedLassoProblem& problem);

struct SolveHints {
    const Eigen::VectorXd* theta = nullptr;  // warm start
    double intercept = 0.0;
    const GramCache* gram = nullptr;
};

/// Coordinate descent with active-set iterations; converges on the KKT residual.
/// Throws ConvergenceError (carrying the best iterate) when max_iter is reached.
FitResult solve(const WeightedLassoProblem& problem, const SolverConfig& cfg = {}, const SolveHints& hints = {});

/// Smallest lambda for which theta = 0 (with the intercept-only fit when the
/// problem has an intercept) is optimal. Zero-weight coordinates are ignored.
double lambda_max(const WeightedLassoProblem& problem);

double soft_threshold(double z, double t);

double objective(const WeightedLassoProblem& problem, const Eigen::VectorXd& theta, double intercept = 0.0);

/// Gradient of the smooth loss with respect to theta.
Eigen::VectorXd loss_gradient(const WeightedLassoProblem& problem, const Eigen::VectorXd& theta,
                              double intercept = 0.0);

/// Exact gradient of the mean logistic negative log-likelihood.
Eigen::VectorXd logistic_gradient(const Eigen::VectorXd& theta, const WeightedLassoProblem& problem,
                                  double intercept = 0.0);

/// Largest coordinatewise violation of the optimality conditions, recomputed from
/// the design (independent of the solver state). Includes the intercept's
/// stationarity when the problem has one.
double kkt_residual(const WeightedLassoProblem& problem, const Eigen::VectorXd& theta, double intercept = 0.0);

/// Optional process-wide callback run after every successful solve.
using SolveObserver = std::function<void(const WeightedLassoProblem&, const FitResult&)>;
void set_solve_observer(SolveObserver observer);

} // namespace strata
