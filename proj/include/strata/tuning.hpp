#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "strata/dataset.hpp"
#include "strata/m1.hpp"
#include "strata/stacking.hpp"
#include "strata/wlasso.hpp"

namespace strata {

/// One tuning point. For M1-type methods lambda2 applies to every deviation;
/// for M2 both are uniform across strata; single-lambda methods read lambda1.
struct GridPoint {
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    double phi = 1.0;  // relaxation factor, read by the relaxed M1 fitter only
};

/// Each point repeated once per phi (phi varying fastest).
std::vector<GridPoint> expand_phi(const std::vector<GridPoint>& points, const std::vector<double>& phis);

/// Ratios r = lambda1 / lambda2 ascending, and for each ratio its lambda2 values
/// in decreasing order from lambda2_max(r).
struct RatioGrid {
    std::vector<double> ratios;
    std::vector<std::vector<double>> lambda2;
    /// Ratio-major flattening, lambda2 decreasing within a ratio.
    std::vector<GridPoint> points() const;
};

struct RatioGridOptions {
    int n_ratios = 50;
    int n_lambda = 50;
    double min_ratio_factor = 1e-3;  // smallest ratio = K * factor
    double lambda_factor = 1e-3;     // smallest lambda2 = lambda2_max / 1000
    StackOptions stack;              // intercept handling; ratios are ignored
};

/// Throws DegenerateProblem when lambda2_max vanishes (nothing to select).
RatioGrid build_ratio_grid(const StratifiedDataset& data, const RatioGridOptions& opts = {},
                           const AdaptiveWeights* adaptive = nullptr);

/// n values from hi down to hi * factor, equally spaced on a log scale.
std::vector<double> log_grid(double hi, double factor, int n);

/// Smallest lambda2 at which `fused(lambda1, lambda2)` holds: halving from `cap`
/// down to cap / 2^60, then 20 bisection steps inside the last factor-2 bracket.
/// Returns the floor when even that is fused; throws NotFound when the cap is not.
double search_lambda2_max(const std::function<bool(double, double)>& fused, double lambda1, double cap = 1e9);

/// lambda2 rows per lambda1 (decreasing), for M2-type methods.
struct M2Grid {
    std::vector<double> lambda1;
    std::vector<std::vector<double>> lambda2;
    std::vector<GridPoint> points() const;
};

struct M2GridOptions {
    int n_lambda1 = 10;
    int n_lambda2 = 10;
    double lambda_factor = 1e-3;
    bool intercept = false;
    SolverConfig solver;
};

/// lambda1 from the decoupled (lambda2 = 0) threshold, lambda2_max per lambda1
/// from search_lambda2_max on "all columns of B equal".
M2Grid build_m2_grid(const StratifiedDataset& data, const M2GridOptions& opts = {},
                     const AdaptiveWeights* adaptive = nullptr);

/// Smallest lambda with an all-zero pooled lasso.
double ident_lambda_max(const StratifiedDataset& data, bool intercept = false);

/// A group of (stratum, covariate) cells sharing one unpenalized value in the
/// refit; covariate -1 is the stratum's intercept.
struct FreeParameter {
    std::vector<std::pair<int, int>> cells;
    bool operator==(const FreeParameter&) const = default;
    auto operator<=>(const FreeParameter&) const = default;
};
using Structure = std::vector<FreeParameter>;

/// Support of the stacked theta (original scale): a common column frees its
/// covariate in every stratum, a deviation column only in its own stratum.
Structure stacked_structure(const Eigen::VectorXd& theta, const StackLayout& layout);
/// Groups of equal nonzero values within each row of B (plus one intercept per stratum).
Structure fused_structure(const CoefMatrix& coef, double rel_tol = 1e-9);
/// Every nonzero entry of B on its own (plus one intercept per stratum).
Structure support_structure(const CoefMatrix& coef);
/// Pooled fit: each nonzero covariate is one value shared by all strata.
Structure ident_structure(const CoefMatrix& coef, bool intercept);
/// Reference coefficient frees the covariate everywhere, each difference to it one cell.
Structure inter_structure(const CoefMatrix& coef, int reference);

struct GridFit {
    GridPoint point;
    CoefMatrix coef;
    Structure structure;
    int df = 0;  // structure.size()
};

/// Fits a method along `points` (in order, warm-starting where it can).
using GridFitter = std::function<std::vector<GridFit>(const StratifiedDataset&, const std::vector<GridPoint>&)>;

GridFitter m1_fitter(StackOptions opts = {}, SolverConfig cfg = {});
/// Adaptive weights are rebuilt from initial_estimates of whatever data is passed.
GridFitter m1_adaptive_fitter(double rho = 1.0, StackOptions opts = {}, SolverConfig cfg = {});
/// Relaxed M1: points sharing (lambda1, lambda2) consecutively are refitted on the
/// support of one M1 fit, at each point's phi.
GridFitter m1_relaxed_fitter(StackOptions opts = {}, SolverConfig cfg = {});
GridFitter m2_fitter(bool intercept = false, SolverConfig cfg = {});
GridFitter m2_adaptive_fitter(double rho = 1.0, bool intercept = false, SolverConfig cfg = {});
/// lambda = point.lambda1.
GridFitter indep_fitter(bool intercept = false, SolverConfig cfg = {});
GridFitter ident_fitter(bool intercept = false, SolverConfig cfg = {});
GridFitter inter_fitter(int reference, SolverConfig cfg = {});

/// Unpenalized refit with the structure's equality constraints.
struct Refit {
    CoefMatrix coef;
    double loss = 0.0;   // RSS, or deviance for logistic loss
    double score = 0.0;  // BIC; +inf when singular
    bool singular = false;
};
Refit refit_structure(const StratifiedDataset& data, const Structure& structure);

struct SelectionScore {
    std::string method;  // "cv" or "two_step_bic"
    double value = 0.0;
    std::vector<double> fold_errors;
};

struct Selection {
    std::size_t index = 0;  // winner's position in the grid
    GridFit fit;            // penalized fit at the winner, on the full data
    SelectionScore score;
    std::vector<double> scores;  // one per grid point
    std::vector<int> df;         // one per grid point
    CoefMatrix refit;            // two_step_bic only
};

/// Score n log(RSS/n) + df log n (deviance + df log n for logistic) of the
/// refit on each grid point's structure; ties go to smaller df, then larger lambda2.
Selection two_step_bic(const StratifiedDataset& data, const GridFitter& fitter, const std::vector<GridPoint>& grid);

/// Stratified `folds`-fold CV of the mean held-out loss (squared error or
/// deviance per observation). Fold assignment is seeded per stratum.
Selection cross_validate(const StratifiedDataset& data, const GridFitter& fitter, const std::vector<GridPoint>& grid,
                         int folds = 10, std::uint64_t seed = 1);

/// fold[k][i] in [0, folds) for row i of stratum k.
std::vector<std::vector<int>> fold_assignment(const StratifiedDataset& data, int folds, std::uint64_t seed);

} // namespace strata
