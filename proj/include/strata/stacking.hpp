#pragma once

#include <vector>

#include "strata/dataset.hpp"
#include "strata/wlasso.hpp"

namespace strata {

enum class InterceptMode {
    none,
    penalized_common,    // a ones column in every block: common and deviation intercepts penalized
    unpenalized_common,  // free common intercept, penalized deviation intercepts
};

const char* to_string(InterceptMode mode);
InterceptMode intercept_mode_from_string(const std::string& name);

struct StackOptions {
    InterceptMode intercept_mode = InterceptMode::none;
    bool standardize_stacked = false;
    /// mu_k = lambda_{2,k} / lambda_1, one per stratum.
    std::vector<double> ratios;
    /// Guard on the number of stacked coefficient columns.
    long max_columns = 5'000'000;

    static StackOptions uniform(int strata, double mu, InterceptMode mode = InterceptMode::none);
};

/// Column layout of the stacked design: K + 1 blocks of `block_width` columns,
/// block 0 holding the common effect and block k + 1 the deviation of stratum k.
/// With a block intercept the first column of a block is its intercept.
struct StackLayout {
    int p = 0;
    int strata = 0;
    bool common_block_intercept = false;
    bool deviation_block_intercept = false;
    bool solver_intercept = false;  // the common intercept is the solver's free intercept

    int common_width() const noexcept { return p + (common_block_intercept ? 1 : 0); }
    int deviation_width() const noexcept { return p + (deviation_block_intercept ? 1 : 0); }
    int columns() const noexcept { return common_width() + strata * deviation_width(); }
    /// Column of covariate j in block b (0 = common, k + 1 = deviation of stratum k).
    int column(int block, int j) const noexcept;
    /// Column of the block intercept, or -1 when the block has none.
    int intercept_column(int block) const noexcept;

    static StackLayout for_mode(int p, int strata, InterceptMode mode);
};

struct StackedProblem {
    WeightedLassoProblem problem;
    StackLayout layout;
    /// Divisor applied to each design column (all ones unless standardized).
    /// The solver's theta_j equals scale_j times the original-scale coefficient.
    Eigen::VectorXd column_scale;

    /// Map a solution on the (possibly standardized) design back to original scale.
    Eigen::VectorXd unscale(const Eigen::VectorXd& theta) const;
};

StackedProblem build_stacked(const StratifiedDataset& data, const StackOptions& opts);

/// Weight vector (1_p, mu_1 1_p, ..., mu_K 1_p), intercept columns included.
Eigen::VectorXd stacked_weights(const StackLayout& layout, const std::vector<double>& ratios);

/// Split theta (original scale) into common effect and per-stratum deviations.
/// `intercept` is the solver's free intercept, if any.
CoefDecomposition unstack(const Eigen::VectorXd& theta, double intercept, const StackLayout& layout);

/// Inverse of unstack: theta laid out as build_stacked's columns.
Eigen::VectorXd stack_layout(const CoefDecomposition& dec, const StackLayout& layout);

} // namespace strata
