#pragma once

#include <span>
#include <vector>

#include "strata/dataset.hpp"

namespace strata {

/// Closed interval [lo, hi]; lo == hi for a unique median.
struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    bool contains(double x, double eps = 0.0) const noexcept { return x >= lo - eps && x <= hi + eps; }
    double midpoint() const noexcept { return 0.5 * (lo + hi); }
    /// Element of smallest absolute value (the lower endpoint on a tie).
    double closest_to_zero() const noexcept;
};

/// Set of medians of `values`: the central order statistic for odd size,
/// [v_(K/2), v_(K/2+1)] for even size.
Interval median_set(std::span<const double> values);

/// Minimizer set of b -> sum_i weights_i |points_i - b| for finite nonnegative
/// weights with a positive total.
Interval weighted_median_set(std::span<const double> points, std::span<const double> weights);

/// g(b) = |b| + sum_k mu_k |values_k - b| restricted to finite mu.
double wsmedian_objective(std::span<const double> values, std::span<const double> mu, double b);

/// Minimizer set of g(b) = |b| + sum_k mu_k |values_k - b|. Infinite mu_k dominate
/// all finite mass: the result lies in the median set of the infinite-weight
/// values and minimizes the finite part there.
Interval wsmedian_set(std::span<const double> values, std::span<const double> mu);

/// Weighted-and-shrunk median: the element of wsmedian_set closest to zero.
double wsmedian(std::span<const double> values, std::span<const double> mu);

/// Reference stratum for covariate j: smallest k whose initial estimate lies in
/// the median set of row j (0-based index).
int select_reference(const CoefMatrix& initial, int j);
std::vector<int> select_references(const CoefMatrix& initial);

} // namespace strata
