#include "strata/median.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "strata/error.hpp"

namespace strata {

double Interval::closest_to_zero() const noexcept
{
    if (lo <= 0.0 && hi >= 0.0) return 0.0;
    return lo > 0.0 ? lo : hi;
}

Interval median_set(std::span<const double> values)
{
    if (values.empty()) throw InvalidArgument("median of an empty set");
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    const std::size_t K = v.size();
    if (K % 2 == 1) return {v[K / 2], v[K / 2]};
    return {v[K / 2 - 1], v[K / 2]};
}

Interval weighted_median_set(std::span<const double> points, std::span<const double> weights)
{
    if (points.size() != weights.size()) throw DimensionError("weighted median: size mismatch");
    std::vector<std::size_t> idx;
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (!(weights[i] >= 0.0) || std::isinf(weights[i]))
            throw InvalidArgument("weighted median: weights must be finite and nonnegative");
        if (weights[i] > 0.0) {
            idx.push_back(i);
            total += weights[i];
        }
    }
    if (idx.empty()) throw InvalidArgument("weighted median: total weight is zero");
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return points[a] < points[b]; });
    const double half = 0.5 * total;
    const double eps = 1e-12 * total;
    double cum = 0.0;
    for (std::size_t r = 0; r < idx.size(); ++r) {
        cum += weights[idx[r]];
        if (cum < half - eps) continue;
        const double x = points[idx[r]];
        if (cum <= half + eps && r + 1 < idx.size()) return {x, points[idx[r + 1]]};
        return {x, x};
    }
    const double last = points[idx.back()];
    return {last, last};
}

double wsmedian_objective(std::span<const double> values, std::span<const double> mu, double b)
{
    double g = std::abs(b);
    for (std::size_t k = 0; k < values.size(); ++k)
        if (std::isfinite(mu[k]) && mu[k] > 0.0) g += mu[k] * std::abs(values[k] - b);
    return g;
}

Interval wsmedian_set(std::span<const double> values, std::span<const double> mu)
{
    if (values.empty() || values.size() != mu.size()) throw InvalidArgument("wsmedian: need K >= 1 matching weights");
    std::vector<double> pts{0.0}, wts{1.0}, inf_vals;
    for (std::size_t k = 0; k < values.size(); ++k) {
        if (!(mu[k] >= 0.0)) throw InvalidArgument("wsmedian: weights must be nonnegative");
        if (std::isinf(mu[k])) {
            inf_vals.push_back(values[k]);
        } else {
            pts.push_back(values[k]);
            wts.push_back(mu[k]);
        }
    }
    const Interval finite = weighted_median_set(pts, wts);
    if (inf_vals.empty()) return finite;
    const Interval dominant = median_set(inf_vals);
    // The finite part is convex, so its minimizer over `dominant` is the
    // intersection when nonempty, otherwise the endpoint facing `finite`.
    const double lo = std::max(dominant.lo, finite.lo);
    const double hi = std::min(dominant.hi, finite.hi);
    if (lo <= hi) return {lo, hi};
    if (finite.lo > dominant.hi) return {dominant.hi, dominant.hi};
    return {dominant.lo, dominant.lo};
}

double wsmedian(std::span<const double> values, std::span<const double> mu)
{
    return wsmedian_set(values, mu).closest_to_zero();
}

int select_reference(const CoefMatrix& initial, int j)
{
    if (initial.strata() < 1) throw InvalidArgument("select_reference: no strata");
    std::vector<double> row(initial.strata());
    for (int k = 0; k < initial.strata(); ++k) row[k] = initial.B(j, k);
    const Interval m = median_set(row);
    for (int k = 0; k < initial.strata(); ++k)
        if (m.contains(row[k])) return k;
    return 0;  // unreachable: an order statistic is always a member
}

std::vector<int> select_references(const CoefMatrix& initial)
{
    std::vector<int> refs(initial.features());
    for (int j = 0; j < initial.features(); ++j) refs[j] = select_reference(initial, j);
    return refs;
}

} // namespace strata
