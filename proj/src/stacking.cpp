#include "strata/stacking.hpp"

#include <cmath>

#include "strata/error.hpp"

namespace strata {

const char* to_string(InterceptMode mode)
{
    switch (mode) {
    case InterceptMode::none: return "none";
    case InterceptMode::penalized_common: return "penalized_common";
    case InterceptMode::unpenalized_common: return "unpenalized_common";
    }
    return "none";
}

InterceptMode intercept_mode_from_string(const std::string& name)
{
    if (name == "none") return InterceptMode::none;
    if (name == "penalized_common" || name == "penalized") return InterceptMode::penalized_common;
    if (name == "unpenalized_common" || name == "unpenalized") return InterceptMode::unpenalized_common;
    throw InvalidArgument("unknown intercept mode '" + name + "'");
}

StackOptions StackOptions::uniform(int strata, double mu, InterceptMode mode)
{
    StackOptions o;
    o.intercept_mode = mode;
    o.ratios.assign(strata, mu);
    return o;
}

int StackLayout::column(int block, int j) const noexcept
{
    if (block == 0) return (common_block_intercept ? 1 : 0) + j;
    return common_width() + (block - 1) * deviation_width() + (deviation_block_intercept ? 1 : 0) + j;
}

int StackLayout::intercept_column(int block) const noexcept
{
    if (block == 0) return common_block_intercept ? 0 : -1;
    return deviation_block_intercept ? common_width() + (block - 1) * deviation_width() : -1;
}

StackLayout StackLayout::for_mode(int p, int strata, InterceptMode mode)
{
    StackLayout l;
    l.p = p;
    l.strata = strata;
    l.common_block_intercept = mode == InterceptMode::penalized_common;
    l.deviation_block_intercept = mode != InterceptMode::none;
    l.solver_intercept = mode == InterceptMode::unpenalized_common;
    return l;
}

Eigen::VectorXd StackedProblem::unscale(const Eigen::VectorXd& theta) const
{
    return (theta.array() / column_scale.array()).matrix();
}

Eigen::VectorXd stacked_weights(const StackLayout& layout, const std::vector<double>& ratios)
{
    if (static_cast<int>(ratios.size()) != layout.strata)
        throw DimensionError("one ratio mu_k per stratum is required");
    Eigen::VectorXd w(layout.columns());
    w.head(layout.common_width()).setOnes();
    for (int k = 0; k < layout.strata; ++k)
        w.segment(layout.common_width() + k * layout.deviation_width(), layout.deviation_width())
            .setConstant(ratios[k]);
    return w;
}

StackedProblem build_stacked(const StratifiedDataset& data, const StackOptions& opts)
{
    const int K = data.strata();
    const int p = data.features();
    if (static_cast<int>(opts.ratios.size()) != K) throw DimensionError("one ratio mu_k per stratum is required");
    for (double mu : opts.ratios)
        if (!(mu > 0.0) || !std::isfinite(mu)) throw InvalidArgument("ratios mu_k must be positive and finite");

    StackedProblem out;
    out.layout = StackLayout::for_mode(p, K, opts.intercept_mode);
    const StackLayout& L = out.layout;
    if (static_cast<long>(L.columns()) > opts.max_columns)
        throw DimensionError("stacked design would have " + std::to_string(L.columns()) + " columns (cap " +
                             std::to_string(opts.max_columns) + ")");

    const int n = data.rows();
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(2) * n * (p + 1));
    Eigen::VectorXd y(n);
    int row0 = 0;
    for (int k = 0; k < K; ++k) {
        const auto& s = data.stratum(k);
        const int nk = data.rows(k);
        y.segment(row0, nk) = s.y;
        for (int i = 0; i < nk; ++i) {
            const int r = row0 + i;
            if (L.common_block_intercept) trip.emplace_back(r, L.intercept_column(0), 1.0);
            if (L.deviation_block_intercept) trip.emplace_back(r, L.intercept_column(k + 1), 1.0);
            for (int j = 0; j < p; ++j) {
                const double v = s.x(i, j);
                if (v == 0.0) continue;
                trip.emplace_back(r, L.column(0, j), v);
                trip.emplace_back(r, L.column(k + 1, j), v);
            }
        }
        row0 += nk;
    }
    WeightedLassoProblem& pr = out.problem;
    pr.design.resize(n, L.columns());
    pr.design.setFromTriplets(trip.begin(), trip.end());
    pr.design.makeCompressed();
    pr.response = std::move(y);
    pr.weights = stacked_weights(L, opts.ratios);
    pr.loss = data.loss();
    pr.unpenalized_intercept = L.solver_intercept;
    out.column_scale = Eigen::VectorXd::Ones(L.columns());

    if (opts.standardize_stacked) {
        for (int c = 0; c < L.columns(); ++c) {
            double sum = 0.0, sq = 0.0;
            for (SparseMatrix::InnerIterator it(pr.design, c); it; ++it) {
                sum += it.value();
                sq += it.value() * it.value();
            }
            const double mean = sum / n;
            const double var = std::max(0.0, sq / n - mean * mean);
            if (var > 0.0) {
                out.column_scale(c) = std::sqrt(var);
            } else {
                pr.weights(c) = kInf;  // constant column: kept in the layout, never selected
            }
        }
        for (int c = 0; c < L.columns(); ++c)
            for (SparseMatrix::InnerIterator it(pr.design, c); it; ++it) it.valueRef() /= out.column_scale(c);
    }
    return out;
}

CoefDecomposition unstack(const Eigen::VectorXd& theta, double intercept, const StackLayout& L)
{
    if (theta.size() != L.columns())
        throw DimensionError("unstack: theta has length " + std::to_string(theta.size()) + ", expected " +
                             std::to_string(L.columns()));
    CoefDecomposition dec = CoefDecomposition::zeros(L.p, L.strata);
    for (int j = 0; j < L.p; ++j) dec.common(j) = theta(L.column(0, j));
    for (int k = 0; k < L.strata; ++k)
        for (int j = 0; j < L.p; ++j) dec.deviations[k](j) = theta(L.column(k + 1, j));
    if (L.deviation_block_intercept) {
        dec.common_intercept = L.common_block_intercept ? theta(L.intercept_column(0)) : intercept;
        dec.intercept_deviations.resize(L.strata);
        for (int k = 0; k < L.strata; ++k) dec.intercept_deviations(k) = theta(L.intercept_column(k + 1));
    }
    return dec;
}

Eigen::VectorXd stack_layout(const CoefDecomposition& dec, const StackLayout& L)
{
    if (dec.features() != L.p || dec.strata() != L.strata) throw DimensionError("stack_layout: shape mismatch");
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(L.columns());
    for (int j = 0; j < L.p; ++j) theta(L.column(0, j)) = dec.common(j);
    for (int k = 0; k < L.strata; ++k)
        for (int j = 0; j < L.p; ++j) theta(L.column(k + 1, j)) = dec.deviations[k](j);
    if (L.deviation_block_intercept && dec.common_intercept) {
        if (L.common_block_intercept) theta(L.intercept_column(0)) = *dec.common_intercept;
        for (int k = 0; k < L.strata; ++k) theta(L.intercept_column(k + 1)) = dec.intercept_deviations(k);
    }
    return theta;
}

} // namespace strata
