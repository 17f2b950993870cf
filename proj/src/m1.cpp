#include "strata/m1.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "strata/error.hpp"
#include "strata/median.hpp"

namespace strata {

PenaltySpec PenaltySpec::uniform(int strata, double lambda1, double lambda2)
{
    return PenaltySpec{lambda1, std::vector<double>(strata, lambda2)};
}

void PenaltySpec::validate(int strata) const
{
    if (static_cast<int>(lambda2.size()) != strata) throw DimensionError("one lambda2 per stratum is required");
    if (!(lambda1 >= 0.0) || !std::isfinite(lambda1)) throw InvalidArgument("lambda1 must be finite and >= 0");
    for (double l : lambda2)
        if (!(l >= 0.0) || !std::isfinite(l)) throw InvalidArgument("lambda2 must be finite and >= 0");
}

namespace {

double inverse_power(double magnitude, double rho)
{
    if (rho == 0.0) return 1.0;
    if (magnitude == 0.0) return kInf;
    return 1.0 / std::pow(magnitude, rho);
}

double combine(double a, double b, double c)
{
    if (std::isinf(a) || std::isinf(b) || std::isinf(c)) return kInf;
    return a * b * c;
}

} // namespace

AdaptiveWeights AdaptiveWeights::from_initial(const CoefMatrix& initial, double rho)
{
    if (!(rho >= 0.0) || !std::isfinite(rho)) throw InvalidArgument("rho must be finite and >= 0");
    if (!initial.B.allFinite()) throw InvalidArgument("initial estimates must be finite");
    const int K = initial.strata();
    const int p = initial.features();
    AdaptiveWeights a;
    a.rho = rho;
    a.initial = initial;
    a.references = select_references(initial);
    a.w.resize(K, p);
    a.nu.resize(K, p);
    for (int j = 0; j < p; ++j) {
        const double center = initial.B(j, a.references[j]);
        for (int k = 0; k < K; ++k) {
            a.w(k, j) = inverse_power(std::abs(initial.B(j, k)), rho);
            a.nu(k, j) = k == a.references[j] ? kInf : inverse_power(std::abs(initial.B(j, k) - center), rho);
        }
    }
    return a;
}

CoefMatrix initial_estimates(const StratifiedDataset& data, bool intercept)
{
    const int K = data.strata();
    const int p = data.features();
    CoefMatrix out{Eigen::MatrixXd::Zero(p, K), intercept ? Eigen::VectorXd::Zero(K) : Eigen::VectorXd()};
    for (int k = 0; k < K; ++k) {
        const auto& s = data.stratum(k);
        if (data.loss() == Loss::linear) {
            Eigen::MatrixXd z(s.x.rows(), p + (intercept ? 1 : 0));
            z.leftCols(p) = s.x;
            if (intercept) z.col(p).setOnes();
            const Eigen::VectorXd b = z.completeOrthogonalDecomposition().solve(s.y);
            out.B.col(k) = b.head(p);
            if (intercept) out.intercepts(k) = b(p);
        } else {
            WeightedLassoProblem pr;
            pr.design = s.x.sparseView();
            pr.response = s.y;
            pr.weights = Eigen::VectorXd::Ones(p);
            pr.lambda = 0.0;
            pr.loss = Loss::logistic;
            pr.unpenalized_intercept = intercept;
            const FitResult f = solve(pr);
            out.B.col(k) = f.theta;
            if (intercept) out.intercepts(k) = f.intercept;
        }
    }
    return out;
}

M1Estimator::M1Estimator(const StratifiedDataset& data, StackOptions opts, SolverConfig cfg) : cfg_(cfg)
{
    opts.ratios.assign(data.strata(), 1.0);
    stacked_ = build_stacked(data, opts);
    base_weights_ = stacked_.problem.weights;
    multipliers_ = Eigen::VectorXd::Ones(stacked_.layout.columns());
}

M1Estimator::M1Estimator(const StratifiedDataset& data, const AdaptiveWeights& adaptive, StackOptions opts,
                         SolverConfig cfg)
    : M1Estimator(data, std::move(opts), cfg)
{
    const StackLayout& L = stacked_.layout;
    if (adaptive.w.rows() != L.strata || adaptive.w.cols() != L.p || adaptive.nu.rows() != L.strata ||
        adaptive.nu.cols() != L.p || static_cast<int>(adaptive.references.size()) != L.p)
        throw DimensionError("adaptive weights do not match the dataset");
    for (int j = 0; j < L.p; ++j) {
        multipliers_(L.column(0, j)) = adaptive.w(adaptive.references[j], j);
        for (int k = 0; k < L.strata; ++k) multipliers_(L.column(k + 1, j)) = adaptive.nu(k, j);
    }
}

void M1Estimator::configure(const PenaltySpec& pen)
{
    const StackLayout& L = stacked_.layout;
    pen.validate(L.strata);
    double scale = pen.lambda1;
    if (!(scale > 0.0)) scale = *std::max_element(pen.lambda2.begin(), pen.lambda2.end());
    WeightedLassoProblem& pr = stacked_.problem;
    pr.lambda = scale;
    auto factor = [&](double l) { return scale > 0.0 ? l / scale : 1.0; };
    const double common = factor(pen.lambda1);
    for (int c = 0; c < L.common_width(); ++c) pr.weights(c) = combine(base_weights_(c), multipliers_(c), common);
    for (int k = 0; k < L.strata; ++k) {
        const double dev = factor(pen.lambda2[k]);
        const int c0 = L.common_width() + k * L.deviation_width();
        for (int c = c0; c < c0 + L.deviation_width(); ++c)
            pr.weights(c) = combine(base_weights_(c), multipliers_(c), dev);
    }
}

void M1Estimator::canonicalize(const PenaltySpec& pen, Eigen::VectorXd& theta) const
{
    // For fixed columns B the common effect only has to minimize the shrunk-median
    // criterion; inside a flat stretch pick the value closest to zero.
    const StackLayout& L = stacked_.layout;
    if (!(multipliers_.array() == 1.0).all() || !(stacked_.column_scale.array() == 1.0).all()) return;
    if (pen.lambda1 == 0.0 && *std::max_element(pen.lambda2.begin(), pen.lambda2.end()) == 0.0) return;
    std::vector<double> mu(L.strata), v(L.strata);
    for (int k = 0; k < L.strata; ++k) mu[k] = pen.lambda1 > 0.0 ? pen.lambda2[k] / pen.lambda1 : kInf;
    for (int j = 0; j < L.p; ++j) {
        bool finite = std::isfinite(base_weights_(L.column(0, j)));
        for (int k = 0; k < L.strata; ++k) finite = finite && std::isfinite(base_weights_(L.column(k + 1, j)));
        if (!finite) continue;
        const double c = theta(L.column(0, j));
        for (int k = 0; k < L.strata; ++k) v[k] = c + theta(L.column(k + 1, j));
        const double m = wsmedian(v, mu);
        if (m == c) continue;
        theta(L.column(0, j)) = m;
        for (int k = 0; k < L.strata; ++k) theta(L.column(k + 1, j)) = v[k] - m;
    }
}

const WeightedLassoProblem& M1Estimator::problem_at(const PenaltySpec& pen)
{
    configure(pen);
    return stacked_.problem;
}

M1Fit M1Estimator::fit(const PenaltySpec& pen, const Eigen::VectorXd* warm, double warm_intercept)
{
    configure(pen);
    const WeightedLassoProblem& pr = stacked_.problem;
    SolveHints hints{warm, warm_intercept, nullptr};
    if (pr.loss == Loss::linear && pr.cols() + 1 <= cfg_.covariance_max_columns) {
        if (!gram_) gram_ = make_gram(pr);
        hints.gram = &*gram_;
    }
    M1Fit out;
    out.fit = solve(pr, cfg_, hints);
    canonicalize(pen, out.fit.theta);
    out.theta = stacked_.unscale(out.fit.theta);
    out.decomposition = unstack(out.theta, out.fit.intercept, stacked_.layout);
    out.coef = reconstruct(out.decomposition);
    return out;
}

M1Fit fit_m1(const StratifiedDataset& data, const PenaltySpec& pen, const StackOptions& opts, const SolverConfig& cfg)
{
    M1Estimator est(data, opts, cfg);
    return est.fit(pen);
}

M1Fit fit_m1_adaptive(const StratifiedDataset& data, const PenaltySpec& pen, const CoefMatrix& initial, double rho,
                      const StackOptions& opts, const SolverConfig& cfg)
{
    if (initial.features() != data.features() || initial.strata() != data.strata())
        throw DimensionError("initial estimates do not match the dataset");
    M1Estimator est(data, AdaptiveWeights::from_initial(initial, rho), opts, cfg);
    return est.fit(pen);
}

void RelaxSpec::validate() const
{
    if (grid.empty()) throw InvalidArgument("relaxation grid is empty");
    for (double phi : grid)
        if (!(phi >= 0.0 && phi <= 1.0)) throw InvalidArgument("relaxation phi must lie in [0, 1]");
}

SparseMatrix select_columns(const SparseMatrix& m, const std::vector<int>& cols)
{
    std::vector<Eigen::Triplet<double>> trip;
    for (std::size_t c = 0; c < cols.size(); ++c)
        for (SparseMatrix::InnerIterator it(m, cols[c]); it; ++it)
            trip.emplace_back(static_cast<int>(it.index()), static_cast<int>(c), it.value());
    SparseMatrix out(m.rows(), static_cast<Eigen::Index>(cols.size()));
    out.setFromTriplets(trip.begin(), trip.end());
    out.makeCompressed();
    return out;
}

std::vector<RelaxedPoint> fit_m1_relaxed(const StratifiedDataset& data, const PenaltySpec& pen,
                                         const RelaxSpec& relax, const StackOptions& opts, const SolverConfig& cfg)
{
    relax.validate();
    M1Estimator est(data, opts, cfg);
    const M1Fit base = est.fit(pen);
    const WeightedLassoProblem& full = est.problem_at(pen);
    const StackedProblem& stacked = est.stacked();

    std::vector<int> support;
    for (int c = 0; c < full.cols(); ++c)
        if (base.fit.theta(c) != 0.0) support.push_back(c);

    std::vector<std::size_t> order(relax.grid.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return relax.grid[a] > relax.grid[b]; });

    std::vector<RelaxedPoint> out(relax.grid.size());
    if (support.empty()) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = {relax.grid[i], base, {}};
        return out;
    }

    WeightedLassoProblem restricted;
    restricted.design = select_columns(full.design, support);
    restricted.response = full.response;
    restricted.loss = full.loss;
    restricted.unpenalized_intercept = full.unpenalized_intercept;
    restricted.weights.resize(static_cast<Eigen::Index>(support.size()));
    for (std::size_t c = 0; c < support.size(); ++c) restricted.weights(c) = full.weights(support[c]);

    Eigen::VectorXd warm(static_cast<Eigen::Index>(support.size()));
    for (std::size_t c = 0; c < support.size(); ++c) warm(c) = base.fit.theta(support[c]);
    double warm_b = base.fit.intercept;

    for (std::size_t idx : order) {
        const double phi = relax.grid[idx];
        RelaxedPoint& pt = out[idx];
        pt.phi = phi;
        if (phi == 1.0) {
            pt.fit = base;
            continue;
        }
        restricted.lambda = phi * full.lambda;
        if (phi == 0.0 && restricted.loss == Loss::linear) {
            // Least-squares (least-norm when singular) start; the solver then only certifies it.
            const int s = restricted.cols();
            Eigen::MatrixXd z(restricted.rows(), s + (restricted.unpenalized_intercept ? 1 : 0));
            z.leftCols(s) = Eigen::MatrixXd(restricted.design);
            if (restricted.unpenalized_intercept) z.col(s).setOnes();
            const auto cod = z.completeOrthogonalDecomposition();
            const Eigen::VectorXd b = cod.solve(restricted.response);
            if (cod.rank() < z.cols()) pt.warning = "singular restricted design at phi = 0; least-norm solution";
            warm = b.head(s);
            warm_b = restricted.unpenalized_intercept ? b(s) : 0.0;
        }
        const FitResult r = solve(restricted, cfg, SolveHints{&warm, warm_b, nullptr});
        warm = r.theta;
        warm_b = r.intercept;

        M1Fit f;
        f.fit = r;
        f.fit.theta = Eigen::VectorXd::Zero(full.cols());
        for (std::size_t c = 0; c < support.size(); ++c) f.fit.theta(support[c]) = r.theta(c);
        f.theta = stacked.unscale(f.fit.theta);
        f.decomposition = unstack(f.theta, r.intercept, stacked.layout);
        f.coef = reconstruct(f.decomposition);
        pt.fit = std::move(f);
    }
    return out;
}

double m1_objective(const StratifiedDataset& data, const PenaltySpec& pen, const CoefDecomposition& dec)
{
    pen.validate(data.strata());
    const CoefMatrix coef = reconstruct(dec);
    double loss = 0.0;
    for (int k = 0; k < data.strata(); ++k) {
        const Eigen::VectorXd eta = predict(data, coef, k);
        const auto& y = data.stratum(k).y;
        if (data.loss() == Loss::linear) {
            loss += 0.5 * (y - eta).squaredNorm();
        } else {
            for (Eigen::Index i = 0; i < y.size(); ++i)
                loss += std::max(eta(i), 0.0) + std::log1p(std::exp(-std::abs(eta(i)))) - y(i) * eta(i);
        }
    }
    double penalty = pen.lambda1 * dec.common.lpNorm<1>();
    for (int k = 0; k < data.strata(); ++k) penalty += pen.lambda2[k] * dec.deviations[k].lpNorm<1>();
    return loss / data.rows() + penalty;
}

} // namespace strata
