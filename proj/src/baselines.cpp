#include "strata/baselines.hpp"

#include <cmath>
#include <string>

#include "strata/error.hpp"

namespace strata {

namespace {

WeightedLassoProblem lasso_problem(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, Loss loss, double lambda,
                                   bool intercept)
{
    WeightedLassoProblem pr;
    pr.design = x.sparseView();
    pr.response = y;
    pr.weights = Eigen::VectorXd::Ones(x.cols());
    pr.lambda = lambda;
    pr.loss = loss;
    pr.unpenalized_intercept = intercept;
    return pr;
}

FitResult solve_dense(const WeightedLassoProblem& pr, const SolverConfig& cfg)
{
    if (pr.loss == Loss::linear && pr.cols() + 1 <= cfg.covariance_max_columns) {
        const GramCache gram = make_gram(pr);
        return solve(pr, cfg, SolveHints{nullptr, 0.0, &gram});
    }
    return solve(pr, cfg);
}

} // namespace

BaselineFit fit_indep(const StratifiedDataset& data, const std::vector<double>& lambda, const SolverConfig& cfg,
                      bool intercept)
{
    const int K = data.strata();
    if (static_cast<int>(lambda.size()) != K) throw DimensionError("one lambda per stratum is required");
    const double n = data.rows();
    BaselineFit out;
    out.coef.B = Eigen::MatrixXd::Zero(data.features(), K);
    if (intercept) out.coef.intercepts = Eigen::VectorXd::Zero(K);
    for (int k = 0; k < K; ++k) {
        if (!(lambda[k] >= 0.0) || !std::isfinite(lambda[k])) throw InvalidArgument("lambda must be finite and >= 0");
        const auto& s = data.stratum(k);
        // ||r||^2/(2n) + l|b| = (n_k/n) * (||r||^2/(2n_k) + l (n/n_k) |b|)
        const double share = s.y.size() / n;
        const auto pr = lasso_problem(s.x, s.y, data.loss(), lambda[k] / share, intercept);
        try {
            out.fits.push_back(solve_dense(pr, cfg));
        } catch (const ConvergenceError& e) {
            throw ConvergenceError("stratum " + std::to_string(k) + ": " + e.what(), e.best_iterate(), e.residual());
        }
        const FitResult& f = out.fits.back();
        out.coef.B.col(k) = f.theta;
        if (intercept) out.coef.intercepts(k) = f.intercept;
        out.objective += share * f.objective;
    }
    return out;
}

BaselineFit fit_ident(const StratifiedDataset& data, double lambda, const SolverConfig& cfg, bool intercept)
{
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidArgument("lambda must be finite and >= 0");
    const int K = data.strata();
    const auto pr = lasso_problem(data.pooled_x(), data.pooled_y(), data.loss(), lambda, intercept);
    BaselineFit out;
    out.fits.push_back(solve_dense(pr, cfg));
    const FitResult& f = out.fits.back();
    out.coef.B = f.theta.replicate(1, K);
    if (intercept) out.coef.intercepts = Eigen::VectorXd::Constant(K, f.intercept);
    out.objective = f.objective;
    return out;
}

AdaptiveWeights inter_weights(int K, int p, int reference)
{
    if (reference < 0 || reference >= K) throw InvalidArgument("reference stratum out of range");
    AdaptiveWeights star;
    star.rho = 0.0;
    star.references.assign(p, reference);
    star.w = Eigen::MatrixXd::Ones(K, p);
    star.nu = Eigen::MatrixXd::Ones(K, p);
    star.nu.row(reference).setConstant(kInf);
    return star;
}

BaselineFit fit_inter(const StratifiedDataset& data, int reference, const PenaltySpec& pen, const SolverConfig& cfg)
{
    const int K = data.strata();
    const int p = data.features();
    if (reference < 0 || reference >= K) throw InvalidArgument("reference stratum out of range");
    pen.validate(K);
    M1Estimator est(data, inter_weights(K, p, reference), {}, cfg);
    M1Fit m = est.fit(pen);
    BaselineFit out;
    out.coef = m.coef;
    out.objective = m.fit.objective;
    out.fits.push_back(std::move(m.fit));
    return out;
}

} // namespace strata
