#include "strata/wlasso.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include "strata/error.hpp"

namespace strata {

namespace {

std::mutex observer_mutex;
SolveObserver observer;

void notify(const WeightedLassoProblem& problem, const FitResult& fit)
{
    SolveObserver copy;
    {
        std::lock_guard lock(observer_mutex);
        copy = observer;
    }
    if (copy) copy(problem, fit);
}

double softplus(double eta)
{
    return std::max(eta, 0.0) + std::log1p(std::exp(-std::abs(eta)));
}

double sigmoid(double eta)
{
    if (eta >= 0) return 1.0 / (1.0 + std::exp(-eta));
    const double e = std::exp(eta);
    return e / (1.0 + e);
}

constexpr double kProbClip = 1e-5;

// Coordinates are the d design columns followed, when the problem has an
// intercept, by one implicit column of ones.
struct Layout {
    int d = 0;
    int dim = 0;
    bool intercept = false;
    Eigen::VectorXd penalty;  // lambda * w_j, 0 for the intercept
    std::vector<char> excluded;

    explicit Layout(const WeightedLassoProblem& pr)
        : d(pr.cols()), dim(pr.cols() + (pr.unpenalized_intercept ? 1 : 0)), intercept(pr.unpenalized_intercept),
          penalty(Eigen::VectorXd::Zero(dim)), excluded(dim, 0)
    {
        for (int j = 0; j < d; ++j) {
            const double w = pr.weights(j);
            if (std::isinf(w)) {
                excluded[j] = 1;
            } else {
                penalty(j) = pr.lambda * w;
            }
        }
    }
};

double column_dot(const WeightedLassoProblem& pr, int j, const Eigen::VectorXd& v)
{
    if (j == pr.cols()) return v.sum();
    double s = 0.0;
    for (SparseMatrix::InnerIterator it(pr.design, j); it; ++it) s += it.value() * v(it.index());
    return s;
}

double column_dot_weighted(const WeightedLassoProblem& pr, int j, const Eigen::VectorXd& w, const Eigen::VectorXd& v)
{
    if (j == pr.cols()) return w.dot(v);
    double s = 0.0;
    for (SparseMatrix::InnerIterator it(pr.design, j); it; ++it) s += it.value() * w(it.index()) * v(it.index());
    return s;
}

void column_axpy(const WeightedLassoProblem& pr, int j, double a, Eigen::VectorXd& v)
{
    if (j == pr.cols()) {
        v.array() += a;
        return;
    }
    for (SparseMatrix::InnerIterator it(pr.design, j); it; ++it) v(it.index()) += a * it.value();
}

Eigen::VectorXd linear_predictor(const WeightedLassoProblem& pr, const Eigen::VectorXd& theta, double intercept)
{
    Eigen::VectorXd eta = pr.design * theta;
    eta.array() += intercept;
    return eta;
}

double penalty_value(const WeightedLassoProblem& pr, const Eigen::VectorXd& theta)
{
    double s = 0.0;
    for (int j = 0; j < pr.cols(); ++j) {
        if (theta(j) == 0.0) continue;
        const double w = pr.weights(j);
        if (std::isinf(w)) return kInf;
        s += w * std::abs(theta(j));
    }
    return pr.lambda * s;
}

double coordinate_violation(double g, double theta, double pen)
{
    if (theta > 0) return std::abs(g + pen);
    if (theta < 0) return std::abs(g - pen);
    return std::max(0.0, std::abs(g) - pen);
}

// Quadratic model backends: grad(j) and hess(j) of a separable-penalized quadratic,
// move(j, delta) updates internal state, refresh(theta) recomputes it from scratch.

class CovarianceBackend {
public:
    CovarianceBackend(const GramCache& g) : g_(g) {}
    void refresh(const Eigen::VectorXd& theta) { q_ = g_.gram * theta; }
    double grad(int j) const { return q_(j) - g_.xty(j); }
    double hess(int j) const { return g_.gram(j, j); }
    void move(int j, double delta) { q_.noalias() += delta * g_.gram.col(j); }
    double value(const Eigen::VectorXd& theta) const { return 0.5 * (g_.yty - 2.0 * theta.dot(g_.xty) + theta.dot(q_)); }

private:
    const GramCache& g_;
    Eigen::VectorXd q_;
};

// Weighted least squares (1/2n) sum_i w_i (z_i - eta_i)^2 with explicit residuals.
class NaiveBackend {
public:
    NaiveBackend(const WeightedLassoProblem& pr, const Eigen::VectorXd& z, const Eigen::VectorXd* w)
        : pr_(pr), z_(z), w_(w), n_(pr.rows()), hess_(Layout(pr).dim)
    {
        for (int j = 0; j < hess_.size(); ++j) {
            if (j == pr.cols()) {
                hess_(j) = (w_ ? w_->sum() : static_cast<double>(n_)) / n_;
            } else {
                double s = 0.0;
                for (SparseMatrix::InnerIterator it(pr.design, j); it; ++it)
                    s += it.value() * it.value() * (w_ ? (*w_)(it.index()) : 1.0);
                hess_(j) = s / n_;
            }
        }
    }
    void refresh(const Eigen::VectorXd& theta)
    {
        const double b = theta.size() > pr_.cols() ? theta(pr_.cols()) : 0.0;
        r_ = z_ - linear_predictor(pr_, theta.head(pr_.cols()), b);
    }
    double grad(int j) const
    {
        return -(w_ ? column_dot_weighted(pr_, j, *w_, r_) : column_dot(pr_, j, r_)) / n_;
    }
    double hess(int j) const { return hess_(j); }
    void move(int j, double delta) { column_axpy(pr_, j, -delta, r_); }
    double value(const Eigen::VectorXd&) const
    {
        return w_ ? 0.5 * (w_->array() * r_.array().square()).sum() / n_ : 0.5 * r_.squaredNorm() / n_;
    }

private:
    const WeightedLassoProblem& pr_;
    const Eigen::VectorXd& z_;
    const Eigen::VectorXd* w_;
    int n_;
    Eigen::VectorXd hess_;
    Eigen::VectorXd r_;
};

struct CdOutcome {
    int sweeps = 0;
    double residual = kInf;
    bool converged = false;
};

template <class Backend>
double model_residual(const Backend& be, const Layout& lay, const Eigen::VectorXd& theta, const std::vector<int>& coords)
{
    double worst = 0.0;
    for (int j : coords) worst = std::max(worst, coordinate_violation(be.grad(j), theta(j), lay.penalty(j)));
    return worst;
}

template <class Backend>
CdOutcome coordinate_descent(Backend& be, const Layout& lay, Eigen::VectorXd& theta, double tol, int max_sweeps,
                             bool screening, std::vector<double>* trace, const std::function<double()>& trace_value)
{
    std::vector<int> all;
    for (int j = 0; j < lay.dim; ++j) {
        if (lay.excluded[j] || !(be.hess(j) > 0.0)) {
            theta(j) = 0.0;
            continue;
        }
        all.push_back(j);
    }
    auto update = [&](int j) {
        const double h = be.hess(j);
        const double z = theta(j) - be.grad(j) / h;
        const double next = lay.penalty(j) > 0.0 ? soft_threshold(z, lay.penalty(j) / h) : z;
        const double delta = next - theta(j);
        if (delta != 0.0) {
            theta(j) = next;
            be.move(j, delta);
        }
    };
    auto record = [&] {
        if (trace) trace->push_back(trace_value());
    };

    CdOutcome out;
    be.refresh(theta);
    std::vector<int> active;
    for (;;) {
        out.residual = model_residual(be, lay, theta, all);
        if (out.residual <= tol) {
            out.converged = true;
            return out;
        }
        if (out.sweeps >= max_sweeps) return out;
        for (int j : all) update(j);
        ++out.sweeps;
        record();
        if (screening) {
            while (out.sweeps < max_sweeps) {
                active.clear();
                for (int j : all)
                    if (theta(j) != 0.0) active.push_back(j);
                if (active.empty()) break;
                for (int j : active) update(j);
                ++out.sweeps;
                record();
                if (model_residual(be, lay, theta, active) <= 0.5 * tol) break;
            }
        }
        be.refresh(theta);
    }
}

Eigen::VectorXd augmented_start(const WeightedLassoProblem& pr, const Layout& lay, const SolveHints& hints)
{
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(lay.dim);
    if (hints.theta) {
        if (hints.theta->size() != pr.cols()) throw DimensionError("warm start has wrong length");
        theta.head(pr.cols()) = *hints.theta;
    }
    if (lay.intercept) theta(lay.d) = hints.intercept;
    for (int j = 0; j < lay.d; ++j)
        if (lay.excluded[j]) theta(j) = 0.0;
    return theta;
}

FitResult finish(const WeightedLassoProblem& pr, const Layout& lay, const Eigen::VectorXd& aug, int sweeps,
                 std::vector<double> trace)
{
    FitResult fit;
    fit.theta = aug.head(lay.d);
    fit.intercept = lay.intercept ? aug(lay.d) : 0.0;
    fit.objective = objective(pr, fit.theta, fit.intercept);
    fit.kkt_residual = kkt_residual(pr, fit.theta, fit.intercept);
    fit.iterations = sweeps;
    fit.df = static_cast<int>((fit.theta.array() != 0.0).count());
    fit.objective_trace = std::move(trace);
    return fit;
}

FitResult solve_linear(const WeightedLassoProblem& pr, const SolverConfig& cfg, const SolveHints& hints)
{
    const Layout lay(pr);
    Eigen::VectorXd theta = augmented_start(pr, lay, hints);
    std::vector<double> trace;
    std::vector<double>* tr = cfg.trace ? &trace : nullptr;
    const double inner_tol = 0.5 * cfg.tol;
    const bool use_gram = hints.gram != nullptr || lay.dim <= cfg.covariance_max_columns;

    CdOutcome out;
    if (use_gram) {
        GramCache local;
        const GramCache* g = hints.gram;
        if (!g) {
            local = make_gram(pr);
            g = &local;
        }
        if (g->gram.rows() != lay.dim) throw DimensionError("Gram cache does not match the problem");
        CovarianceBackend be(*g);
        auto value = [&] { return be.value(theta) + penalty_value(pr, theta.head(lay.d)); };
        out = coordinate_descent(be, lay, theta, inner_tol, cfg.max_iter, cfg.screening, tr, value);
    } else {
        NaiveBackend be(pr, pr.response, nullptr);
        auto value = [&] { return be.value(theta) + penalty_value(pr, theta.head(lay.d)); };
        out = coordinate_descent(be, lay, theta, inner_tol, cfg.max_iter, cfg.screening, tr, value);
    }
    FitResult fit = finish(pr, lay, theta, out.sweeps, std::move(trace));
    if (!out.converged || fit.kkt_residual > cfg.tol)
        throw ConvergenceError("weighted lasso did not reach the KKT tolerance within max_iter sweeps", fit.theta,
                               fit.kkt_residual);
    return fit;
}

FitResult solve_logistic(const WeightedLassoProblem& pr, const SolverConfig& cfg, const SolveHints& hints)
{
    const Layout lay(pr);
    const int n = pr.rows();
    Eigen::VectorXd theta = augmented_start(pr, lay, hints);
    std::vector<double> trace;
    auto full_obj = [&](const Eigen::VectorXd& t) {
        return objective(pr, t.head(lay.d), lay.intercept ? t(lay.d) : 0.0);
    };
    double obj = full_obj(theta);
    int sweeps = 0;
    Eigen::VectorXd w(n), z(n);
    for (;;) {
        const double res = kkt_residual(pr, theta.head(lay.d), lay.intercept ? theta(lay.d) : 0.0);
        if (res <= cfg.tol || sweeps >= cfg.max_iter) break;
        const Eigen::VectorXd eta = linear_predictor(pr, theta.head(lay.d), lay.intercept ? theta(lay.d) : 0.0);
        for (int i = 0; i < n; ++i) {
            const double prob = std::clamp(sigmoid(eta(i)), kProbClip, 1.0 - kProbClip);
            w(i) = prob * (1.0 - prob);
            z(i) = eta(i) + (pr.response(i) - prob) / w(i);
        }
        Eigen::VectorXd cand = theta;
        NaiveBackend be(pr, z, &w);
        const CdOutcome inner = coordinate_descent(be, lay, cand, 0.1 * cfg.tol, cfg.max_iter - sweeps,
                                                   cfg.screening, nullptr, [] { return 0.0; });
        sweeps += std::max(inner.sweeps, 1);
        double cand_obj = full_obj(cand);
        double step = 1.0;
        const Eigen::VectorXd dir = cand - theta;
        while (cand_obj > obj && step > 1e-12) {
            step *= 0.5;
            cand = theta + step * dir;
            cand_obj = full_obj(cand);
        }
        if (cand_obj > obj) break;  // no descent possible at working precision
        theta = cand;
        obj = cand_obj;
        if (cfg.trace) trace.push_back(obj);
    }
    FitResult fit = finish(pr, lay, theta, sweeps, std::move(trace));
    if (fit.kkt_residual > cfg.tol)
        throw ConvergenceError("logistic weighted lasso did not reach the KKT tolerance", fit.theta, fit.kkt_residual);
    return fit;
}

} // namespace

void WeightedLassoProblem::validate() const
{
    if (response.size() != design.rows()) throw DimensionError("response length does not match design rows");
    if (weights.size() != design.cols()) throw DimensionError("weight vector length does not match design columns");
    if (design.rows() == 0) throw DimensionError("problem has no observations");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidArgument("lambda must be finite and nonnegative");
    for (Eigen::Index j = 0; j < weights.size(); ++j)
        if (!(weights(j) >= 0.0)) throw InvalidArgument("penalty weights must be nonnegative");
    if (!response.allFinite()) throw InvalidArgument("response contains non-finite values");
    for (int j = 0; j < design.outerSize(); ++j)
        for (SparseMatrix::InnerIterator it(design, j); it; ++it)
            if (!std::isfinite(it.value())) throw InvalidArgument("design contains non-finite values");
    if (loss == Loss::logistic)
        for (Eigen::Index i = 0; i < response.size(); ++i)
            if (response(i) != 0.0 && response(i) != 1.0) throw InvalidArgument("logistic response must be 0/1");
}

GramCache make_gram(const WeightedLassoProblem& pr)
{
    const int d = pr.cols();
    const int dim = d + (pr.unpenalized_intercept ? 1 : 0);
    const double n = pr.rows();
    GramCache g;
    g.gram.resize(dim, dim);
    const SparseMatrix xtx = (pr.design.transpose() * pr.design).pruned();
    g.gram.topLeftCorner(d, d) = Eigen::MatrixXd(xtx) / n;
    g.xty.resize(dim);
    g.xty.head(d) = (pr.design.transpose() * pr.response) / n;
    if (pr.unpenalized_intercept) {
        Eigen::VectorXd sums = pr.design.transpose() * Eigen::VectorXd::Ones(pr.rows());
        g.gram.col(d).head(d) = sums / n;
        g.gram.row(d).head(d) = sums.transpose() / n;
        g.gram(d, d) = 1.0;
        g.xty(d) = pr.response.mean();
    }
    g.yty = pr.response.squaredNorm() / n;
    return g;
}

FitResult solve(const WeightedLassoProblem& problem, const SolverConfig& cfg, const SolveHints& hints)
{
    problem.validate();
    if (!(cfg.tol > 0.0) || cfg.max_iter < 1) throw InvalidArgument("solver tolerance and max_iter must be positive");
    FitResult fit = problem.loss == Loss::linear ? solve_linear(problem, cfg, hints) : solve_logistic(problem, cfg, hints);
    notify(problem, fit);
    return fit;
}

double soft_threshold(double z, double t)
{
    if (z > t) return z - t;
    if (z < -t) return z + t;
    return 0.0;
}

double objective(const WeightedLassoProblem& pr, const Eigen::VectorXd& theta, double intercept)
{
    const Eigen::VectorXd eta = linear_predictor(pr, theta, intercept);
    double loss = 0.0;
    if (pr.loss == Loss::linear) {
        loss = 0.5 * (pr.response - eta).squaredNorm() / pr.rows();
    } else {
        for (int i = 0; i < pr.rows(); ++i) loss += softplus(eta(i)) - pr.response(i) * eta(i);
        loss /= pr.rows();
    }
    return loss + penalty_value(pr, theta);
}

namespace {

// Derivative of the loss with respect to the linear predictor, divided by n.
Eigen::VectorXd predictor_gradient(const WeightedLassoProblem& pr, const Eigen::VectorXd& theta, double intercept)
{
    const Eigen::VectorXd eta = linear_predictor(pr, theta, intercept);
    Eigen::VectorXd u(pr.rows());
    for (int i = 0; i < pr.rows(); ++i)
        u(i) = (pr.loss == Loss::linear ? eta(i) : sigmoid(eta(i))) - pr.response(i);
    return u / pr.rows();
}

} // namespace

Eigen::VectorXd loss_gradient(const WeightedLassoProblem& pr, const Eigen::VectorXd& theta, double intercept)
{
    return pr.design.transpose() * predictor_gradient(pr, theta, intercept);
}

Eigen::VectorXd logistic_gradient(const Eigen::VectorXd& theta, const WeightedLassoProblem& problem, double intercept)
{
    if (problem.loss != Loss::logistic) throw InvalidArgument("logistic_gradient needs a logistic problem");
    return loss_gradient(problem, theta, intercept);
}

double kkt_residual(const WeightedLassoProblem& pr, const Eigen::VectorXd& theta, double intercept)
{
    const Eigen::VectorXd u = predictor_gradient(pr, theta, intercept);
    const Eigen::VectorXd g = pr.design.transpose() * u;
    double worst = pr.unpenalized_intercept ? std::abs(u.sum()) : 0.0;
    for (int j = 0; j < pr.cols(); ++j) {
        const double w = pr.weights(j);
        if (std::isinf(w)) {
            if (theta(j) != 0.0) return kInf;
            continue;
        }
        worst = std::max(worst, coordinate_violation(g(j), theta(j), pr.lambda * w));
    }
    return worst;
}

double lambda_max(const WeightedLassoProblem& pr)
{
    pr.validate();
    Eigen::VectorXd u(pr.rows());
    if (pr.unpenalized_intercept) {
        const double ybar = pr.response.mean();
        if (pr.loss == Loss::logistic && (ybar <= 0.0 || ybar >= 1.0))
            throw DegenerateProblem("logistic response is constant; the intercept-only fit diverges");
        u = (ybar - pr.response.array()).matrix() / pr.rows();
    } else {
        const double mu0 = pr.loss == Loss::linear ? 0.0 : 0.5;
        u = (mu0 - pr.response.array()).matrix() / pr.rows();
    }
    const Eigen::VectorXd g = pr.design.transpose() * u;
    double best = 0.0;
    bool any = false;
    for (int j = 0; j < pr.cols(); ++j) {
        const double w = pr.weights(j);
        if (!(w > 0.0) || std::isinf(w)) continue;
        any = true;
        best = std::max(best, std::abs(g(j)) / w);
    }
    if (!any) throw DegenerateProblem("lambda_max needs at least one finite positive weight");
    return best;
}

void set_solve_observer(SolveObserver obs)
{
    std::lock_guard lock(observer_mutex);
    observer = std::move(obs);
}

} // namespace strata
