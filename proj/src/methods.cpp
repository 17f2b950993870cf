#include "strata/methods.hpp"

#include <algorithm>
#include <sstream>

#include "strata/baselines.hpp"
#include "strata/error.hpp"
#include "strata/m1.hpp"
#include "strata/m2.hpp"
#include "strata/median.hpp"
#include "strata/parallel.hpp"
#include "strata/rng.hpp"

namespace strata {

namespace {

constexpr Method kMethods[] = {Method::m1,          Method::m1_adaptive, Method::m1_relaxed, Method::m2,
                               Method::m2_adaptive, Method::indep,       Method::ident,      Method::inter};

StackOptions stack_options(const MethodOptions& o)
{
    StackOptions s;
    s.intercept_mode = o.intercept ? InterceptMode::unpenalized_common : InterceptMode::none;
    return s;
}

Structure m1_structure(const StratifiedDataset& data, const M1Fit& f, const MethodOptions& o)
{
    return stacked_structure(f.theta,
                             StackLayout::for_mode(data.features(), data.strata(), stack_options(o).intercept_mode));
}

MethodFit from_m1(const StratifiedDataset& data, const M1Fit& f, const MethodOptions& o)
{
    MethodFit out;
    out.coef = f.coef;
    out.common = f.decomposition.common;
    out.deviations = f.coef.B.colwise() - out.common;
    out.objective = f.fit.objective;
    out.kkt_residual = f.fit.kkt_residual;
    out.df = static_cast<int>(m1_structure(data, f, o).size());
    return out;
}

MethodFit from_m2(const M2Fit& f)
{
    MethodFit out;
    out.coef = f.coef;
    out.common = f.common;
    out.deviations = f.coef.B.colwise() - f.common;
    out.objective = f.fit.objective;
    out.kkt_residual = f.fit.kkt_residual;
    out.df = static_cast<int>(fused_structure(f.coef).size());
    return out;
}

MethodFit from_baseline(const BaselineFit& f, Eigen::VectorXd common, const Structure& st)
{
    MethodFit out;
    out.coef = f.coef;
    out.common = std::move(common);
    out.deviations = f.coef.B.colwise() - out.common;
    out.objective = f.objective;
    for (const auto& r : f.fits) out.kkt_residual = std::max(out.kkt_residual, r.kkt_residual);
    out.df = static_cast<int>(st.size());
    return out;
}

std::vector<GridPoint> lambda_points(const std::vector<double>& lambdas)
{
    std::vector<GridPoint> out;
    for (double l : lambdas) out.push_back({l, 0.0, 1.0});
    return out;
}

std::vector<double> lambda_path(double hi, int n)
{
    if (!(hi > 0.0)) throw DegenerateProblem("lambda_max is zero: every fit is empty");
    return log_grid(hi, 1e-3, n);
}

StratifiedDataset single_stratum(const StratifiedDataset& data, int k)
{
    return StratifiedDataset({data.stratum(k)}, data.covariate_names(), data.loss());
}

GridFitter fitter_for(Method m, const MethodOptions& o)
{
    switch (m) {
    case Method::m1: return m1_fitter(stack_options(o), o.solver);
    case Method::m1_adaptive: return m1_adaptive_fitter(o.rho, stack_options(o), o.solver);
    case Method::m1_relaxed: return m1_relaxed_fitter(stack_options(o), o.solver);
    case Method::m2: return m2_fitter(o.intercept, o.solver);
    case Method::m2_adaptive: return m2_adaptive_fitter(o.rho, o.intercept, o.solver);
    case Method::indep: return indep_fitter(o.intercept, o.solver);
    case Method::ident: return ident_fitter(o.intercept, o.solver);
    case Method::inter: return inter_fitter(o.reference, o.solver);
    }
    throw InvalidArgument("unknown method");
}

Selection select(const StratifiedDataset& data, const GridFitter& fitter, const std::vector<GridPoint>& grid,
                 const MethodOptions& o)
{
    return o.selection == Selector::cv ? cross_validate(data, fitter, grid, o.folds, o.seed)
                                       : two_step_bic(data, fitter, grid);
}

// Unpenalized objective: loss / (2n) for squared error, mean negative log-likelihood for logistic.
double unpenalized_objective(const StratifiedDataset& data, const CoefMatrix& coef)
{
    double sum = 0.0;
    for (int k = 0; k < data.strata(); ++k) {
        const Eigen::VectorXd eta = predict(data, coef, k);
        const Eigen::VectorXd& y = data.stratum(k).y;
        for (Eigen::Index i = 0; i < y.size(); ++i) {
            if (data.loss() == Loss::linear)
                sum += 0.5 * (y(i) - eta(i)) * (y(i) - eta(i));
            else
                sum += std::log1p(std::exp(-std::abs(eta(i)))) + std::max(eta(i), 0.0) - y(i) * eta(i);
        }
    }
    return sum / data.rows();
}

MethodFit refit_estimate(const StratifiedDataset& data, Method method, const GridPoint& pt, const MethodOptions& o,
                         const CoefMatrix& refit, const MethodFit& penalized)
{
    MethodFit out;
    out.coef = refit;
    out.common = method_common(data, method, pt, refit.B, o);
    out.deviations = refit.B.colwise() - out.common;
    out.objective = unpenalized_objective(data, refit);
    out.kkt_residual = penalized.kkt_residual;
    out.df = penalized.df;
    return out;
}

} // namespace

Eigen::VectorXd method_common(const StratifiedDataset& data, Method method, const GridPoint& pt,
                              const Eigen::MatrixXd& B, const MethodOptions& o)
{
    const int p = static_cast<int>(B.rows()), K = static_cast<int>(B.cols());
    Eigen::VectorXd c = Eigen::VectorXd::Zero(p);
    std::vector<double> row(K);
    switch (method) {
    case Method::m1:
    case Method::m1_relaxed: {
        const double mu = pt.lambda1 > 0.0 ? pt.lambda2 / pt.lambda1 : kInf;
        const std::vector<double> mus(K, mu);
        for (int j = 0; j < p; ++j) {
            for (int k = 0; k < K; ++k) row[k] = B(j, k);
            c(j) = wsmedian(row, mus);
        }
        break;
    }
    case Method::m2:
        for (int j = 0; j < p; ++j) {
            for (int k = 0; k < K; ++k) row[k] = B(j, k);
            c(j) = median_set(row).midpoint();
        }
        break;
    case Method::m1_adaptive:
    case Method::m2_adaptive: {
        const auto refs = select_references(initial_estimates(data, o.intercept));
        for (int j = 0; j < p; ++j) c(j) = B(j, refs[j]);
        break;
    }
    case Method::indep: break;
    case Method::ident: c = B.col(0); break;
    case Method::inter: c = B.col(o.reference); break;
    }
    return c;
}

const char* to_string(Method m)
{
    switch (m) {
    case Method::m1: return "m1";
    case Method::m1_adaptive: return "m1-adaptive";
    case Method::m1_relaxed: return "m1-relaxed";
    case Method::m2: return "m2";
    case Method::m2_adaptive: return "m2-adaptive";
    case Method::indep: return "indep";
    case Method::ident: return "ident";
    case Method::inter: return "inter";
    }
    return "?";
}

Method method_from_string(const std::string& name)
{
    for (Method m : kMethods)
        if (name == to_string(m)) return m;
    throw InvalidArgument("unknown method: " + name);
}

const char* to_string(Selector s)
{
    return s == Selector::cv ? "cv" : "2step-bic";
}

Selector selector_from_string(const std::string& name)
{
    if (name == "cv") return Selector::cv;
    if (name == "2step-bic") return Selector::two_step_bic;
    throw InvalidArgument("unknown selection: " + name);
}

MethodFit fit_indep_method(const StratifiedDataset& data, const std::vector<double>& lambda, const MethodOptions& o)
{
    const BaselineFit f = fit_indep(data, lambda, o.solver, o.intercept);
    return from_baseline(f, Eigen::VectorXd::Zero(data.features()), support_structure(f.coef));
}

MethodFit fit_method(const StratifiedDataset& data, Method method, const GridPoint& pt, const MethodOptions& o)
{
    const int K = data.strata();
    const PenaltySpec pen = PenaltySpec::uniform(K, pt.lambda1, pt.lambda2);
    switch (method) {
    case Method::m1: return from_m1(data, fit_m1(data, pen, stack_options(o), o.solver), o);
    case Method::m1_adaptive:
        return from_m1(data,
                       fit_m1_adaptive(data, pen, initial_estimates(data, o.intercept), o.rho, stack_options(o),
                                       o.solver),
                       o);
    case Method::m1_relaxed: {
        RelaxSpec relax;
        relax.grid = {pt.phi};
        auto fits = fit_m1_relaxed(data, pen, relax, stack_options(o), o.solver);
        return from_m1(data, fits.front().fit, o);
    }
    case Method::m2:
        return from_m2(fit_m2(data, M2PenaltySpec::uniform(K, pt.lambda1, pt.lambda2), o.solver, o.intercept));
    case Method::m2_adaptive:
        return from_m2(fit_m2_adaptive(data, M2PenaltySpec::uniform(K, pt.lambda1, pt.lambda2),
                                       initial_estimates(data, o.intercept), o.rho, o.solver, o.intercept));
    case Method::indep: return fit_indep_method(data, std::vector<double>(K, pt.lambda1), o);
    case Method::ident: {
        const BaselineFit f = fit_ident(data, pt.lambda1, o.solver, o.intercept);
        return from_baseline(f, f.coef.B.col(0), ident_structure(f.coef, o.intercept));
    }
    case Method::inter: {
        const BaselineFit f = fit_inter(data, o.reference, pen, o.solver);
        return from_baseline(f, f.coef.B.col(o.reference), inter_structure(f.coef, o.reference));
    }
    }
    throw InvalidArgument("unknown method");
}

std::vector<GridPoint> default_grid(const StratifiedDataset& data, Method method, const MethodOptions& o)
{
    RatioGridOptions ro;
    ro.n_ratios = o.n_ratios;
    ro.n_lambda = o.n_lambda;
    ro.stack = stack_options(o);
    M2GridOptions mo;
    mo.n_lambda1 = o.n_lambda1;
    mo.n_lambda2 = o.n_lambda2;
    mo.intercept = o.intercept;
    mo.solver = o.solver;
    switch (method) {
    case Method::m1: return build_ratio_grid(data, ro).points();
    case Method::m1_adaptive: {
        const auto w = AdaptiveWeights::from_initial(initial_estimates(data, o.intercept), o.rho);
        return build_ratio_grid(data, ro, &w).points();
    }
    case Method::m1_relaxed: return expand_phi(build_ratio_grid(data, ro).points(), o.phis);
    case Method::m2: return build_m2_grid(data, mo).points();
    case Method::m2_adaptive: {
        const auto w = AdaptiveWeights::from_initial(initial_estimates(data, o.intercept), o.rho);
        return build_m2_grid(data, mo, &w).points();
    }
    case Method::indep: {
        // stratum k is empty once lambda n / n_k reaches its own lambda_max
        double hi = 0.0;
        for (int k = 0; k < data.strata(); ++k)
            hi = std::max(hi, ident_lambda_max(single_stratum(data, k), o.intercept) * data.rows(k) / data.rows());
        return lambda_points(lambda_path(hi, o.n_lambda));
    }
    case Method::ident: return lambda_points(lambda_path(ident_lambda_max(data, o.intercept), o.n_lambda));
    case Method::inter: {
        RatioGridOptions io = ro;
        io.stack = {};
        const auto w = inter_weights(data.strata(), data.features(), o.reference);
        return build_ratio_grid(data, io, &w).points();
    }
    }
    throw InvalidArgument("unknown method");
}

TunedFit tune_method(const StratifiedDataset& data, Method method, const MethodOptions& o)
{
    TunedFit out;
    out.method = method;
    out.selector = o.selection;
    if (method == Method::indep) {
        // each stratum is tuned on its own data as a single lasso
        std::vector<double> lambda;
        for (int k = 0; k < data.strata(); ++k) {
            const StratifiedDataset sub = single_stratum(data, k);
            StratumSelection s;
            s.grid = lambda_points(lambda_path(ident_lambda_max(sub, o.intercept), o.n_lambda));
            s.selection = select(sub, ident_fitter(o.intercept, o.solver), s.grid, o);
            lambda.push_back(s.selection.fit.point.lambda1 * data.rows(k) / data.rows());
            out.selections.push_back(std::move(s));
        }
        out.fit = fit_indep_method(data, lambda, o);
        out.estimate = out.fit;
        if (o.selection == Selector::two_step_bic) {
            CoefMatrix refit = out.fit.coef;
            for (int k = 0; k < data.strata(); ++k) {
                const CoefMatrix& r = out.selections[k].selection.refit;
                refit.B.col(k) = r.B.col(0);
                if (refit.intercepts.size()) refit.intercepts(k) = r.intercept(0);
            }
            out.estimate = refit_estimate(data, method, {}, o, refit, out.fit);
        }
        return out;
    }
    StratumSelection s;
    s.grid = default_grid(data, method, o);
    s.selection = select(data, fitter_for(method, o), s.grid, o);
    const GridPoint pt = s.selection.fit.point;
    out.fit = fit_method(data, method, pt, o);
    out.estimate = o.selection == Selector::two_step_bic
                       ? refit_estimate(data, method, pt, o, s.selection.refit, out.fit)
                       : out.fit;
    out.selections.push_back(std::move(s));
    return out;
}

std::vector<ReplicationRow> run_replications(const ReplicationSpec& spec)
{
    if (spec.replications < 1) throw InvalidArgument("replications must be >= 1");
    if (spec.methods.empty()) throw InvalidArgument("no methods requested");
    for (double t : spec.thresholds)
        if (!(t >= 0.0)) throw InvalidArgument("thresholds must be >= 0");
    spec.design.validate();
    std::vector<std::vector<ReplicationRow>> per(spec.replications);
    parallel_for(spec.replications, [&](std::size_t r) {
        SimulationDesign d = spec.design;
        d.seed = Rng::derive(spec.design.seed, r);
        const auto [data, truth] = generate(d);
        for (Method m : spec.methods) {
            MethodOptions o = spec.options;
            o.seed = d.seed;
            const TunedFit t = tune_method(data, m, o);
            auto add = [&](std::string metric, double v) {
                per[r].push_back({static_cast<int>(r), d.seed, m, std::move(metric), v});
            };
            const CoefMatrix& est = t.estimate.coef;
            add("prediction", metric_prediction(truth, est, data).value);
            add("estimation", metric_estimation(truth, est));
            const SupportMetric sm = metric_support(truth, est);
            add("accuracy", sm.accuracy);
            add("f1", sm.f1);
            for (double thr : spec.thresholds) {
                const SupportMetric st = metric_support(truth, hard_threshold(est, thr));
                add("accuracy_t" + format_double(thr), st.accuracy);
                add("f1_t" + format_double(thr), st.f1);
            }
            add("df", t.estimate.df);
            add("sigma2", truth.sigma2);
        }
    });
    std::vector<ReplicationRow> rows;
    for (auto& v : per) rows.insert(rows.end(), v.begin(), v.end());
    return rows;
}

std::string replication_csv(const ReplicationSpec& spec, const std::vector<ReplicationRow>& rows)
{
    const SimulationDesign& d = spec.design;
    std::ostringstream prefix;
    prefix << to_string(d.kind) << ',' << d.K << ',' << d.p << ',' << d.n_k << ',' << format_double(d.sp_glob) << ','
           << format_double(d.sp_spec) << ',' << format_double(d.sigma2) << ','
           << (d.snr ? format_double(*d.snr) : std::string()) << ',' << to_string(d.covariance) << ','
           << to_string(d.heterogeneity) << ',' << format_double(d.alpha) << ',' << format_double(d.c) << ','
           << format_double(d.beta) << ',' << d.pattern << ',' << to_string(spec.options.selection);
    const std::string pre = prefix.str();
    std::string out = "design,K,p,n_k,sp_glob,sp_spec,sigma2,snr,covariance,heterogeneity,alpha,c,beta,pattern,"
                      "selection,replication,seed,method,metric,value\n";
    for (const auto& r : rows)
        out += pre + ',' + std::to_string(r.replication) + ',' + std::to_string(r.seed) + ',' + to_string(r.method) +
               ',' + r.metric + ',' + format_double(r.value) + '\n';
    return out;
}

} // namespace strata
