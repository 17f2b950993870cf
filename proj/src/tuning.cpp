#include "strata/tuning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <tuple>

#include "strata/baselines.hpp"
#include "strata/error.hpp"
#include "strata/m2.hpp"
#include "strata/parallel.hpp"
#include "strata/rng.hpp"

namespace strata {

namespace {

std::vector<GridPoint> flatten(const std::vector<double>& outer, const std::vector<std::vector<double>>& lambda2,
                               bool ratio)
{
    std::vector<GridPoint> out;
    for (std::size_t i = 0; i < outer.size(); ++i)
        for (double l2 : lambda2[i]) out.push_back({ratio ? outer[i] * l2 : outer[i], l2, 1.0});
    return out;
}

void canonicalize(Structure& s)
{
    for (auto& f : s) std::sort(f.cells.begin(), f.cells.end());
    std::sort(s.begin(), s.end());
}

void add_intercepts(Structure& s, const CoefMatrix& coef)
{
    for (int k = 0; k < coef.intercepts.size(); ++k) s.push_back({{{k, -1}}});
}

GridFit make_fit(const GridPoint& pt, CoefMatrix coef, Structure structure)
{
    GridFit g{pt, std::move(coef), std::move(structure), 0};
    g.df = static_cast<int>(g.structure.size());
    return g;
}

bool columns_equal(const Eigen::MatrixXd& B)
{
    for (int j = 0; j < B.rows(); ++j) {
        const double lo = B.row(j).minCoeff(), hi = B.row(j).maxCoeff();
        if (hi - lo > 1e-9 * std::max(1.0, std::max(std::abs(lo), std::abs(hi)))) return false;
    }
    return true;
}

bool has_intercept(const StackOptions& opts)
{
    return opts.intercept_mode != InterceptMode::none;
}

// Winner by (score, df, -lambda2), first in grid order otherwise.
std::size_t argmin(const std::vector<double>& score, const std::vector<int>& df, const std::vector<GridPoint>& grid)
{
    std::size_t best = 0;
    for (std::size_t i = 1; i < score.size(); ++i) {
        const auto a = std::make_tuple(score[i], df[i], -grid[i].lambda2);
        const auto b = std::make_tuple(score[best], df[best], -grid[best].lambda2);
        if (a < b) best = i;
    }
    if (!std::isfinite(score[best])) throw DegenerateProblem("no grid point has a finite selection score");
    return best;
}

double clipped_log(double p)
{
    return std::log(std::clamp(p, 1e-5, 1.0 - 1e-5));
}

std::uint64_t hash_id(const std::string& id)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : id) h = (h ^ c) * 0x100000001b3ULL;
    return h;
}

} // namespace

std::vector<GridPoint> RatioGrid::points() const
{
    return flatten(ratios, lambda2, true);
}

std::vector<GridPoint> M2Grid::points() const
{
    return flatten(lambda1, lambda2, false);
}

std::vector<double> log_grid(double hi, double factor, int n)
{
    if (n < 1) throw InvalidArgument("grid size must be positive");
    if (!(hi > 0.0) || !(factor > 0.0 && factor <= 1.0)) throw InvalidArgument("log grid needs hi > 0, 0 < factor <= 1");
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i) out[i] = n == 1 ? hi : hi * std::pow(factor, static_cast<double>(i) / (n - 1));
    return out;
}

RatioGrid build_ratio_grid(const StratifiedDataset& data, const RatioGridOptions& opts, const AdaptiveWeights* adaptive)
{
    const int K = data.strata();
    if (opts.n_ratios < 1 || opts.n_lambda < 1) throw InvalidArgument("grid sizes must be positive");
    M1Estimator est = adaptive ? M1Estimator(data, *adaptive, opts.stack) : M1Estimator(data, opts.stack);
    RatioGrid grid;
    grid.ratios = log_grid(K, opts.min_ratio_factor, opts.n_ratios);
    std::reverse(grid.ratios.begin(), grid.ratios.end());
    for (double r : grid.ratios) {
        // lambda = lambda1 = r with deviation weights 1/r, so lambda2_max = lambda_max / r
        const double l2max = lambda_max(est.problem_at(PenaltySpec::uniform(K, r, 1.0))) / r;
        if (!(l2max > 0.0) || !std::isfinite(l2max))
            throw DegenerateProblem("empty grid: the null fit is optimal for every penalty");
        grid.lambda2.push_back(log_grid(l2max, opts.lambda_factor, opts.n_lambda));
    }
    return grid;
}

double search_lambda2_max(const std::function<bool(double, double)>& fused, double lambda1, double cap)
{
    if (!(cap > 0.0)) throw InvalidArgument("cap must be positive");
    if (!fused(lambda1, cap)) throw NotFound("no fusion plateau below the lambda2 cap");
    const double floor = std::ldexp(cap, -60);
    double hi = cap;
    while (hi > floor && fused(lambda1, hi / 2)) hi /= 2;
    if (hi <= floor) return hi;
    double lo = hi / 2;
    for (int step = 0; step < 20; ++step) {
        const double mid = 0.5 * (lo + hi);
        (fused(lambda1, mid) ? hi : lo) = mid;
    }
    return hi;
}

double ident_lambda_max(const StratifiedDataset& data, bool intercept)
{
    WeightedLassoProblem pr;
    pr.design = data.pooled_x().sparseView();
    pr.response = data.pooled_y();
    pr.weights = Eigen::VectorXd::Ones(data.features());
    pr.loss = data.loss();
    pr.unpenalized_intercept = intercept;
    return lambda_max(pr);
}

M2Grid build_m2_grid(const StratifiedDataset& data, const M2GridOptions& opts, const AdaptiveWeights* adaptive)
{
    const int K = data.strata();
    const int p = data.features();
    if (opts.n_lambda1 < 1 || opts.n_lambda2 < 1) throw InvalidArgument("grid sizes must be positive");
    double l1max = 0.0;
    for (int k = 0; k < K; ++k) {
        const auto& s = data.stratum(k);
        WeightedLassoProblem pr;
        pr.design = s.x.sparseView();
        pr.response = s.y;
        pr.weights = adaptive ? Eigen::VectorXd(adaptive->w.row(k).transpose()) : Eigen::VectorXd::Ones(p);
        pr.loss = data.loss();
        pr.unpenalized_intercept = opts.intercept;
        try {
            l1max = std::max(l1max, lambda_max(pr) * s.y.size() / data.rows());
        } catch (const DegenerateProblem&) {
        }
    }
    if (!(l1max > 0.0) || !std::isfinite(l1max))
        throw DegenerateProblem("empty grid: the null fit is optimal for every penalty");
    auto fused = [&](double l1, double l2) {
        const auto pen = M2PenaltySpec::uniform(K, l1, l2);
        const M2Problem pr = adaptive ? make_adaptive_m2_problem(data, pen, *adaptive, opts.intercept)
                                      : make_m2_problem(data, pen, opts.intercept);
        return columns_equal(solve_m2(pr, opts.solver).coef.B);
    };
    M2Grid grid;
    grid.lambda1 = log_grid(l1max, opts.lambda_factor, opts.n_lambda1);
    for (double l1 : grid.lambda1)
        grid.lambda2.push_back(log_grid(search_lambda2_max(fused, l1), opts.lambda_factor, opts.n_lambda2));
    return grid;
}

Structure stacked_structure(const Eigen::VectorXd& theta, const StackLayout& L)
{
    if (theta.size() != L.columns()) throw DimensionError("theta does not match the stacked layout");
    Structure s;
    // per covariate (-1: intercept): a free common value plus free deviations; when
    // every deviation is free the common value is redundant
    for (int j = -1; j < L.p; ++j) {
        auto at = [&](int b) {
            const int c = j < 0 ? L.intercept_column(b) : L.column(b, j);
            return c >= 0 && theta(c) != 0.0;
        };
        bool common = at(0) || (j < 0 && L.solver_intercept);
        std::vector<int> free;
        for (int k = 0; k < L.strata; ++k)
            if (at(k + 1)) free.push_back(k);
        if (static_cast<int>(free.size()) == L.strata) common = false;
        if (common) {
            FreeParameter f;
            for (int k = 0; k < L.strata; ++k) f.cells.emplace_back(k, j);
            s.push_back(std::move(f));
        }
        for (int k : free) s.push_back({{{k, j}}});
    }
    canonicalize(s);
    return s;
}

Structure fused_structure(const CoefMatrix& coef, double rel_tol)
{
    Structure s;
    std::vector<std::pair<double, int>> row;
    for (int j = 0; j < coef.features(); ++j) {
        row.clear();
        for (int k = 0; k < coef.strata(); ++k)
            if (coef.B(j, k) != 0.0) row.emplace_back(coef.B(j, k), k);
        std::sort(row.begin(), row.end());
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i == 0 || row[i].first - row[i - 1].first > rel_tol * std::max(1.0, std::abs(row[i].first)))
                s.emplace_back();
            s.back().cells.emplace_back(row[i].second, j);
        }
    }
    add_intercepts(s, coef);
    canonicalize(s);
    return s;
}

Structure support_structure(const CoefMatrix& coef)
{
    Structure s;
    for (int j = 0; j < coef.features(); ++j)
        for (int k = 0; k < coef.strata(); ++k)
            if (coef.B(j, k) != 0.0) s.push_back({{{k, j}}});
    add_intercepts(s, coef);
    canonicalize(s);
    return s;
}

Structure ident_structure(const CoefMatrix& coef, bool intercept)
{
    Structure st;
    for (int j = -1; j < coef.features(); ++j) {
        if (j < 0 ? !intercept : coef.B(j, 0) == 0.0) continue;
        FreeParameter fp;
        for (int k = 0; k < coef.strata(); ++k) fp.cells.emplace_back(k, j);
        st.push_back(std::move(fp));
    }
    canonicalize(st);
    return st;
}

Structure inter_structure(const CoefMatrix& coef, int reference)
{
    const int K = coef.strata();
    Structure st;
    for (int j = 0; j < coef.features(); ++j) {
        const double base = coef.B(j, reference);
        if (base != 0.0) {
            FreeParameter fp;
            for (int k = 0; k < K; ++k) fp.cells.emplace_back(k, j);
            st.push_back(std::move(fp));
        }
        for (int k = 0; k < K; ++k)
            if (k != reference && coef.B(j, k) != base) st.push_back({{{k, j}}});
    }
    canonicalize(st);
    return st;
}

GridFitter m1_fitter(StackOptions opts, SolverConfig cfg)
{
    return [opts, cfg](const StratifiedDataset& data, const std::vector<GridPoint>& points) {
        M1Estimator est(data, opts, cfg);
        std::vector<GridFit> out;
        Eigen::VectorXd warm;
        double warm_b = 0.0, prev = kInf;
        for (const auto& pt : points) {
            const bool use = warm.size() > 0 && pt.lambda2 <= prev;
            M1Fit f = est.fit(PenaltySpec::uniform(data.strata(), pt.lambda1, pt.lambda2), use ? &warm : nullptr,
                              use ? warm_b : 0.0);
            warm = f.fit.theta;
            warm_b = f.fit.intercept;
            prev = pt.lambda2;
            out.push_back(make_fit(pt, std::move(f.coef), stacked_structure(f.theta, est.stacked().layout)));
        }
        return out;
    };
}

GridFitter m1_adaptive_fitter(double rho, StackOptions opts, SolverConfig cfg)
{
    return [rho, opts, cfg](const StratifiedDataset& data, const std::vector<GridPoint>& points) {
        const auto weights = AdaptiveWeights::from_initial(initial_estimates(data, has_intercept(opts)), rho);
        M1Estimator est(data, weights, opts, cfg);
        std::vector<GridFit> out;
        Eigen::VectorXd warm;
        double warm_b = 0.0, prev = kInf;
        for (const auto& pt : points) {
            const bool use = warm.size() > 0 && pt.lambda2 <= prev;
            M1Fit f = est.fit(PenaltySpec::uniform(data.strata(), pt.lambda1, pt.lambda2), use ? &warm : nullptr,
                              use ? warm_b : 0.0);
            warm = f.fit.theta;
            warm_b = f.fit.intercept;
            prev = pt.lambda2;
            out.push_back(make_fit(pt, std::move(f.coef), stacked_structure(f.theta, est.stacked().layout)));
        }
        return out;
    };
}

std::vector<GridPoint> expand_phi(const std::vector<GridPoint>& points, const std::vector<double>& phis)
{
    std::vector<GridPoint> out;
    for (const auto& pt : points)
        for (double phi : phis) out.push_back({pt.lambda1, pt.lambda2, phi});
    return out;
}

GridFitter m1_relaxed_fitter(StackOptions opts, SolverConfig cfg)
{
    return [opts, cfg](const StratifiedDataset& data, const std::vector<GridPoint>& points) {
        std::vector<GridFit> out;
        const StackLayout layout = StackLayout::for_mode(data.features(), data.strata(), opts.intercept_mode);
        for (std::size_t i = 0; i < points.size();) {
            std::size_t end = i;
            RelaxSpec relax;
            relax.grid.clear();
            while (end < points.size() && points[end].lambda1 == points[i].lambda1 &&
                   points[end].lambda2 == points[i].lambda2)
                relax.grid.push_back(points[end++].phi);
            const auto pen = PenaltySpec::uniform(data.strata(), points[i].lambda1, points[i].lambda2);
            auto fits = fit_m1_relaxed(data, pen, relax, opts, cfg);
            for (std::size_t r = 0; r < fits.size(); ++r) {
                Structure st = stacked_structure(fits[r].fit.theta, layout);
                out.push_back(make_fit(points[i + r], std::move(fits[r].fit.coef), std::move(st)));
            }
            i = end;
        }
        return out;
    };
}

namespace {

GridFitter m2_path(double rho, bool adaptive, bool intercept, SolverConfig cfg)
{
    return [=](const StratifiedDataset& data, const std::vector<GridPoint>& points) {
        std::optional<AdaptiveWeights> weights;
        if (adaptive) weights = AdaptiveWeights::from_initial(initial_estimates(data, intercept), rho);
        std::vector<GridFit> out;
        std::optional<CoefMatrix> warm;
        double prev = kInf;
        for (const auto& pt : points) {
            if (pt.lambda2 > prev) warm.reset();
            const auto pen = M2PenaltySpec::uniform(data.strata(), pt.lambda1, pt.lambda2);
            const M2Problem pr = weights ? make_adaptive_m2_problem(data, pen, *weights, intercept)
                                         : make_m2_problem(data, pen, intercept);
            M2Fit f = solve_m2(pr, cfg, warm ? &*warm : nullptr);
            warm = f.coef;
            prev = pt.lambda2;
            Structure st = fused_structure(f.coef);
            out.push_back(make_fit(pt, std::move(f.coef), std::move(st)));
        }
        return out;
    };
}

} // namespace

GridFitter m2_fitter(bool intercept, SolverConfig cfg)
{
    return m2_path(0.0, false, intercept, cfg);
}

GridFitter m2_adaptive_fitter(double rho, bool intercept, SolverConfig cfg)
{
    return m2_path(rho, true, intercept, cfg);
}

GridFitter indep_fitter(bool intercept, SolverConfig cfg)
{
    return [=](const StratifiedDataset& data, const std::vector<GridPoint>& points) {
        std::vector<GridFit> out;
        for (const auto& pt : points) {
            BaselineFit f = fit_indep(data, std::vector<double>(data.strata(), pt.lambda1), cfg, intercept);
            Structure st = support_structure(f.coef);
            out.push_back(make_fit(pt, std::move(f.coef), std::move(st)));
        }
        return out;
    };
}

GridFitter ident_fitter(bool intercept, SolverConfig cfg)
{
    return [=](const StratifiedDataset& data, const std::vector<GridPoint>& points) {
        std::vector<GridFit> out;
        for (const auto& pt : points) {
            BaselineFit f = fit_ident(data, pt.lambda1, cfg, intercept);
            Structure st = ident_structure(f.coef, intercept);
            out.push_back(make_fit(pt, std::move(f.coef), std::move(st)));
        }
        return out;
    };
}

GridFitter inter_fitter(int reference, SolverConfig cfg)
{
    return [=](const StratifiedDataset& data, const std::vector<GridPoint>& points) {
        std::vector<GridFit> out;
        const int K = data.strata();
        for (const auto& pt : points) {
            BaselineFit f = fit_inter(data, reference, PenaltySpec::uniform(K, pt.lambda1, pt.lambda2), cfg);
            Structure st = inter_structure(f.coef, reference);
            out.push_back(make_fit(pt, std::move(f.coef), std::move(st)));
        }
        return out;
    };
}

Refit refit_structure(const StratifiedDataset& data, const Structure& structure)
{
    const int K = data.strata();
    const int p = data.features();
    const int n = data.rows();
    const int P = static_cast<int>(structure.size());
    bool intercept = false;
    std::vector<int> offset(K + 1, 0);
    for (int k = 0; k < K; ++k) offset[k + 1] = offset[k] + data.rows(k);
    Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(n, P);
    for (int q = 0; q < P; ++q)
        for (const auto& [k, j] : structure[q].cells) {
            if (k < 0 || k >= K || j < -1 || j >= p) throw DimensionError("structure cell outside the dataset");
            if (j < 0) {
                intercept = true;
                Z.col(q).segment(offset[k], data.rows(k)).array() += 1.0;
            } else {
                Z.col(q).segment(offset[k], data.rows(k)) += data.stratum(k).x.col(j);
            }
        }
    const Eigen::VectorXd y = data.pooled_y();

    Refit out;
    out.coef.B = Eigen::MatrixXd::Zero(p, K);
    if (intercept) out.coef.intercepts = Eigen::VectorXd::Zero(K);
    auto singular = [&] {
        out.singular = true;
        out.score = kInf;
        out.loss = kInf;
        return out;
    };
    if (P >= n) return singular();

    Eigen::VectorXd v = Eigen::VectorXd::Zero(P);
    if (P > 0) {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Z);
        if (qr.rank() < P) return singular();
        if (data.loss() == Loss::linear) {
            v = qr.solve(y);
        } else {
            WeightedLassoProblem pr;
            pr.design = Z.sparseView();
            pr.response = y;
            pr.weights = Eigen::VectorXd::Ones(P);
            pr.lambda = 0.0;
            pr.loss = Loss::logistic;
            SolverConfig cfg;
            cfg.max_iter = 2000;
            try {
                v = solve(pr, cfg).theta;
            } catch (const ConvergenceError&) {
                return singular();
            }
        }
    }
    const Eigen::VectorXd eta = Z * v;
    if (data.loss() == Loss::linear) {
        out.loss = (y - eta).squaredNorm();
        out.score = n * std::log(std::max(out.loss / n, std::numeric_limits<double>::min())) + P * std::log(n);
    } else {
        double dev = 0.0;
        for (int i = 0; i < n; ++i) {
            const double pr = 1.0 / (1.0 + std::exp(-eta(i)));
            dev -= 2.0 * (y(i) > 0.5 ? clipped_log(pr) : clipped_log(1.0 - pr));
        }
        out.loss = dev;
        out.score = dev + P * std::log(n);
    }
    for (int q = 0; q < P; ++q)
        for (const auto& [k, j] : structure[q].cells) (j < 0 ? out.coef.intercepts(k) : out.coef.B(j, k)) += v(q);
    return out;
}

Selection two_step_bic(const StratifiedDataset& data, const GridFitter& fitter, const std::vector<GridPoint>& grid)
{
    if (grid.empty()) throw InvalidArgument("empty tuning grid");
    std::vector<GridFit> fits = fitter(data, grid);
    std::map<Structure, std::size_t> first;
    std::vector<const Structure*> distinct;
    for (const auto& f : fits)
        if (first.emplace(f.structure, distinct.size()).second) distinct.push_back(&f.structure);
    std::vector<Refit> refits(distinct.size());
    parallel_for(distinct.size(), [&](std::size_t i) { refits[i] = refit_structure(data, *distinct[i]); });

    Selection sel;
    for (const auto& f : fits) {
        sel.scores.push_back(refits[first.at(f.structure)].score);
        sel.df.push_back(f.df);
    }
    sel.index = argmin(sel.scores, sel.df, grid);
    sel.refit = refits[first.at(fits[sel.index].structure)].coef;
    sel.score = {"two_step_bic", sel.scores[sel.index], {}};
    sel.fit = std::move(fits[sel.index]);
    return sel;
}

std::vector<std::vector<int>> fold_assignment(const StratifiedDataset& data, int folds, std::uint64_t seed)
{
    if (folds < 2) throw InvalidArgument("cross-validation needs at least 2 folds");
    std::vector<std::vector<int>> out(data.strata());
    for (int k = 0; k < data.strata(); ++k) {
        const int nk = data.rows(k);
        if (nk < folds) throw InvalidArgument("stratum " + data.stratum(k).id + " has fewer rows than folds");
        std::vector<int> perm(nk);
        for (int i = 0; i < nk; ++i) perm[i] = i;
        // seeded by the stratum id so that relabeling strata does not move rows between folds
        Rng(Rng::derive(seed, hash_id(data.stratum(k).id))).shuffle(perm);
        out[k].assign(nk, 0);
        for (int i = 0; i < nk; ++i) out[k][perm[i]] = i % folds;
    }
    return out;
}

Selection cross_validate(const StratifiedDataset& data, const GridFitter& fitter, const std::vector<GridPoint>& grid,
                         int folds, std::uint64_t seed)
{
    if (grid.empty()) throw InvalidArgument("empty tuning grid");
    const auto assign = fold_assignment(data, folds, seed);
    const int K = data.strata();
    // error[f][i]: mean held-out loss of grid point i on fold f
    std::vector<std::vector<double>> error(folds, std::vector<double>(grid.size(), 0.0));
    parallel_for(folds, [&](std::size_t f) {
        std::vector<std::vector<int>> train(K), test(K);
        for (int k = 0; k < K; ++k)
            for (int i = 0; i < data.rows(k); ++i) (assign[k][i] == static_cast<int>(f) ? test : train)[k].push_back(i);
        const auto fits = fitter(data.subset(train), grid);
        const auto held = data.subset(test);
        for (std::size_t g = 0; g < grid.size(); ++g) {
            double sum = 0.0;
            for (int k = 0; k < K; ++k) {
                const Eigen::VectorXd eta = predict(held, fits[g].coef, k);
                const Eigen::VectorXd& y = held.stratum(k).y;
                for (int i = 0; i < y.size(); ++i) {
                    if (data.loss() == Loss::linear) {
                        sum += (y(i) - eta(i)) * (y(i) - eta(i));
                    } else {
                        const double pr = 1.0 / (1.0 + std::exp(-eta(i)));
                        sum -= 2.0 * (y(i) > 0.5 ? clipped_log(pr) : clipped_log(1.0 - pr));
                    }
                }
            }
            error[f][g] = sum / held.rows();
        }
    });
    std::vector<GridFit> full = fitter(data, grid);
    Selection sel;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        double m = 0.0;
        for (int f = 0; f < folds; ++f) m += error[f][g];
        sel.scores.push_back(m / folds);
        sel.df.push_back(full[g].df);
    }
    sel.index = argmin(sel.scores, sel.df, grid);
    sel.score.method = "cv";
    sel.score.value = sel.scores[sel.index];
    for (int f = 0; f < folds; ++f) sel.score.fold_errors.push_back(error[f][sel.index]);
    sel.fit = std::move(full[sel.index]);
    return sel;
}

} // namespace strata
