// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "audit.hpp"
#include "oracles.hpp"
#include "strata/baselines.hpp"
#include "strata/m1.hpp"
#include "strata/m2.hpp"
#include "strata/median.hpp"
#include "strata/methods.hpp"
#include "strata/parallel.hpp"
#include "strata/penalty.hpp"
#include "strata/rng.hpp"
#include "strata/simulation.hpp"
#include "strata/wlasso.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;
using namespace strata;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a)
{
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

std::string fmt(const char* f, double a, double b)
{
    char buf[160];
    std::snprintf(buf, sizeof buf, f, a, b);
    return buf;
}

std::string fmt(const char* f, double a, double b, double c)
{
    char buf[200];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

// ---- 1: stacked lasso vs alternating minimizer -------------------------------

Outcome formulation_equivalence()
{
    const auto t0 = Clock::now();
    oracle::Rng rng(101);
    double worst = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
        const auto data = oracle::random_dataset(rng, 3, 8, 40);
        PenaltySpec pen{rng.uniform(0.02, 0.2), {}};
        for (int k = 0; k < 3; ++k) pen.lambda2.push_back(rng.uniform(0.02, 0.2));
        const M1Fit fit = fit_m1(data, pen);
        const auto alt = oracle::alternating_m1(data, pen);
        worst = std::max(worst, std::abs(m1_objective(data, pen, fit.decomposition) - alt.objective));
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-6 && secs < 10.0, fmt("max objective gap %.2e over 20 instances, %.2f s", worst, secs)};
}

// ---- 3: median characterizations ----------------------------------------------

double shrunk_objective(const std::vector<double>& v, const std::vector<double>& mu, double b)
{
    double g = std::abs(b);
    for (std::size_t k = 0; k < v.size(); ++k) g += mu[k] * std::abs(v[k] - b);
    return g;
}

Outcome median_characterizations()
{
    oracle::Rng rng(103);
    double worst_m1 = 0.0, worst_m2 = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
        const int K = rng.integer(2, 6);
        const auto data = oracle::random_dataset(rng, K, 6, 30);
        PenaltySpec pen{rng.uniform(0.02, 0.3), {}};
        for (int k = 0; k < K; ++k) pen.lambda2.push_back(rng.uniform(0.02, 0.3));
        const M1Fit fit = fit_m1(data, pen);
        std::vector<double> mu(K);
        for (int k = 0; k < K; ++k) mu[k] = pen.lambda2[k] / pen.lambda1;
        for (int j = 0; j < 6; ++j) {
            std::vector<double> row(K);
            for (int k = 0; k < K; ++k) row[k] = fit.coef.B(j, k);
            // piecewise linear: the minimum sits at a kink
            double best = shrunk_objective(row, mu, 0.0);
            for (double b : row) best = std::min(best, shrunk_objective(row, mu, b));
            worst_m1 = std::max(worst_m1, shrunk_objective(row, mu, fit.decomposition.common(j)) - best);
        }

        const auto pen2 = M2PenaltySpec::uniform(K, rng.uniform(0.01, 0.2), rng.uniform(0.01, 0.2));
        const M2Fit m2 = fit_m2(data, pen2);
        for (int j = 0; j < 6; ++j) {
            std::vector<double> row(K);
            for (int k = 0; k < K; ++k) row[k] = m2.coef.B(j, k);
            std::sort(row.begin(), row.end());
            const double lo = K % 2 ? row[K / 2] : row[K / 2 - 1], hi = row[K / 2];
            const double c = m2.common(j);
            worst_m2 = std::max(worst_m2, std::max({lo - c, c - hi, 0.0}));
        }
    }
    return {worst_m1 <= 1e-6 && worst_m2 <= 1e-5,
            fmt("M1 g-value gap %.2e, M2 distance to median set %.2e (20 instances each)", worst_m1, worst_m2)};
}

// ---- 4: limit behaviors --------------------------------------------------------

Outcome limit_behaviors()
{
    oracle::Rng rng(104);
    double indep_gap = 0.0, ident_gap = 0.0, k1_gap = 0.0;
    for (int rep = 0; rep < 5; ++rep) {
        const int K = rng.integer(2, 5);
        const auto data = oracle::random_dataset(rng, K, 6, 30);
        const double l2 = rng.uniform(0.02, 0.2);
        for (double factor : {1.0, 2.0}) {
            const M1Fit fit = fit_m1(data, PenaltySpec::uniform(K, factor * K * l2, l2));
            const BaselineFit ind = fit_indep(data, std::vector<double>(K, l2));
            indep_gap = std::max(indep_gap, (fit.coef.B - ind.coef.B).cwiseAbs().maxCoeff());
        }
        const double l1 = rng.uniform(0.02, 0.2);
        const M1Fit fused = fit_m1(data, PenaltySpec::uniform(K, l1, 1e6 * l1));
        const BaselineFit id = fit_ident(data, l1);
        ident_gap = std::max(ident_gap, (fused.coef.B - id.coef.B).cwiseAbs().maxCoeff());

        const auto one = oracle::random_dataset(rng, 1, 6, 30);
        const double a = rng.uniform(0.02, 0.2), b = rng.uniform(0.02, 0.2);
        SolverConfig tight;
        tight.tol = 1e-11;
        const M1Fit f1 = fit_m1(one, PenaltySpec::uniform(1, a, b), {}, tight);
        const VectorXd ref = oracle::cd_lasso(one.stratum(0).x, one.stratum(0).y, VectorXd::Constant(6, std::min(a, b)),
                                              30, VectorXd::Zero(6), 200000, 1e-15);
        k1_gap = std::max(k1_gap, (f1.coef.B.col(0) - ref).cwiseAbs().maxCoeff());
    }
    return {indep_gap <= 1e-6 && ident_gap <= 1e-4 && k1_gap <= 1e-8,
            fmt("M1 vs indep %.2e, M1 vs ident %.2e, K=1 vs lasso %.2e", indep_gap, ident_gap, k1_gap)};
}

// ---- 5: penalty lemma ------------------------------------------------------------

Outcome penalty_lemma()
{
    const auto t0 = Clock::now();
    LemmaOptions opts;
    opts.trials = 10000;
    const auto rows = penalty_lemma_table(opts);
    int bad_same = 0, bad_opposite = 0, opposite = 0;
    for (const auto& r : rows) {
        if (r.inst.beta1 * r.inst.beta2 >= 0.0) {
            bad_same += !(r.gap <= 1e-9);
        } else {
            ++opposite;
            const bool clear = std::min(std::abs(r.inst.beta1), std::abs(r.inst.beta2)) > 1e-3;
            bad_opposite += !(r.gap > 1e-9) || (clear && !(r.gap > 1e-6 * r.inst.lambda2));
        }
    }
    const double secs = seconds_since(t0);
    std::ostringstream os;
    os << rows.size() << " instances (" << opposite << " opposite-sign), " << bad_same << " same-sign with a gap, "
       << bad_opposite << " opposite-sign without, " << fmt("%.2f s", secs);
    return {rows.size() == 10000 && bad_same == 0 && bad_opposite == 0 && secs < 5.0, os.str()};
}

// ---- 6: orthonormal closed form ----------------------------------------------------

Outcome orthonormal_closed_form()
{
    oracle::Rng rng(106);
    double worst = 0.0;
    for (int rep = 0; rep < 50; ++rep) {
        const int n = 40, d = rng.integer(2, 10);
        const Eigen::HouseholderQR<MatrixXd> qr(rng.normal_matrix(n, d));
        const MatrixXd q = MatrixXd(qr.householderQ()).leftCols(d) * std::sqrt(double(n));
        WeightedLassoProblem pr;
        pr.design = q.sparseView();
        pr.response = rng.normal_vector(n);
        pr.weights = VectorXd(d);
        for (int j = 0; j < d; ++j) pr.weights(j) = rng.uniform(0.2, 2.0);
        pr.lambda = rng.uniform(0.01, 0.5);
        const FitResult fit = solve(pr);
        for (int j = 0; j < d; ++j) {
            const double z = q.col(j).dot(pr.response) / n, t = pr.lambda * pr.weights(j);
            const double closed = z > t ? z - t : z < -t ? z + t : 0.0;
            worst = std::max(worst, std::abs(fit.theta(j) - closed));
        }
    }
    return {worst <= 1e-8, fmt("max coordinate difference %.2e over 50 designs", worst)};
}

// ---- 7: logistic gradient -------------------------------------------------------------

Outcome logistic_gradient_check()
{
    oracle::Rng rng(107);
    double worst = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
        const int n = rng.integer(10, 60), d = rng.integer(1, 8);
        const MatrixXd x = rng.normal_matrix(n, d);
        WeightedLassoProblem pr;
        pr.design = x.sparseView();
        pr.response = VectorXd(n);
        for (int i = 0; i < n; ++i) pr.response(i) = rng.uniform() < 0.5 ? 1.0 : 0.0;
        pr.weights = VectorXd::Ones(d);
        pr.lambda = 0.0;
        pr.loss = Loss::logistic;
        pr.unpenalized_intercept = true;
        const VectorXd theta = rng.normal_vector(d);
        const double b = rng.normal();
        const VectorXd g = logistic_gradient(theta, pr, b);
        VectorXd fd(d);
        const double h = 1e-5;
        for (int j = 0; j < d; ++j) {
            VectorXd up = theta, down = theta;
            up(j) += h;
            down(j) -= h;
            fd(j) = (objective(pr, up, b) - objective(pr, down, b)) / (2 * h);
        }
        worst = std::max(worst, (g - fd).norm() / std::max(fd.norm(), 1e-300));
    }
    return {worst <= 1e-6, fmt("max relative error %.2e at 100 points", worst)};
}

// ---- 8 and 9: study-1 reproduction -----------------------------------------------------

struct CellResult {
    double sp_glob = 0.0, sp_spec = 0.0;
    std::map<Method, std::vector<double>> prediction, accuracy;
};

CellResult study1_cell(double sp_glob, double sp_spec, std::uint64_t seed)
{
    const std::vector<Method> methods{Method::m1, Method::m1_adaptive, Method::ident, Method::indep};
    ReplicationSpec spec;
    spec.design = SimulationDesign::defaults(DesignKind::study1);
    spec.design.sp_glob = sp_glob;
    spec.design.sp_spec = sp_spec;
    spec.design.sigma2 = 1.0;
    spec.design.seed = seed;
    spec.replications = 20;
    spec.methods = methods;
    spec.options.selection = Selector::two_step_bic;
    const auto rows = run_replications(spec);
    CellResult out;
    out.sp_glob = sp_glob;
    out.sp_spec = sp_spec;
    for (const auto& r : rows) {
        if (r.metric == "prediction") out.prediction[r.method].push_back(r.value);
        if (r.metric == "accuracy") out.accuracy[r.method].push_back(r.value);
    }
    return out;
}

double mean(const std::vector<double>& v)
{
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

// one-sided sign test: P(X >= wins) for X ~ Binomial(n, 1/2), ties dropped
double sign_test(const std::vector<double>& better, const std::vector<double>& worse, int& wins, int& n)
{
    wins = n = 0;
    for (std::size_t i = 0; i < better.size(); ++i) {
        if (better[i] == worse[i]) continue;
        ++n;
        wins += better[i] < worse[i];
    }
    double p = 0.0;
    for (int k = wins; k <= n; ++k) p += std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) -
                                                  n * std::log(2.0));
    return p;
}

std::vector<CellResult> g_cells;
double g_study_seconds = 0.0;

void run_study1()
{
    if (!g_cells.empty()) return;
    const auto t0 = Clock::now();
    g_cells.push_back(study1_cell(0.4, 0.0, 801));
    g_cells.push_back(study1_cell(0.1, 0.5, 802));
    g_study_seconds = seconds_since(t0);
}

bool within(double a, double ref, double rel)
{
    return std::abs(a - ref) <= rel * std::abs(ref);
}

Outcome study1_reproduction()
{
    run_study1();
    const CellResult& shared = g_cells[0];
    const CellResult& specific = g_cells[1];
    const double m1a = mean(shared.prediction.at(Method::m1)), ida = mean(shared.prediction.at(Method::ident));
    const double ina = mean(shared.prediction.at(Method::indep));
    int wins = 0, n = 0;
    const double p = sign_test(shared.prediction.at(Method::m1), shared.prediction.at(Method::indep), wins, n);
    const double m1b = mean(specific.prediction.at(Method::m1)), inb = mean(specific.prediction.at(Method::indep));
    const bool pass = within(m1a, ida, 0.05) && m1a < ina && p < 0.05 && within(m1b, inb, 0.05) &&
                      g_study_seconds < 600.0;
    std::ostringstream os;
    os << fmt("SpSpec=0: M1 %.4f, ident %.4f, indep %.4f", m1a, ida, ina) << ", M1 beats indep " << wins << "/" << n
       << fmt(" (p=%.2g)", p) << fmt("; SpGlob=0.1 SpSpec=0.5: M1 %.4f, indep %.4f", m1b, inb)
       << fmt("; %.1f s", g_study_seconds);
    return {pass, os.str()};
}

Outcome adaptive_gain()
{
    run_study1();
    bool pass = true;
    std::ostringstream os;
    for (const auto& c : g_cells) {
        const double a = mean(c.accuracy.at(Method::m1_adaptive)), m = mean(c.accuracy.at(Method::m1));
        pass = pass && a >= m;
        os << fmt("(%.1f, %.1f)", c.sp_glob, c.sp_spec) << fmt(": adaptive %.4f vs plain %.4f; ", a, m);
    }
    return {pass, os.str()};
}

// ---- 10: M2 oracle -------------------------------------------------------------------------

Outcome m2_oracle()
{
    oracle::Rng rng(110);
    double worst = 0.0, below = -kInf;
    for (int rep = 0; rep < 10; ++rep) {
        const auto data = oracle::random_dataset(rng, 3, 4, 40);
        M2PenaltySpec pen;
        for (int k = 0; k < 3; ++k) {
            pen.lambda1.push_back(rng.uniform(0.01, 0.1));
            pen.lambda2.push_back(rng.uniform(0.01, 0.1));
        }
        const M2Fit fit = fit_m2(data, pen);
        const double best = oracle::m2_subgradient_oracle(data, pen, 20, 100000, rng);
        worst = std::max(worst, std::abs(fit.fit.objective - best));
        below = std::max(below, fit.fit.objective - best);
    }
    return {worst <= 1e-4,
            fmt("max |objective - oracle| %.2e over 10 instances (fit above oracle by at most %.2e)", worst, below)};
}

// ---- 11: CLI determinism ----------------------------------------------------------------------

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome cli_determinism()
{
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "strata_acceptance_cli";
    fs::remove_all(dir);
    fs::create_directories(dir);
    oracle::Rng rng(111);
    write_csv(oracle::random_dataset(rng, 3, 5, 40), dir / "toy.csv");
    {
        std::ofstream cfg(dir / "run.cfg");
        cfg << "# shared settings\ninput = " << (dir / "toy.csv").string() << "\nseed = 7\nn_ratios = 8\nn_lambda = 8\n"
            << "n_lambda1 = 4\nn_lambda2 = 4\nfolds = 4\n";
    }
    const std::vector<std::string> runs{
        "fit --method m1 --lambda1 0.1 --lambda2 0.05",
        "fit --method m2 --lambda1 0.05 --lambda2 0.05",
        "tune --method m1 --selection 2step-bic",
        "tune --method m1-adaptive --selection cv",
        "tune --method indep --selection cv",
        "simulate --design study1 --p 5 --n_k 40 --replications 3 --methods m1,ident",
        "penalty-lemma --trials 200",
    };
    int same = 0, failed = 0;
    std::string first_issue;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        std::string out[2];
        // the output path is part of the embedded config, so both runs write to the same file
        const fs::path file = dir / ("out" + std::to_string(i));
        for (int t = 0; t < 2; ++t) {
            const std::string cmd = std::string(STRATA_CLI_PATH) + " " + runs[i] + " --config " +
                                    (dir / "run.cfg").string() + " --output " + file.string() + " 2>" +
                                    (dir / "err").string();
            if (std::system(cmd.c_str()) != 0) {
                ++failed;
                if (first_issue.empty()) first_issue = runs[i] + ": " + slurp(dir / "err");
            }
            out[t] = slurp(file);
        }
        if (!out[0].empty() && out[0] == out[1]) {
            ++same;
        } else if (first_issue.empty()) {
            first_issue = runs[i] + ": outputs differ";
        }
    }
    std::ostringstream os;
    os << same << "/" << runs.size() << " commands byte-identical across two runs";
    if (!first_issue.empty()) os << "; " << first_issue;
    return {same == static_cast<int>(runs.size()) && failed == 0, os.str()};
}

} // namespace

int main()
{
    audit::install();
    const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
        {1, formulation_equivalence}, {3, median_characterizations}, {4, limit_behaviors},
        {5, penalty_lemma},           {6, orthonormal_closed_form},  {7, logistic_gradient_check},
        {8, study1_reproduction},     {9, adaptive_gain},            {10, m2_oracle},
        {11, cli_determinism},
    };
    std::map<int, Outcome> results;
    int exceptions = 0;
    for (const auto& [id, run] : criteria) {
        try {
            results[id] = run();
        } catch (const std::exception& e) {
            ++exceptions;
            results[id] = {false, std::string("exception: ") + e.what()};
        }
        std::fprintf(stderr, "criterion %d done\n", id);
    }
    const auto s = audit::summary();
    std::ostringstream os;
    os << s.lasso_fits << " weighted lasso and " << s.m2_fits << " M2 fits re-checked, " << s.violations
       << " violations" << fmt(", worst residual %.2e", s.worst) << ", " << exceptions << " exceptions";
    if (s.violations) os << "; first: " << s.first_violation;
    results[2] = {s.violations == 0 && exceptions == 0 && s.lasso_fits > 0 && s.m2_fits > 0, os.str()};

    bool all = true;
    for (const auto& [id, r] : results) {
        std::printf("criterion %2d: %s  %s\n", id, r.pass ? "PASS" : "FAIL", r.detail.c_str());
        all = all && r.pass;
    }
    std::fflush(stdout);
    return all ? 0 : 1;
}
