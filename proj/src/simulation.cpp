#include "strata/simulation.hpp"

#include <cmath>
#include <limits>

#include "strata/error.hpp"
#include "strata/median.hpp"
#include "strata/rng.hpp"
#include "strata/wlasso.hpp"

namespace strata {

const char* to_string(DesignKind kind)
{
    switch (kind) {
    case DesignKind::study1: return "study1";
    case DesignKind::study2: return "study2";
    case DesignKind::twotask: return "twotask";
    case DesignKind::confbetas: return "confbetas";
    }
    return "?";
}

DesignKind design_kind_from_string(const std::string& name)
{
    if (name == "confbetas_pattern") return DesignKind::confbetas;
    for (auto k : {DesignKind::study1, DesignKind::study2, DesignKind::twotask, DesignKind::confbetas})
        if (name == to_string(k)) return k;
    throw InvalidArgument("unknown design: " + name);
}

const char* to_string(Covariance c)
{
    return c == Covariance::identity ? "identity" : "toeplitz_half";
}

Covariance covariance_from_string(const std::string& name)
{
    if (name == "identity") return Covariance::identity;
    if (name == "toeplitz_half") return Covariance::toeplitz_half;
    throw InvalidArgument("unknown covariance: " + name);
}

const char* to_string(Heterogeneity h)
{
    switch (h) {
    case Heterogeneity::none: return "none";
    case Heterogeneity::low: return "low";
    case Heterogeneity::moderate: return "moderate";
    }
    return "?";
}

Heterogeneity heterogeneity_from_string(const std::string& name)
{
    for (auto h : {Heterogeneity::none, Heterogeneity::low, Heterogeneity::moderate})
        if (name == to_string(h)) return h;
    throw InvalidArgument("unknown heterogeneity level: " + name);
}

SimulationDesign SimulationDesign::defaults(DesignKind kind)
{
    SimulationDesign d;
    d.kind = kind;
    switch (kind) {
    case DesignKind::study1: break;
    case DesignKind::study2:
        d.p = 100;
        d.n_k = 100;
        d.covariance = Covariance::identity;
        break;
    case DesignKind::twotask:
        d.K = 2;
        d.p = 128;
        d.sigma2 = 0.1;
        d.covariance = Covariance::identity;
        d.n_k = twotask_sample_size(d.p, d.alpha, d.c);
        break;
    case DesignKind::confbetas:
        d.K = 10;
        d.p = 4;
        d.n_k = 50;
        d.covariance = Covariance::identity;
        break;
    }
    return d;
}

namespace {

int twotask_support(int p)
{
    return p / 10;
}

int delta_count(Heterogeneity h)
{
    switch (h) {
    case Heterogeneity::none: return 0;
    case Heterogeneity::low: return 5;
    case Heterogeneity::moderate: return 15;
    }
    return 0;
}

double random_sign(Rng& rng)
{
    return rng.uniform() < 0.5 ? -1.0 : 1.0;
}

// First m entries of a uniformly random permutation of [0, n).
std::vector<int> sample_without_replacement(Rng& rng, int n, int m)
{
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    rng.shuffle(idx);
    idx.resize(m);
    return idx;
}

} // namespace

int twotask_sample_size(int p, double alpha, double c)
{
    const int s = twotask_support(p);
    const double rest = p - (2.0 - alpha) * s;
    if (s < 1 || !(rest > 1.0)) throw InvalidArgument("two-task design needs s >= 1 and (2 - alpha) s < p - 1");
    return static_cast<int>(std::ceil(c * s * std::log(rest) / 2.0));
}

void SimulationDesign::validate() const
{
    if (K < 1 || p < 1 || n_k < 1) throw InvalidArgument("K, p and n_k must be positive");
    if (!(sp_glob >= 0.0 && sp_glob <= 1.0) || !(sp_spec >= 0.0 && sp_spec <= 1.0))
        throw InvalidArgument("sparsity levels must lie in [0, 1]");
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw InvalidArgument("sigma2 must be positive");
    if (snr && (!(*snr > 0.0) || !std::isfinite(*snr))) throw InvalidArgument("snr must be positive");
    switch (kind) {
    case DesignKind::study1: break;
    case DesignKind::study2:
        if (p < 10) throw InvalidArgument("study2 needs p >= 10");
        if (delta_count(heterogeneity) > 10 * K) throw InvalidArgument("study2 deviations exceed the 10 K cells");
        break;
    case DesignKind::twotask:
        if (K != 2) throw InvalidArgument("twotask has K = 2");
        if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must lie in [0, 1]");
        if (!(c > 0.0) || !(beta > 0.0)) throw InvalidArgument("c and beta must be positive");
        twotask_sample_size(p, alpha, c);
        break;
    case DesignKind::confbetas:
        if (K != 10) throw InvalidArgument("confbetas has K = 10");
        if (pattern < 0 || pattern > 4) throw InvalidArgument("confbetas pattern must be 0..4");
        break;
    }
}

std::vector<std::vector<double>> confbetas_patterns()
{
    return {
        // distinct nonzeros, zeros shared; median 0
        {-1.0, -0.6, -0.3, 0.0, 0.0, 0.0, 0.0, 0.4, 0.8, 1.2},
        // one zero, the rest at or around the median 0.5
        {0.0, 0.2, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.9, 1.3},
        // median interval [-0.45, 0]
        {-1.2, -0.9, -0.7, -0.45, -0.45, 0.0, 0.0, 0.0, 0.6, 1.0},
        // two groups of equal nonzeros; median 0
        {-0.8, -0.8, -0.8, -0.3, 0.0, 0.0, 0.2, 0.7, 0.7, 0.7},
    };
}

Eigen::MatrixXd design_covariance(const SimulationDesign& design)
{
    const int p = design.p;
    if (design.covariance == Covariance::identity) return Eigen::MatrixXd::Identity(p, p);
    Eigen::MatrixXd s(p, p);
    for (int a = 0; a < p; ++a)
        for (int b = 0; b < p; ++b) s(a, b) = std::ldexp(1.0, -std::abs(a - b));
    return s;
}

namespace {

GroundTruth truth_from(Rng& rng, const SimulationDesign& d)
{
    const int p = d.p, K = d.K;
    GroundTruth t;
    t.common_star = Eigen::VectorXd::Zero(p);
    t.deviations_star = Eigen::MatrixXd::Zero(p, K);
    switch (d.kind) {
    case DesignKind::study1:
        for (int j = 0; j < p; ++j) t.common_star(j) = rng.bernoulli(d.sp_glob) ? 1.0 : 0.0;
        for (int k = 0; k < K; ++k)
            for (int j = 0; j < p; ++j) t.deviations_star(j, k) = rng.bernoulli(d.sp_spec) ? 1.0 : 0.0;
        break;
    case DesignKind::study2: {
        for (int j : sample_without_replacement(rng, 10, 4)) t.common_star(j) = 1.0;
        for (int cell : sample_without_replacement(rng, 10 * K, delta_count(d.heterogeneity)))
            t.deviations_star(cell % 10, cell / 10) = random_sign(rng);
        break;
    }
    case DesignKind::twotask: {
        const int s = twotask_support(p);
        const int shared = static_cast<int>(std::floor(d.alpha * s));
        const std::vector<int> idx = sample_without_replacement(rng, p, 2 * s - shared);
        for (int i = 0; i < shared; ++i) t.common_star(idx[i]) = d.beta * random_sign(rng);
        for (int i = 0; i < s - shared; ++i) {
            t.deviations_star(idx[shared + i], 0) = d.beta * random_sign(rng);
            t.deviations_star(idx[s + i], 1) = d.beta * random_sign(rng);
        }
        break;
    }
    case DesignKind::confbetas: {
        const auto patterns = confbetas_patterns();
        for (int j = 0; j < p; ++j) {
            const auto& row = patterns[d.pattern == 0 ? j % 4 : d.pattern - 1];
            const double center = median_set(row).closest_to_zero();
            t.common_star(j) = center;
            for (int k = 0; k < K; ++k) t.deviations_star(j, k) = row[k] - center;
        }
        break;
    }
    }
    t.B_star = t.deviations_star.colwise() + t.common_star;
    const Eigen::MatrixXd sigma = design_covariance(d);
    t.sigma2 = d.sigma2;
    if (d.snr) {
        double signal = 0.0;
        for (int k = 0; k < K; ++k) signal += t.B_star.col(k).dot(sigma * t.B_star.col(k));
        signal /= K;
        if (signal > 0.0) t.sigma2 = signal / *d.snr;
    }
    return t;
}

} // namespace

GroundTruth make_truth(const SimulationDesign& design)
{
    design.validate();
    Rng rng(design.seed);
    return truth_from(rng, design);
}

std::pair<StratifiedDataset, GroundTruth> generate(const SimulationDesign& design)
{
    design.validate();
    Rng rng(design.seed);
    GroundTruth truth = truth_from(rng, design);
    const int n_k = design.kind == DesignKind::twotask ? twotask_sample_size(design.p, design.alpha, design.c)
                                                         : design.n_k;
    const Eigen::MatrixXd L = design_covariance(design).llt().matrixL();
    const double sd = std::sqrt(truth.sigma2);
    std::vector<Eigen::MatrixXd> xs;
    std::vector<Eigen::VectorXd> ys;
    for (int k = 0; k < design.K; ++k) {
        Eigen::MatrixXd z(n_k, design.p);
        for (int i = 0; i < n_k; ++i)
            for (int j = 0; j < design.p; ++j) z(i, j) = rng.normal();
        Eigen::MatrixXd x = z * L.transpose();
        Eigen::VectorXd y = x * truth.B_star.col(k);
        for (int i = 0; i < n_k; ++i) y(i) += sd * rng.normal();
        xs.push_back(std::move(x));
        ys.push_back(std::move(y));
    }
    return {StratifiedDataset::from_blocks(std::move(xs), std::move(ys)), std::move(truth)};
}

namespace {

void check_shape(const GroundTruth& truth, const CoefMatrix& est)
{
    if (est.B.rows() != truth.B_star.rows() || est.B.cols() != truth.B_star.cols())
        throw DimensionError("estimate and truth have different shapes");
}

} // namespace

PredictionMetric metric_prediction(const GroundTruth& truth, const CoefMatrix& est, const StratifiedDataset& data)
{
    check_shape(truth, est);
    if (data.strata() != est.strata() || data.features() != est.features())
        throw DimensionError("estimate does not match the dataset");
    double sum = 0.0;
    for (int k = 0; k < data.strata(); ++k)
        sum += (data.stratum(k).x * (truth.B_star.col(k) - est.B.col(k))).squaredNorm();
    if (sum == 0.0) return {-std::numeric_limits<double>::infinity(), true};
    return {std::log(sum), false};
}

double metric_estimation(const GroundTruth& truth, const CoefMatrix& est)
{
    check_shape(truth, est);
    return (truth.B_star - est.B).squaredNorm() / static_cast<double>(truth.B_star.size());
}

SupportMetric metric_support(const GroundTruth& truth, const CoefMatrix& est)
{
    check_shape(truth, est);
    long correct = 0, tp = 0, fp = 0, fn = 0;
    for (Eigen::Index i = 0; i < truth.B_star.size(); ++i) {
        const bool t = truth.B_star.data()[i] != 0.0, e = est.B.data()[i] != 0.0;
        correct += t == e;
        tp += t && e;
        fp += !t && e;
        fn += t && !e;
    }
    SupportMetric m;
    m.accuracy = static_cast<double>(correct) / static_cast<double>(truth.B_star.size());
    m.f1 = tp + fp + fn == 0 ? 1.0 : 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
    return m;
}

CoefMatrix hard_threshold(const CoefMatrix& est, double t)
{
    if (!(t >= 0.0)) throw InvalidArgument("threshold must be >= 0");
    CoefMatrix out = est;
    for (Eigen::Index i = 0; i < out.B.size(); ++i)
        if (std::abs(out.B.data()[i]) < t) out.B.data()[i] = 0.0;
    return out;
}

} // namespace strata
