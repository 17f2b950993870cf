#include "strata/m2.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include "strata/error.hpp"
#include "strata/median.hpp"

namespace strata {

namespace {

std::mutex observer_mutex;
M2Observer observer;

void notify(const M2Problem& problem, const M2Fit& fit)
{
    M2Observer copy;
    {
        std::lock_guard lock(observer_mutex);
        copy = observer;
    }
    if (copy) copy(problem, fit);
}

constexpr double kProbClip = 1e-5;

double sigmoid(double eta)
{
    if (eta >= 0) return 1.0 / (1.0 + std::exp(-eta));
    const double e = std::exp(eta);
    return e / (1.0 + e);
}

double softplus(double eta)
{
    return std::max(eta, 0.0) + std::log1p(std::exp(-std::abs(eta)));
}

double sign(double x)
{
    return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
}

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

Range operator+(Range a, Range b)
{
    return {a.lo + b.lo, a.hi + b.hi};
}

double dist(const Range& a, const Range& b)
{
    if (a.hi < b.lo) return b.lo - a.hi;
    if (b.hi < a.lo) return a.lo - b.hi;
    return 0.0;
}

// (c/2)(b - z)^2 + t |b| as a function of b: its subdifferential.
Range quad_abs_subgradient(double c, double z, double t, double b)
{
    const double g = c * (b - z);
    if (b != 0.0) return {g + t * sign(b), g + t * sign(b)};
    return {g - t, g + t};
}

// One stratum of a block: (c/2)(beta - z)^2 + t1 |beta| + t2 |beta - b|.
struct Leaf {
    double c = 0.0;
    double z = 0.0;
    double t1 = 0.0;
    double t2 = 0.0;

    double optimum(double b) const
    {
        if (std::isinf(t1)) return 0.0;
        if (std::isinf(t2)) return b;
        if (c <= 0.0) return t1 < t2 ? b : 0.0;
        return prox_two_kink(z, c, b, t1, t2);
    }

    // Subdifferential at b of phi(b) = min over beta of the leaf term.
    Range subgradient(double b) const
    {
        if (std::isinf(t1)) {
            if (b != 0.0) return {t2 * sign(b), t2 * sign(b)};
            return {-t2, t2};
        }
        if (std::isinf(t2)) return quad_abs_subgradient(c, z, t1, b);
        if (c <= 0.0) {
            const double m = std::min(t1, t2);
            if (b != 0.0) return {m * sign(b), m * sign(b)};
            return {-m, m};
        }
        const double beta = prox_two_kink(z, c, b, t1, t2);
        if (beta != b) return {t2 * sign(b - beta), t2 * sign(b - beta)};
        if (b != 0.0) return quad_abs_subgradient(c, z, t1, b);
        return {std::max(-t2, -c * z - t1), std::min(t2, -c * z + t1)};
    }
};

struct Block {
    std::vector<Leaf> leaves;
    bool center_term = false;  // adaptive: the reference stratum's own terms
    double c0 = 0.0, z0 = 0.0, t0 = 0.0;

    Range subgradient(double b) const
    {
        Range r{0.0, 0.0};
        if (center_term) r = quad_abs_subgradient(c0, z0, t0, b);
        for (const auto& l : leaves) r = r + l.subgradient(b);
        return r;
    }

    bool pinned() const
    {
        if (center_term && std::isinf(t0)) return true;
        for (const auto& l : leaves)
            if (std::isinf(l.t1) && std::isinf(l.t2)) return true;
        return false;
    }

    double solve_center() const
    {
        if (pinned()) return 0.0;
        bool any_fusion = center_term;
        for (const auto& l : leaves) any_fusion = any_fusion || l.t2 > 0.0;
        if (!any_fusion) {
            // Center does not enter the objective: take the median of the leaves.
            std::vector<double> v;
            v.reserve(leaves.size());
            for (const auto& l : leaves) v.push_back(l.optimum(0.0));
            return median_set(v).midpoint();
        }
        double lo = 0.0, hi = 0.0;
        auto widen = [&](double z) {
            lo = std::min(lo, z);
            hi = std::max(hi, z);
        };
        if (center_term && c0 > 0.0) widen(z0);
        for (const auto& l : leaves)
            if (l.c > 0.0 && std::isfinite(l.t1)) widen(l.z);
        const double span = 1.0 + (hi - lo);
        lo -= span;
        hi += span;

        // Leftmost point where the upper subgradient reaches 0, rightmost where
        // the lower one does; the minimizer set lies between.
        auto lower_end = [&](double a, double c) {
            if (subgradient(a).hi >= 0.0) return a;
            for (int it = 0; it < 200; ++it) {
                const double m = 0.5 * (a + c);
                if (m <= a || m >= c) break;
                if (subgradient(m).hi >= 0.0) c = m;
                else a = m;
            }
            return c;
        };
        auto upper_end = [&](double a, double c) {
            if (subgradient(c).lo <= 0.0) return c;
            for (int it = 0; it < 200; ++it) {
                const double m = 0.5 * (a + c);
                if (m <= a || m >= c) break;
                if (subgradient(m).lo <= 0.0) a = m;
                else c = m;
            }
            return a;
        };

        const Range at0 = subgradient(0.0);
        double bl, bu;
        if (at0.lo <= 0.0 && at0.hi >= 0.0) {
            bl = lower_end(lo, 0.0);
            bu = upper_end(0.0, hi);
            if (bl == 0.0 && bu == 0.0) return 0.0;
        } else if (at0.lo > 0.0) {
            bl = lower_end(lo, 0.0);
            bu = upper_end(lo, 0.0);
        } else {
            bl = lower_end(0.0, hi);
            bu = upper_end(0.0, hi);
        }
        return 0.5 * (bl + bu);
    }
};

// Per-stratum working quantities of the quadratic model
// sum_k sum_i w_i (r_i)^2 / (2n), r = working response - X beta - intercept.
struct Working {
    std::vector<Eigen::VectorXd> resid;
    std::vector<Eigen::VectorXd> weights;  // empty for unit weights
    Eigen::MatrixXd colsq;                 // K x p: sum_i w_i x_ij^2 / n
    std::vector<double> wsum;              // sum_i w_i per stratum
};

double inner_product(const Eigen::VectorXd& x, const Eigen::VectorXd& r, const Eigen::VectorXd* w)
{
    return w ? (x.array() * w->array() * r.array()).sum() : x.dot(r);
}

// Gradients of the smooth loss at (B, intercepts), from the data.
void loss_gradients(const M2Problem& pr, const Eigen::MatrixXd& B, const Eigen::VectorXd& b0, Eigen::MatrixXd& G,
                    Eigen::VectorXd& g0)
{
    const auto& data = *pr.data;
    const int K = data.strata();
    const double n = data.rows();
    G.resize(B.rows(), K);
    g0.setZero(K);
    for (int k = 0; k < K; ++k) {
        const auto& s = data.stratum(k);
        Eigen::VectorXd eta = s.x * B.col(k);
        if (b0.size() > 0) eta.array() += b0(k);
        Eigen::VectorXd u(eta.size());
        for (Eigen::Index i = 0; i < eta.size(); ++i)
            u(i) = (data.loss() == Loss::linear ? eta(i) : sigmoid(eta(i))) - s.y(i);
        G.col(k) = s.x.transpose() * u / n;
        g0(k) = u.sum() / n;
    }
}

double certificate(const M2Problem& pr, const Eigen::MatrixXd& B, const Eigen::VectorXd& center,
                   const Eigen::MatrixXd& G, const Eigen::VectorXd& g0)
{
    const int p = static_cast<int>(B.rows());
    const int K = static_cast<int>(B.cols());
    double worst = 0.0;
    for (int j = 0; j < p; ++j) {
        const int ref = pr.free_center() ? -1 : pr.references[j];
        const double b = ref < 0 ? center(j) : B(j, ref);
        double need_lo = 0.0, need_hi = 0.0;  // sum of the chosen fusion multipliers
        for (int k = 0; k < K; ++k) {
            if (k == ref) continue;
            const double beta = B(j, k);
            const double t1 = pr.l1(k, j), t2 = pr.fuse(k, j);
            Range a;
            if (std::isinf(t1)) {
                if (beta != 0.0) return kInf;
                a = {-kInf, kInf};
            } else if (beta != 0.0) {
                a = {-G(j, k) - t1 * sign(beta), -G(j, k) - t1 * sign(beta)};
            } else {
                a = {-G(j, k) - t1, -G(j, k) + t1};
            }
            Range q;
            if (std::isinf(t2)) {
                if (beta != b) return kInf;
                q = {-kInf, kInf};
            } else if (beta != b) {
                q = {t2 * sign(beta - b), t2 * sign(beta - b)};
            } else {
                q = {-t2, t2};
            }
            worst = std::max(worst, dist(q, a));
            Range s{std::max(q.lo, a.lo), std::min(q.hi, a.hi)};
            if (s.lo > s.hi) s = q.hi < a.lo ? Range{q.hi, q.hi} : Range{q.lo, q.lo};
            need_lo += s.lo;
            need_hi += s.hi;
        }
        Range own{0.0, 0.0};
        if (ref >= 0) {
            const double t0 = pr.l1(ref, j);
            if (std::isinf(t0)) {
                if (b != 0.0) return kInf;
                own = {-kInf, kInf};
            } else if (b != 0.0) {
                own = {G(j, ref) + t0 * sign(b), G(j, ref) + t0 * sign(b)};
            } else {
                own = {G(j, ref) - t0, G(j, ref) + t0};
            }
        }
        // 0 in own - sum of multipliers
        const Range total{own.lo - need_hi, own.hi - need_lo};
        worst = std::max(worst, dist(total, Range{0.0, 0.0}));
    }
    if (pr.intercept) worst = std::max(worst, g0.cwiseAbs().maxCoeff());
    return worst;
}

double average_loss(const StratifiedDataset& data, const Eigen::MatrixXd& B, const Eigen::VectorXd& b0)
{
    double total = 0.0;
    for (int k = 0; k < data.strata(); ++k) {
        const auto& s = data.stratum(k);
        Eigen::VectorXd eta = s.x * B.col(k);
        if (b0.size() > 0) eta.array() += b0(k);
        if (data.loss() == Loss::linear) {
            total += 0.5 * (s.y - eta).squaredNorm();
        } else {
            for (Eigen::Index i = 0; i < eta.size(); ++i) total += softplus(eta(i)) - s.y(i) * eta(i);
        }
    }
    return total / data.rows();
}

double scaled_abs(double t, double v)
{
    if (v == 0.0) return 0.0;
    return t * std::abs(v);
}

double penalty(const M2Problem& pr, const Eigen::MatrixXd& B, const Eigen::VectorXd& center)
{
    double total = 0.0;
    for (int j = 0; j < B.rows(); ++j) {
        const int ref = pr.free_center() ? -1 : pr.references[j];
        const double b = ref < 0 ? center(j) : B(j, ref);
        for (int k = 0; k < B.cols(); ++k) {
            total += scaled_abs(pr.l1(k, j), B(j, k));
            if (k != ref) total += scaled_abs(pr.fuse(k, j), B(j, k) - b);
        }
    }
    return total;
}

// Block coordinate descent on the quadratic model held in `wk`; B, b0, center
// are updated in place. Returns sweeps used; stops when the model certificate
// is at most `tol`.
int bcd(const M2Problem& pr, Working& wk, Eigen::MatrixXd& B, Eigen::VectorXd& b0, Eigen::VectorXd& center,
        double tol, int max_sweeps, bool& converged)
{
    const auto& data = *pr.data;
    const int K = data.strata();
    const int p = data.features();
    const double n = data.rows();
    const bool weighted = !wk.weights.empty();
    Block block;
    block.leaves.reserve(K);
    Eigen::MatrixXd G(p, K);
    Eigen::VectorXd g0(K);
    converged = false;
    int sweep = 0;
    while (sweep < max_sweeps) {
        ++sweep;
        for (int j = 0; j < p; ++j) {
            const int ref = pr.free_center() ? -1 : pr.references[j];
            block.leaves.clear();
            block.center_term = ref >= 0;
            double zk_ref = 0.0;
            std::vector<double> zs(K);
            for (int k = 0; k < K; ++k) {
                const auto xj = data.stratum(k).x.col(j);
                const double c = wk.colsq(k, j);
                const double score =
                    inner_product(xj, wk.resid[k], weighted ? &wk.weights[k] : nullptr) / n;
                zs[k] = c > 0.0 ? B(j, k) + score / c : 0.0;
                if (k == ref) {
                    zk_ref = zs[k];
                    continue;
                }
                block.leaves.push_back({c, zs[k], pr.l1(k, j), pr.fuse(k, j)});
            }
            if (ref >= 0) {
                block.c0 = wk.colsq(ref, j);
                block.z0 = zk_ref;
                block.t0 = pr.l1(ref, j);
            }
            const double b = block.solve_center();
            int leaf = 0;
            for (int k = 0; k < K; ++k) {
                const double next = k == ref ? b : block.leaves[leaf++].optimum(b);
                const double delta = next - B(j, k);
                if (delta != 0.0) {
                    const auto xj = data.stratum(k).x.col(j);
                    wk.resid[k].noalias() -= delta * xj;
                    B(j, k) = next;
                }
            }
            if (ref < 0) center(j) = b;
        }
        if (pr.intercept) {
            for (int k = 0; k < K; ++k) {
                if (wk.wsum[k] <= 0.0) continue;
                const double shift = weighted ? wk.weights[k].dot(wk.resid[k]) / wk.wsum[k]
                                              : wk.resid[k].sum() / wk.wsum[k];
                b0(k) += shift;
                wk.resid[k].array() -= shift;
            }
        }
        for (int k = 0; k < K; ++k) {
            const auto& x = data.stratum(k).x;
            if (weighted) {
                const Eigen::VectorXd wr = wk.weights[k].cwiseProduct(wk.resid[k]);
                G.col(k) = -(x.transpose() * wr) / n;
                g0(k) = -wr.sum() / n;
            } else {
                G.col(k) = -(x.transpose() * wk.resid[k]) / n;
                g0(k) = -wk.resid[k].sum() / n;
            }
        }
        if (certificate(pr, B, center, G, g0) <= tol) {
            converged = true;
            break;
        }
    }
    return sweep;
}

Eigen::VectorXd row_medians(const Eigen::MatrixXd& B)
{
    Eigen::VectorXd m(B.rows());
    std::vector<double> row(B.cols());
    for (int j = 0; j < B.rows(); ++j) {
        for (int k = 0; k < B.cols(); ++k) row[k] = B(j, k);
        m(j) = median_set(row).midpoint();
    }
    return m;
}

Eigen::VectorXd vec(const Eigen::MatrixXd& B)
{
    return Eigen::Map<const Eigen::VectorXd>(B.data(), B.size());
}

} // namespace

M2PenaltySpec M2PenaltySpec::uniform(int strata, double lambda1, double lambda2)
{
    return {std::vector<double>(strata, lambda1), std::vector<double>(strata, lambda2)};
}

void M2PenaltySpec::validate(int strata) const
{
    if (static_cast<int>(lambda1.size()) != strata || static_cast<int>(lambda2.size()) != strata)
        throw DimensionError("one lambda1 and one lambda2 per stratum are required");
    for (double l : lambda1)
        if (!(l >= 0.0) || !std::isfinite(l)) throw InvalidArgument("lambda1 must be finite and >= 0");
    for (double l : lambda2)
        if (!(l >= 0.0) || !std::isfinite(l)) throw InvalidArgument("lambda2 must be finite and >= 0");
}

void M2Problem::validate() const
{
    if (!data) throw InvalidArgument("M2 problem has no data");
    const int K = data->strata(), p = data->features();
    if (l1.rows() != K || l1.cols() != p || fuse.rows() != K || fuse.cols() != p)
        throw DimensionError("M2 penalty matrices must be K x p");
    if (!references.empty()) {
        if (static_cast<int>(references.size()) != p) throw DimensionError("one reference stratum per covariate");
        for (int r : references)
            if (r < 0 || r >= K) throw InvalidArgument("reference stratum out of range");
    }
    for (int j = 0; j < p; ++j)
        for (int k = 0; k < K; ++k)
            if (!(l1(k, j) >= 0.0) || !(fuse(k, j) >= 0.0)) throw InvalidArgument("M2 penalties must be >= 0");
}

M2Problem make_m2_problem(const StratifiedDataset& data, const M2PenaltySpec& pen, bool intercept)
{
    pen.validate(data.strata());
    M2Problem pr;
    pr.data = &data;
    pr.intercept = intercept;
    pr.l1.resize(data.strata(), data.features());
    pr.fuse.resize(data.strata(), data.features());
    for (int k = 0; k < data.strata(); ++k) {
        pr.l1.row(k).setConstant(pen.lambda1[k]);
        pr.fuse.row(k).setConstant(pen.lambda2[k]);
    }
    return pr;
}

M2Problem make_adaptive_m2_problem(const StratifiedDataset& data, const M2PenaltySpec& pen,
                                   const AdaptiveWeights& adaptive, bool intercept)
{
    M2Problem pr = make_m2_problem(data, pen, intercept);
    if (adaptive.w.rows() != data.strata() || adaptive.w.cols() != data.features())
        throw DimensionError("adaptive weights do not match the data");
    for (int k = 0; k < data.strata(); ++k)
        for (int j = 0; j < data.features(); ++j) {
            auto scale = [](double lambda, double weight) {
                if (std::isinf(weight)) return lambda > 0.0 ? kInf : 0.0;
                return lambda * weight;
            };
            pr.l1(k, j) = scale(pen.lambda1[k], adaptive.w(k, j));
            pr.fuse(k, j) = scale(pen.lambda2[k], adaptive.nu(k, j));
        }
    pr.references = adaptive.references;
    // A covariate whose initial values all coincide is fused completely.
    for (int j = 0; j < data.features(); ++j)
        for (int k = 0; k < data.strata(); ++k)
            if (std::isinf(adaptive.nu(k, j))) pr.fuse(k, j) = kInf;
    return pr;
}

double prox_two_kink(double z, double c, double a, double t1, double t2)
{
    if (!(c > 0.0)) throw InvalidArgument("prox_two_kink requires c > 0");
    if (std::isinf(t1)) return 0.0;
    if (std::isinf(t2)) return a;
    if (a == 0.0) return soft_threshold(z, (t1 + t2) / c);
    // Kinks: optimality of 0 and of a.
    if (std::abs(c * (0.0 - z) + t2 * sign(0.0 - a)) <= t1) return 0.0;
    if (std::abs(c * (a - z) + t1 * sign(a)) <= t2) return a;
    const double lo = std::min(0.0, a), hi = std::max(0.0, a);
    const double left = z + (t1 + t2) / c;
    if (left < lo) return left;
    const double right = z - (t1 + t2) / c;
    if (right > hi) return right;
    // Between the kinks |beta| and |beta - a| have opposite signs of slope.
    const double mid = a > 0.0 ? z - (t1 - t2) / c : z - (t2 - t1) / c;
    if (mid > lo && mid < hi) return mid;
    // Rounding left no piece valid: compare the clamped candidates.
    auto f = [&](double b) { return 0.5 * c * (b - z) * (b - z) + t1 * std::abs(b) + t2 * std::abs(b - a); };
    double best = 0.0;
    for (double cand : {a, std::min(left, lo), std::max(right, hi), std::clamp(mid, lo, hi)})
        if (f(cand) < f(best)) best = cand;
    return best;
}

double m2_objective(const M2Problem& pr, const CoefMatrix& coef, const Eigen::VectorXd& common)
{
    return average_loss(*pr.data, coef.B, coef.intercepts) + penalty(pr, coef.B, common);
}

double m2_kkt_residual(const M2Problem& pr, const CoefMatrix& coef, const Eigen::VectorXd& common)
{
    Eigen::MatrixXd G;
    Eigen::VectorXd g0;
    loss_gradients(pr, coef.B, coef.intercepts, G, g0);
    return certificate(pr, coef.B, common, G, g0);
}

double median_certificate(const CoefMatrix& coef, const Eigen::VectorXd& common)
{
    double worst = 0.0;
    std::vector<double> row(coef.strata());
    for (int j = 0; j < coef.features(); ++j) {
        for (int k = 0; k < coef.strata(); ++k) row[k] = coef.B(j, k);
        const Interval m = median_set(row);
        worst = std::max({worst, m.lo - common(j), common(j) - m.hi});
    }
    return worst;
}

int fused_group_count(const Eigen::MatrixXd& B)
{
    int groups = 0;
    std::vector<double> row;
    for (int j = 0; j < B.rows(); ++j) {
        row.clear();
        for (int k = 0; k < B.cols(); ++k)
            if (B(j, k) != 0.0) row.push_back(B(j, k));
        std::sort(row.begin(), row.end());
        for (std::size_t i = 0; i < row.size(); ++i)
            if (i == 0 || row[i] - row[i - 1] > 1e-9 * std::max(1.0, std::abs(row[i]))) ++groups;
    }
    return groups;
}

M2Fit solve_m2(const M2Problem& pr, const SolverConfig& cfg, const CoefMatrix* warm)
{
    pr.validate();
    const auto& data = *pr.data;
    const int K = data.strata();
    const int p = data.features();
    const double n = data.rows();

    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(p, K);
    Eigen::VectorXd b0 = pr.intercept ? Eigen::VectorXd::Zero(K) : Eigen::VectorXd();
    if (warm) {
        if (warm->features() != p || warm->strata() != K) throw DimensionError("warm start does not match the data");
        B = warm->B;
        if (pr.intercept && warm->intercepts.size() == K) b0 = warm->intercepts;
    }
    for (int j = 0; j < p; ++j)
        for (int k = 0; k < K; ++k)
            if (std::isinf(pr.l1(k, j))) B(j, k) = 0.0;
    Eigen::VectorXd center = row_medians(B);

    Working wk;
    wk.resid.resize(K);
    wk.wsum.assign(K, 0.0);
    wk.colsq.resize(K, p);
    std::vector<double> trace;
    int sweeps = 0;
    bool converged = false;

    auto obj = [&](const Eigen::MatrixXd& b, const Eigen::VectorXd& i0, const Eigen::VectorXd& c) {
        return average_loss(data, b, i0) + penalty(pr, b, c);
    };

    if (data.loss() == Loss::linear) {
        for (int k = 0; k < K; ++k) {
            const auto& s = data.stratum(k);
            wk.resid[k] = s.y - s.x * B.col(k);
            if (pr.intercept) wk.resid[k].array() -= b0(k);
            wk.colsq.row(k) = s.x.colwise().squaredNorm() / n;
            wk.wsum[k] = static_cast<double>(s.y.size());
        }
        // Certificate target leaves headroom for the data-based recheck.
        sweeps = bcd(pr, wk, B, b0, center, 0.5 * cfg.tol, cfg.max_iter, converged);
        if (cfg.trace) trace.push_back(obj(B, b0, center));
    } else {
        wk.weights.resize(K);
        double current = obj(B, b0, center);
        Eigen::MatrixXd G;
        Eigen::VectorXd g0;
        while (sweeps < cfg.max_iter) {
            loss_gradients(pr, B, b0, G, g0);
            if (certificate(pr, B, center, G, g0) <= cfg.tol) {
                converged = true;
                break;
            }
            for (int k = 0; k < K; ++k) {
                const auto& s = data.stratum(k);
                Eigen::VectorXd eta = s.x * B.col(k);
                if (pr.intercept) eta.array() += b0(k);
                Eigen::VectorXd w(eta.size()), r(eta.size());
                for (Eigen::Index i = 0; i < eta.size(); ++i) {
                    const double prob = std::clamp(sigmoid(eta(i)), kProbClip, 1.0 - kProbClip);
                    w(i) = prob * (1.0 - prob);
                    r(i) = (s.y(i) - prob) / w(i);
                }
                wk.weights[k] = w;
                wk.resid[k] = r;
                wk.wsum[k] = w.sum();
                for (int j = 0; j < p; ++j) wk.colsq(k, j) = w.dot(s.x.col(j).cwiseAbs2()) / n;
            }
            Eigen::MatrixXd B1 = B;
            Eigen::VectorXd b1 = b0, c1 = center;
            bool inner_ok = false;
            sweeps += bcd(pr, wk, B1, b1, c1, 0.1 * cfg.tol, cfg.max_iter - sweeps, inner_ok);
            double step = 1.0;
            Eigen::MatrixXd Bt = B1;
            Eigen::VectorXd bt = b1, ct = c1;
            double cand = obj(Bt, bt, ct);
            while (cand > current && step > 1e-12) {
                step *= 0.5;
                Bt = B + step * (B1 - B);
                if (pr.intercept) bt = b0 + step * (b1 - b0);
                ct = center + step * (c1 - center);
                cand = obj(Bt, bt, ct);
            }
            if (cand > current) break;  // no descent at working precision
            B = Bt;
            b0 = bt;
            center = ct;
            current = cand;
            if (cfg.trace) trace.push_back(current);
        }
    }

    M2Fit out;
    out.coef = CoefMatrix{B, b0};
    out.common = pr.free_center() ? center : Eigen::VectorXd(p);
    if (!pr.free_center())
        for (int j = 0; j < p; ++j) out.common(j) = B(j, pr.references[j]);
    out.fit.theta = vec(B);
    out.fit.objective = m2_objective(pr, out.coef, out.common);
    out.fit.kkt_residual = m2_kkt_residual(pr, out.coef, out.common);
    out.fit.iterations = sweeps;
    out.fit.df = fused_group_count(B);
    out.fit.objective_trace = std::move(trace);
    if (!converged || out.fit.kkt_residual > cfg.tol)
        throw ConvergenceError("M2 solver did not reach the subgradient tolerance", out.fit.theta,
                               out.fit.kkt_residual);
    notify(pr, out);
    return out;
}

M2Fit fit_m2(const StratifiedDataset& data, const M2PenaltySpec& pen, const SolverConfig& cfg, bool intercept,
             const CoefMatrix* warm)
{
    return solve_m2(make_m2_problem(data, pen, intercept), cfg, warm);
}

M2Fit fit_m2_adaptive(const StratifiedDataset& data, const M2PenaltySpec& pen, const CoefMatrix& initial, double rho,
                      const SolverConfig& cfg, bool intercept)
{
    const AdaptiveWeights adaptive = AdaptiveWeights::from_initial(initial, rho);
    return solve_m2(make_adaptive_m2_problem(data, pen, adaptive, intercept), cfg);
}

void set_m2_observer(M2Observer obs)
{
    std::lock_guard lock(observer_mutex);
    observer = std::move(obs);
}

} // namespace strata
