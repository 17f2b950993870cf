#include "doctest.h"

#include <cmath>

#include "oracles.hpp"
#include "strata/error.hpp"
#include "strata/simulation.hpp"

using namespace strata;

namespace {

double loop_prediction(const GroundTruth& t, const CoefMatrix& est, const StratifiedDataset& data)
{
    double sum = 0.0;
    for (int k = 0; k < data.strata(); ++k) {
        const auto& x = data.stratum(k).x;
        for (int i = 0; i < x.rows(); ++i) {
            double r = 0.0;
            for (int j = 0; j < x.cols(); ++j) r += x(i, j) * (t.B_star(j, k) - est.B(j, k));
            sum += r * r;
        }
    }
    return std::log(sum);
}

CoefMatrix coef_of(const Eigen::MatrixXd& B)
{
    CoefMatrix c;
    c.B = B;
    return c;
}

int nonzeros(const Eigen::VectorXd& v)
{
    int n = 0;
    for (int i = 0; i < v.size(); ++i) n += v(i) != 0.0;
    return n;
}

} // namespace

TEST_CASE("no sparsity gives a zero truth")
{
    auto d = SimulationDesign::defaults(DesignKind::study1);
    d.sp_glob = 0.0;
    d.sp_spec = 0.0;
    const auto t = make_truth(d);
    CHECK(t.B_star.isZero(0.0));
    CHECK(t.B_star.rows() == 15);
    CHECK(t.B_star.cols() == 5);
}

TEST_CASE("study1 defaults and Toeplitz covariance")
{
    const auto d = SimulationDesign::defaults(DesignKind::study1);
    CHECK(d.K == 5);
    CHECK(d.p == 15);
    CHECK(d.n_k == 225);
    const auto s = design_covariance(d);
    CHECK(s(0, 0) == 1.0);
    CHECK(s(0, 3) == 0.125);
    CHECK(s(7, 5) == 0.25);
    const auto [data, t] = generate(d);
    CHECK(data.strata() == 5);
    CHECK(data.rows() == 5 * 225);
    // common and deviations are 0/1 draws
    for (int j = 0; j < 15; ++j) {
        CHECK((t.common_star(j) == 0.0 || t.common_star(j) == 1.0));
        for (int k = 0; k < 5; ++k) CHECK(t.deviations_star(j, k) == 0.0);
    }
    CHECK((t.B_star - (t.deviations_star.colwise() + t.common_star)).isZero(0.0));
}

TEST_CASE("empirical covariance of the rows")
{
    auto d = SimulationDesign::defaults(DesignKind::study1);
    d.K = 1;
    d.p = 4;
    d.n_k = 40000;
    const auto [data, t] = generate(d);
    const auto& x = data.stratum(0).x;
    const Eigen::MatrixXd emp = x.transpose() * x / static_cast<double>(x.rows());
    CHECK((emp - design_covariance(d)).cwiseAbs().maxCoeff() < 0.03);
}

TEST_CASE("two-task supports")
{
    const auto d = SimulationDesign::defaults(DesignKind::twotask);
    CHECK(d.p == 128);
    // s = 12, ceil(12 log(128 - 18) / 2) = ceil(28.20...) = 29
    CHECK(twotask_sample_size(128, 0.5, 1.0) == 29);
    CHECK(d.n_k == 29);
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        auto ds = d;
        ds.seed = seed;
        const auto t = make_truth(ds);
        CHECK(nonzeros(t.B_star.col(0)) == 12);
        CHECK(nonzeros(t.B_star.col(1)) == 12);
        int shared = 0;
        for (int j = 0; j < 128; ++j)
            if (t.B_star(j, 0) != 0.0 && t.B_star(j, 1) != 0.0) {
                ++shared;
                CHECK(t.B_star(j, 0) == t.B_star(j, 1));
            }
        CHECK(shared == 6);
        CHECK(nonzeros(t.common_star) == 6);
        CHECK(t.B_star.cwiseAbs().maxCoeff() == 1.0);
    }
    for (double alpha : {0.0, 0.25, 1.0}) {
        auto da = d;
        da.alpha = alpha;
        const auto t = make_truth(da);
        int shared = 0;
        for (int j = 0; j < 128; ++j) shared += t.B_star(j, 0) != 0.0 && t.B_star(j, 1) != 0.0;
        CHECK(shared == static_cast<int>(std::floor(alpha * 12)));
    }
    CHECK_THROWS_AS(twotask_sample_size(9, 0.5, 1.0), InvalidArgument);
    auto bad = d;
    bad.K = 3;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("study2 layout")
{
    for (auto h : {Heterogeneity::none, Heterogeneity::low, Heterogeneity::moderate}) {
        auto d = SimulationDesign::defaults(DesignKind::study2);
        d.heterogeneity = h;
        d.seed = 7;
        const auto t = make_truth(d);
        CHECK(nonzeros(t.common_star) == 4);
        CHECK(t.common_star.tail(90).isZero(0.0));
        const int expected = h == Heterogeneity::none ? 0 : h == Heterogeneity::low ? 5 : 15;
        int dev = 0;
        for (int k = 0; k < 5; ++k) {
            dev += nonzeros(t.deviations_star.col(k));
            CHECK(t.deviations_star.col(k).tail(90).isZero(0.0));
        }
        CHECK(dev == expected);
    }
}

TEST_CASE("confbetas rows and common effects")
{
    const auto pats = confbetas_patterns();
    REQUIRE(pats.size() == 4);
    auto d = SimulationDesign::defaults(DesignKind::confbetas);
    const auto t = make_truth(d);
    const double centers[] = {0.0, 0.5, 0.0, 0.0};
    for (int j = 0; j < 4; ++j) {
        CHECK(t.common_star(j) == doctest::Approx(centers[j]).epsilon(1e-15));
        for (int k = 0; k < 10; ++k) CHECK(t.B_star(j, k) == doctest::Approx(pats[j][k]).epsilon(1e-15));
    }
    d.pattern = 2;
    d.p = 3;
    const auto t2 = make_truth(d);
    for (int j = 0; j < 3; ++j) CHECK(t2.common_star(j) == 0.5);
}

TEST_CASE("metric oracles")
{
    oracle::Rng rng(3);
    auto d = SimulationDesign::defaults(DesignKind::study1);
    d.n_k = 30;
    const auto [data, t] = generate(d);
    Eigen::MatrixXd B = t.B_star;
    for (int i = 0; i < B.size(); ++i) B.data()[i] += 0.1 * rng.normal();
    const CoefMatrix est = coef_of(B);
    const auto pm = metric_prediction(t, est, data);
    CHECK(!pm.exact);
    CHECK(pm.value == doctest::Approx(loop_prediction(t, est, data)).epsilon(1e-12));
    double es = 0.0;
    for (int j = 0; j < 15; ++j)
        for (int k = 0; k < 5; ++k) es += (t.B_star(j, k) - B(j, k)) * (t.B_star(j, k) - B(j, k));
    CHECK(metric_estimation(t, est) == doctest::Approx(es / 75.0).epsilon(1e-12));
    const auto exact = metric_prediction(t, coef_of(t.B_star), data);
    CHECK(exact.exact);
    CHECK(std::isinf(exact.value));
    CHECK(exact.value < 0.0);
}

TEST_CASE("support metric examples")
{
    GroundTruth t;
    t.B_star = Eigen::MatrixXd(2, 2);
    t.B_star << 1, 0, 0, 2;
    Eigen::MatrixXd e(2, 2);
    e << 3, 1, 0, 0;
    // tp 1, fp 1, fn 1, correct 2
    auto m = metric_support(t, coef_of(e));
    CHECK(m.accuracy == 0.5);
    CHECK(m.f1 == doctest::Approx(0.5));
    m = metric_support(t, coef_of(Eigen::MatrixXd::Zero(2, 2)));
    CHECK(m.accuracy == 0.5);
    CHECK(m.f1 == 0.0);
    m = metric_support(t, coef_of(t.B_star * 5));
    CHECK(m.accuracy == 1.0);
    CHECK(m.f1 == 1.0);
    CHECK_THROWS_AS(metric_support(t, coef_of(Eigen::MatrixXd::Zero(3, 2))), DimensionError);

    GroundTruth big;
    big.B_star = Eigen::MatrixXd::Zero(100, 5);
    for (int j = 0; j < 4; ++j) big.B_star(j, 0) = 1.0;
    m = metric_support(big, coef_of(Eigen::MatrixXd::Zero(100, 5)));
    CHECK(m.accuracy == 496.0 / 500.0);
    CHECK(m.f1 == 0.0);
    Eigen::MatrixXd over = big.B_star;
    for (int j = 4; j < 8; ++j) over(j, 1) = 1.0;
    // precision 1/2, recall 1
    CHECK(metric_support(big, coef_of(over)).f1 == doctest::Approx(2.0 / 3.0));
    Eigen::MatrixXd off = big.B_star;
    off(50, 3) = 1.0;
    CHECK(metric_estimation(big, coef_of(off)) == doctest::Approx(1.0 / 500.0));
    CHECK(metric_estimation(big, coef_of(big.B_star)) == 0.0);
}

TEST_CASE("prediction metric on an identity design")
{
    GroundTruth t;
    t.B_star = Eigen::MatrixXd::Zero(3, 1);
    t.B_star(0, 0) = 1.0;
    const auto data = StratifiedDataset::from_blocks({Eigen::MatrixXd::Identity(3, 3)}, {Eigen::VectorXd::Zero(3)});
    const auto m = metric_prediction(t, coef_of(Eigen::MatrixXd::Zero(3, 1)), data);
    CHECK(!m.exact);
    CHECK(m.value == 0.0);
}

TEST_CASE("hard threshold")
{
    Eigen::MatrixXd b(1, 4);
    b << 0.05, -0.2, 0.1, -0.09;
    CoefMatrix c = coef_of(b);
    c.intercepts = Eigen::VectorXd::Constant(4, 0.01);
    const auto h = hard_threshold(c, 0.1);
    CHECK(h.B(0, 0) == 0.0);
    CHECK(h.B(0, 1) == -0.2);
    CHECK(h.B(0, 2) == 0.1);
    CHECK(h.B(0, 3) == 0.0);
    CHECK(h.intercepts(0) == 0.01);
    CHECK(hard_threshold(c, 0.0).B == b);
    CHECK(hard_threshold(c, INFINITY).B.isZero(0.0));
    Eigen::MatrixXd two(1, 2);
    two << 0.2, 0.3;
    const auto h2 = hard_threshold(coef_of(two), 0.25);
    CHECK(h2.B(0, 0) == 0.0);
    CHECK(h2.B(0, 1) == 0.3);
    CHECK_THROWS_AS(hard_threshold(c, -1.0), InvalidArgument);
}

TEST_CASE("generation is deterministic in the seed")
{
    auto d = SimulationDesign::defaults(DesignKind::study1);
    d.n_k = 20;
    d.sp_spec = 0.3;
    const auto [a, ta] = generate(d);
    const auto [b, tb] = generate(d);
    CHECK(ta.B_star == tb.B_star);
    for (int k = 0; k < 5; ++k) {
        CHECK(a.stratum(k).x == b.stratum(k).x);
        CHECK(a.stratum(k).y == b.stratum(k).y);
    }
    d.seed = 2;
    const auto [c, tc] = generate(d);
    CHECK(c.stratum(0).y != a.stratum(0).y);
}

TEST_CASE("signal-to-noise ratio is reproduced")
{
    auto d = SimulationDesign::defaults(DesignKind::study1);
    d.snr = 2.0;
    d.n_k = 100;
    double sum = 0.0;
    int reps = 0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        d.seed = seed;
        const auto [data, t] = generate(d);
        double signal = 0.0;
        for (int k = 0; k < 5; ++k) signal += (data.stratum(k).x * t.B_star.col(k)).squaredNorm();
        if (signal == 0.0) continue;
        sum += signal / (data.rows() * t.sigma2);
        ++reps;
    }
    REQUIRE(reps > 90);
    CHECK(std::abs(sum / reps - 2.0) < 0.2);
}

TEST_CASE("design validation")
{
    auto d = SimulationDesign::defaults(DesignKind::study1);
    d.sp_glob = 1.5;
    CHECK_THROWS_AS(d.validate(), InvalidArgument);
    d = SimulationDesign::defaults(DesignKind::study1);
    d.snr = -1.0;
    CHECK_THROWS_AS(d.validate(), InvalidArgument);
    d = SimulationDesign::defaults(DesignKind::study2);
    d.p = 5;
    CHECK_THROWS_AS(d.validate(), InvalidArgument);
    d = SimulationDesign::defaults(DesignKind::confbetas);
    d.pattern = 5;
    CHECK_THROWS_AS(d.validate(), InvalidArgument);
    CHECK(design_kind_from_string("twotask") == DesignKind::twotask);
    CHECK_THROWS_AS(design_kind_from_string("study3"), InvalidArgument);
}
