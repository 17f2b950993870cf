#include "doctest.h"

#include "oracles.hpp"
#include "strata/error.hpp"
#include "strata/stacking.hpp"

using namespace strata;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("one stratum stacks as [X | X]")
{
    oracle::Rng rng(1);
    const auto data = oracle::random_dataset(rng, 1, 3, 5);
    const auto sp = build_stacked(data, StackOptions::uniform(1, 1.0));
    const MatrixXd d(sp.problem.design);
    CHECK(d.cols() == 6);
    CHECK(d.leftCols(3) == data.stratum(0).x);
    CHECK(d.rightCols(3) == data.stratum(0).x);
    CHECK(sp.problem.weights == VectorXd::Ones(6));
}

TEST_CASE("two single-row strata")
{
    MatrixXd x1(1, 1), x2(1, 1);
    x1 << 2;
    x2 << 3;
    const auto data = StratifiedDataset::from_blocks({x1, x2}, {VectorXd::Ones(1), VectorXd::Ones(1)});
    StackOptions opts;
    opts.ratios = {0.5, 2.0};
    const auto sp = build_stacked(data, opts);
    const MatrixXd d(sp.problem.design);
    MatrixXd expect(2, 3);
    expect << 2, 2, 0, 3, 0, 3;
    CHECK(d == expect);
    CHECK(sp.problem.weights == (VectorXd(3) << 1, 0.5, 2).finished());
}

TEST_CASE("weight blocks have length p")
{
    oracle::Rng rng(2);
    const auto data = oracle::random_dataset(rng, 2, 3, 4);
    StackOptions opts;
    opts.ratios = {0.5, 2.0};
    const VectorXd w = build_stacked(data, opts).problem.weights;
    CHECK(w == (VectorXd(9) << 1, 1, 1, 0.5, 0.5, 0.5, 2, 2, 2).finished());
}

TEST_CASE("invalid ratios and the column cap")
{
    oracle::Rng rng(3);
    const auto data = oracle::random_dataset(rng, 2, 3, 4);
    StackOptions opts;
    opts.ratios = {1.0, 0.0};
    CHECK_THROWS_AS(build_stacked(data, opts), InvalidArgument);
    opts.ratios = {1.0, kInf};
    CHECK_THROWS_AS(build_stacked(data, opts), InvalidArgument);
    opts.ratios = {1.0};
    CHECK_THROWS_AS(build_stacked(data, opts), DimensionError);
    opts = StackOptions::uniform(2, 1.0);
    opts.max_columns = 8;
    CHECK_THROWS_AS(build_stacked(data, opts), DimensionError);
}

TEST_CASE("intercept modes")
{
    oracle::Rng rng(4);
    const auto data = oracle::random_dataset(rng, 2, 2, 3);
    const auto pen = build_stacked(data, StackOptions::uniform(2, 0.7, InterceptMode::penalized_common));
    const MatrixXd d(pen.problem.design);
    CHECK(d.cols() == 9);
    CHECK(!pen.problem.unpenalized_intercept);
    CHECK(d.col(pen.layout.intercept_column(0)) == VectorXd::Ones(6));
    CHECK(d.col(pen.layout.intercept_column(1)).head(3) == VectorXd::Ones(3));
    CHECK(d.col(pen.layout.intercept_column(1)).tail(3) == VectorXd::Zero(3));
    CHECK(pen.problem.weights(pen.layout.intercept_column(0)) == 1.0);
    CHECK(pen.problem.weights(pen.layout.intercept_column(2)) == 0.7);

    const auto unp = build_stacked(data, StackOptions::uniform(2, 0.7, InterceptMode::unpenalized_common));
    CHECK(unp.problem.unpenalized_intercept);
    CHECK(unp.layout.intercept_column(0) == -1);
    CHECK(unp.problem.cols() == 8);
    const auto dec = unstack(VectorXd::Zero(8), 1.25, unp.layout);
    REQUIRE(dec.common_intercept);
    CHECK(*dec.common_intercept == 1.25);
}

TEST_CASE("unstack")
{
    StackLayout L = StackLayout::for_mode(1, 2, InterceptMode::none);
    const auto zero = unstack(VectorXd::Zero(3), 0.0, L);
    CHECK(zero.common(0) == 0.0);
    const auto dec = unstack((VectorXd(3) << 1, 0.5, -0.5).finished(), 0.0, L);
    CHECK(dec.common(0) == 1.0);
    CHECK(dec.deviations[0](0) == 0.5);
    CHECK(dec.deviations[1](0) == -0.5);
    const auto B = reconstruct(dec);
    CHECK(B.B(0, 0) == 1.5);
    CHECK(B.B(0, 1) == 0.5);
    CHECK_THROWS_AS(unstack(VectorXd::Zero(4), 0.0, L), DimensionError);

    oracle::Rng rng(5);
    for (auto mode : {InterceptMode::none, InterceptMode::penalized_common, InterceptMode::unpenalized_common}) {
        L = StackLayout::for_mode(4, 3, mode);
        const VectorXd theta = rng.normal_vector(L.columns());
        const auto d = unstack(theta, 0.0, L);
        CHECK(stack_layout(d, L) == theta);
    }
}

TEST_CASE("prediction and penalty equivalence")
{
    oracle::Rng rng(6);
    for (int rep = 0; rep < 20; ++rep) {
        const int K = rng.integer(1, 4), p = rng.integer(1, 5);
        const auto data = oracle::random_dataset(rng, K, p, rng.integer(1, 6));
        StackOptions opts;
        for (int k = 0; k < K; ++k) opts.ratios.push_back(rng.uniform(0.1, 3.0));
        const auto sp = build_stacked(data, opts);
        const VectorXd theta = rng.normal_vector(sp.problem.cols());
        const VectorXd fitted = sp.problem.design * theta;
        const auto dec = unstack(theta, 0.0, sp.layout);
        int row = 0;
        const double lambda1 = rng.uniform(0.1, 2.0);
        double direct = lambda1 * dec.common.lpNorm<1>();
        for (int k = 0; k < K; ++k) {
            const VectorXd pred = data.stratum(k).x * (dec.common + dec.deviations[k]);
            CHECK((fitted.segment(row, data.rows(k)) - pred).cwiseAbs().maxCoeff() <= 1e-12);
            row += data.rows(k);
            direct += lambda1 * opts.ratios[k] * dec.deviations[k].lpNorm<1>();
        }
        const double stacked = lambda1 * sp.problem.weights.cwiseProduct(theta.cwiseAbs()).sum();
        CHECK(std::abs(stacked - direct) <= 1e-12 * std::max(1.0, direct));
    }
}

TEST_CASE("standardized stacking is the rescaled-weight problem")
{
    oracle::Rng rng(7);
    std::vector<MatrixXd> xs;
    std::vector<VectorXd> ys;
    for (int k = 0; k < 3; ++k) {
        MatrixXd x = rng.normal_matrix(25, 4);
        x.col(1) *= 5.0;
        x.col(2).array() += 3.0;
        xs.push_back(x);
        ys.push_back(x * VectorXd::LinSpaced(4, -1, 1) + rng.normal_vector(25));
    }
    const auto data = StratifiedDataset::from_blocks(xs, ys);
    StackOptions opts = StackOptions::uniform(3, 0.6);
    opts.standardize_stacked = true;
    auto sp = build_stacked(data, opts);
    sp.problem.lambda = 0.05;
    const FitResult a = solve(sp.problem);
    const VectorXd theta_a = sp.unscale(a.theta);

    opts.standardize_stacked = false;
    auto plain = build_stacked(data, opts);
    plain.problem.lambda = 0.05;
    plain.problem.weights = plain.problem.weights.cwiseProduct(sp.column_scale);
    const FitResult b = solve(plain.problem);
    CHECK((theta_a - b.theta).cwiseAbs().maxCoeff() <= 1e-5);
    const VectorXd pa = plain.problem.design * theta_a, pb = plain.problem.design * b.theta;
    CHECK((pa - pb).cwiseAbs().maxCoeff() <= 1e-5);
}

TEST_CASE("zero-variance stacked columns are never selected")
{
    MatrixXd x1 = MatrixXd::Ones(4, 2), x2 = MatrixXd::Ones(4, 2);
    x1.col(1) << 1, 2, 3, 4;
    x2.col(1) << 4, 3, 2, 2;
    // Column 0 of the common block has variance 0 across all rows.
    const auto data = StratifiedDataset::from_blocks({x1, x2}, {VectorXd::LinSpaced(4, 0, 3), VectorXd::Ones(4)});
    StackOptions opts = StackOptions::uniform(2, 1.0);
    opts.standardize_stacked = true;
    auto sp = build_stacked(data, opts);
    CHECK(std::isinf(sp.problem.weights(sp.layout.column(0, 0))));
    sp.problem.lambda = 0.001;
    const FitResult fit = solve(sp.problem);
    CHECK(fit.theta(sp.layout.column(0, 0)) == 0.0);
}
