#include "doctest.h"

#include <cmath>

#include "oracles.hpp"
#include "strata/error.hpp"
#include "strata/penalty.hpp"

using namespace strata;

namespace {

struct GridMin {
    double value;
    double r1;
    double r2;
};

GridMin grid_dirty(const ScalarPenaltyInstance& in, double lo, double hi, double step)
{
    GridMin best{in.phi(lo, lo), lo, lo};
    const long n = std::lround((hi - lo) / step);
    for (long i = 0; i <= n; ++i)
        for (long j = 0; j <= n; ++j) {
            const double r1 = lo + i * step, r2 = lo + j * step;
            const double v = in.phi(r1, r2);
            if (v < best.value) best = {v, r1, r2};
        }
    return best;
}

} // namespace

TEST_CASE("dirty minimum examples against a 1e-3 grid")
{
    const ScalarPenaltyInstance same{1, 1, 1, 1}, opposite{1, -1, 1, 1};
    const GridMin gs = grid_dirty(same, -2, 2, 1e-3), go = grid_dirty(opposite, -2, 2, 1e-3);
    // frozen from the grid search
    CHECK(gs.value == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(go.value == doctest::Approx(1.0).epsilon(1e-12));

    const auto ds = min_phi_dirty(same);
    CHECK(ds.value == 1.0);
    CHECK(ds.r1 == 1.0);
    CHECK(ds.r2 == 1.0);
    const auto dop = min_phi_dirty(opposite);
    CHECK(dop.value == 1.0);
    CHECK(dop.r1 == 1.0);
    CHECK(dop.r2 == -1.0);
    const auto z = min_phi_dirty({0, 0, 1, 1});
    CHECK(z.value == 0.0);
    CHECK(z.r1 == 0.0);
    CHECK(z.r2 == 0.0);
}

TEST_CASE("shared minimum examples against a 1-D grid")
{
    const ScalarPenaltyInstance same{1, 1, 1, 1}, opposite{1, -1, 1, 1};
    auto bar = [](const ScalarPenaltyInstance& in) { return [in](double r) { return in.phi(r, r); }; };
    CHECK(std::abs(oracle::grid_argmin(bar(same), -2, 2, 1e-4) - 1.0) <= 1e-4);
    CHECK(std::abs(oracle::grid_argmin(bar(opposite), -2, 2, 1e-4)) <= 1e-4);
    const auto s = min_phi_bar(same);
    CHECK(s.value == 1.0);
    CHECK(s.r == 1.0);
    const auto o = min_phi_bar(opposite);
    CHECK(o.value == 2.0);
    CHECK(o.r == 0.0);
    CHECK(min_phi_bar({0, 0, 1, 1}).value == 0.0);
}

TEST_CASE("penalty gap examples")
{
    CHECK(penalty_gap({1, 1, 1, 1}) == 0.0);
    CHECK(penalty_gap({1, -1, 1, 1}) == 1.0);
    CHECK(penalty_gap({0, -5, 1, 1}) == 0.0);
    CHECK(penalty_gap({0, -5, 2, 1}) == 0.0);
    CHECK_THROWS_AS(penalty_gap({1, 1, 0, 1}), InvalidArgument);
}

TEST_CASE("opposite signs need lambda1 < 2 lambda2 for a positive gap")
{
    // phi(t, -t) = lambda1 t + lambda2 (|b1| + |b2| - 2t) only beats r = 0 when lambda1 < 2 lambda2
    CHECK(penalty_gap({1, -1, 2, 1}) == 0.0);
    CHECK(penalty_gap({1, -1, 3, 1}) == 0.0);
    CHECK(penalty_gap({1, -1, 1.9, 1}) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(penalty_gap({2, -0.5, 1, 1}) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("exact minima agree with coarse grids on random instances")
{
    oracle::Rng rng(301);
    for (int rep = 0; rep < 30; ++rep) {
        const ScalarPenaltyInstance in{std::round(rng.uniform(-2, 2) * 20) / 20, std::round(rng.uniform(-2, 2) * 20) / 20,
                                       rng.uniform(0.1, 3), rng.uniform(0.1, 3)};
        // breakpoints sit on the 0.05 lattice, so the lattice grid contains the minimizer
        const GridMin g = grid_dirty(in, -2.5, 2.5, 0.05);
        CHECK(min_phi_dirty(in).value == doctest::Approx(g.value).epsilon(1e-12));
        const double r = oracle::grid_argmin([&](double t) { return in.phi(t, t); }, -2.5, 2.5, 0.05);
        CHECK(min_phi_bar(in).value == doctest::Approx(in.phi(r, r)).epsilon(1e-12));
    }
}

TEST_CASE("lemma invariants over 10^4 random instances")
{
    const auto rows = penalty_lemma_table({10000, 7});
    REQUIRE(rows.size() == 10000);
    int opposite = 0, zeros = 0;
    for (const auto& r : rows) {
        CHECK(r.gap >= -1e-9);
        if (r.same_sign) CHECK(r.gap <= 1e-9);
        if (!r.same_sign && std::min(std::abs(r.inst.beta1), std::abs(r.inst.beta2)) > 1e-3)
            CHECK(r.gap > 1e-6 * r.inst.lambda2);
        CHECK(r.holds);
        opposite += !r.same_sign;
        zeros += r.inst.beta1 == 0.0 || r.inst.beta2 == 0.0;
    }
    CHECK(opposite > 3000);
    CHECK(zeros > 500);
}

TEST_CASE("below lambda2, same-sign pairs of unequal size gap too")
{
    // dirty at (r1, r2) = (beta1, beta2) pays lambda1 max|beta|; the shared r cannot match it
    CHECK(penalty_gap({1, 3, 0.1, 1}) == doctest::Approx(1.8).epsilon(1e-12));
    CHECK(penalty_gap({0, -5, 0.3, 2}) == doctest::Approx(8.5).epsilon(1e-12));
    CHECK(penalty_gap({1, 3, 1, 1}) == 0.0);
}

TEST_CASE("same-sign pairs have no gap once lambda1 >= lambda2")
{
    oracle::Rng rng(302);
    for (int rep = 0; rep < 5000; ++rep) {
        const double a = rng.normal(), b = std::abs(rng.normal()) * (a < 0 ? -1 : 1);
        const double l2 = std::pow(10.0, rng.uniform(-3, 3));
        const ScalarPenaltyInstance in{a, b, l2 * std::pow(10.0, rng.uniform(0, 3)), l2};
        CHECK(std::abs(penalty_gap(in)) <= 1e-9 * std::max(1.0, in.lambda1 + in.lambda2));
    }
}

TEST_CASE("scale equivariance and symmetry")
{
    oracle::Rng rng(303);
    for (int rep = 0; rep < 500; ++rep) {
        const ScalarPenaltyInstance in{rng.normal(), rng.normal(), rng.uniform(0.1, 2), rng.uniform(0.1, 2)};
        const double c = rng.uniform(0.1, 10);
        const ScalarPenaltyInstance sc{c * in.beta1, c * in.beta2, in.lambda1, in.lambda2};
        const auto d = min_phi_dirty(in), ds = min_phi_dirty(sc);
        const auto s = min_phi_bar(in), ss = min_phi_bar(sc);
        CHECK(ds.value == doctest::Approx(c * d.value).epsilon(1e-12));
        CHECK(ss.value == doctest::Approx(c * s.value).epsilon(1e-12));
        CHECK(ss.r == doctest::Approx(c * s.r).epsilon(1e-12));
        CHECK(sc.phi(c * d.r1, c * d.r2) == doctest::Approx(ds.value).epsilon(1e-12));
        const ScalarPenaltyInstance sw{in.beta2, in.beta1, in.lambda1, in.lambda2};
        CHECK(min_phi_dirty(sw).value == doctest::Approx(d.value).epsilon(1e-14));
        CHECK(min_phi_bar(sw).value == doctest::Approx(s.value).epsilon(1e-14));
    }
}

TEST_CASE("lemma table is deterministic and serializes")
{
    const auto a = penalty_lemma_table({50, 3}), b = penalty_lemma_table({50, 3});
    CHECK(lemma_table_csv(a) == lemma_table_csv(b));
    CHECK(lemma_table_csv(a).rfind("trial,beta1", 0) == 0);
}
