#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace strata {

/// Scalar K = 2 penalty comparison for one covariate.
struct ScalarPenaltyInstance {
    double beta1 = 0.0;
    double beta2 = 0.0;
    double lambda1 = 1.0;
    double lambda2 = 1.0;

    void validate() const;
    /// phi(r1, r2) = lambda1 max(|r1|, |r2|) + lambda2 (|beta1 - r1| + |beta2 - r2|)
    double phi(double r1, double r2) const;
};

struct DirtyMinimum {
    double value = 0.0;
    double r1 = 0.0;
    double r2 = 0.0;
};

struct SharedMinimum {
    double value = 0.0;
    double r = 0.0;
};

/// Global minimum of phi; the minimizer is a vertex of the breakpoint arrangement,
/// all of whose coordinates lie in {0, +-|beta1|, +-|beta2|}.
DirtyMinimum min_phi_dirty(const ScalarPenaltyInstance& inst);
/// Global minimum of phi(r, r), a shrunk median of (beta1, beta2).
SharedMinimum min_phi_bar(const ScalarPenaltyInstance& inst);
/// min phi(r, r) - min phi(r1, r2) (nonnegative up to rounding).
double penalty_gap(const ScalarPenaltyInstance& inst);

struct LemmaRow {
    ScalarPenaltyInstance inst;
    double dirty = 0.0;
    double shared = 0.0;
    double gap = 0.0;
    bool same_sign = false;  // beta1 beta2 >= 0
    bool holds = false;      // gap ~ 0 when same_sign, gap > 0 otherwise
};

struct LemmaOptions {
    int trials = 10000;
    std::uint64_t seed = 1;
    /// lambda1 / lambda2 is drawn uniformly from [min_ratio, max_ratio). The
    /// equality/strict-gap dichotomy needs lambda2 <= lambda1 < 2 lambda2: below
    /// lambda2 same-sign pairs of unequal size also gap, and from 2 lambda2 on
    /// opposite-sign pairs stop gapping.
    double min_ratio = 1.0;
    double max_ratio = 1.9;
    double zero_tol = 1e-9;
};

/// Random instances: betas are N(0, 1) scaled by 10^U(-2, 1), one of them set to
/// exactly 0 in a tenth of the trials; lambda2 = 10^U(-2, 1).
std::vector<LemmaRow> penalty_lemma_table(const LemmaOptions& opts = {});

std::string lemma_table_csv(const std::vector<LemmaRow>& rows);

} // namespace strata
