#include "strata/penalty.hpp"

#include <array>
#include <cmath>
#include <sstream>

#include "strata/dataset.hpp"
#include "strata/error.hpp"
#include "strata/median.hpp"
#include "strata/rng.hpp"

namespace strata {

void ScalarPenaltyInstance::validate() const
{
    if (!(lambda1 > 0.0) || !(lambda2 > 0.0) || !std::isfinite(lambda1) || !std::isfinite(lambda2))
        throw InvalidArgument("penalty instance needs finite positive lambdas");
    if (!std::isfinite(beta1) || !std::isfinite(beta2)) throw InvalidArgument("penalty instance needs finite betas");
}

double ScalarPenaltyInstance::phi(double r1, double r2) const
{
    return lambda1 * std::max(std::abs(r1), std::abs(r2)) + lambda2 * (std::abs(beta1 - r1) + std::abs(beta2 - r2));
}

DirtyMinimum min_phi_dirty(const ScalarPenaltyInstance& inst)
{
    inst.validate();
    const double a = std::abs(inst.beta1), b = std::abs(inst.beta2);
    const std::array<double, 5> cand{0.0, a, -a, b, -b};
    DirtyMinimum best{inst.phi(0.0, 0.0), 0.0, 0.0};
    for (double r1 : cand)
        for (double r2 : cand) {
            const double v = inst.phi(r1, r2);
            // ties keep the candidate of smallest magnitude
            if (v < best.value || (v == best.value && std::abs(r1) + std::abs(r2) < std::abs(best.r1) + std::abs(best.r2)))
                best = {v, r1, r2};
        }
    return best;
}

SharedMinimum min_phi_bar(const ScalarPenaltyInstance& inst)
{
    inst.validate();
    const std::array<double, 2> v{inst.beta1, inst.beta2};
    const double mu = inst.lambda2 / inst.lambda1;
    const std::array<double, 2> w{mu, mu};
    const double r = wsmedian(v, w);
    return {inst.phi(r, r), r};
}

double penalty_gap(const ScalarPenaltyInstance& inst)
{
    return min_phi_bar(inst).value - min_phi_dirty(inst).value;
}

std::vector<LemmaRow> penalty_lemma_table(const LemmaOptions& opts)
{
    if (opts.trials < 0) throw InvalidArgument("trials must be nonnegative");
    if (!(opts.min_ratio > 0.0) || !(opts.max_ratio > opts.min_ratio))
        throw InvalidArgument("lambda ratio range must satisfy 0 < min < max");
    Rng rng(opts.seed);
    std::vector<LemmaRow> rows;
    rows.reserve(opts.trials);
    for (int t = 0; t < opts.trials; ++t) {
        LemmaRow row;
        auto& in = row.inst;
        in.beta1 = rng.normal() * std::pow(10.0, 3 * rng.uniform() - 2);
        in.beta2 = rng.normal() * std::pow(10.0, 3 * rng.uniform() - 2);
        if (rng.uniform() < 0.1) (rng.uniform() < 0.5 ? in.beta1 : in.beta2) = 0.0;
        in.lambda2 = std::pow(10.0, 3 * rng.uniform() - 2);
        in.lambda1 = in.lambda2 * (opts.min_ratio + (opts.max_ratio - opts.min_ratio) * rng.uniform());
        row.dirty = min_phi_dirty(in).value;
        row.shared = min_phi_bar(in).value;
        row.gap = row.shared - row.dirty;
        row.same_sign = in.beta1 * in.beta2 >= 0.0;
        row.holds = row.same_sign ? std::abs(row.gap) <= opts.zero_tol : row.gap > opts.zero_tol;
        rows.push_back(row);
    }
    return rows;
}

std::string lemma_table_csv(const std::vector<LemmaRow>& rows)
{
    std::ostringstream os;
    os << "trial,beta1,beta2,lambda1,lambda2,min_dirty,min_shared,gap,same_sign,holds\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        os << i << ',' << format_double(r.inst.beta1) << ',' << format_double(r.inst.beta2) << ','
           << format_double(r.inst.lambda1) << ',' << format_double(r.inst.lambda2) << ',' << format_double(r.dirty)
           << ',' << format_double(r.shared) << ',' << format_double(r.gap) << ',' << (r.same_sign ? 1 : 0) << ','
           << (r.holds ? 1 : 0) << '\n';
    }
    return os.str();
}

} // namespace strata
