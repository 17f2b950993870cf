#include "audit.hpp"

#include <algorithm>
#include <mutex>
#include <sstream>

#include "oracles.hpp"

namespace audit {

namespace {

std::mutex mutex;
Summary state;

void record(bool lasso, double residual, const std::string& what)
{
    std::lock_guard lock(mutex);
    (lasso ? state.lasso_fits : state.m2_fits)++;
    state.worst = std::max(state.worst, residual);
    if (!(residual <= kTolerance)) {
        if (state.violations++ == 0) state.first_violation = what;
    }
}

} // namespace

void install()
{
    strata::set_solve_observer([](const strata::WeightedLassoProblem& pr, const strata::FitResult& fit) {
        const double r = oracle::lasso_kkt(pr, fit.theta, fit.intercept);
        std::ostringstream os;
        os << "weighted lasso " << pr.rows() << "x" << pr.cols() << " residual " << r;
        record(true, r, os.str());
    });
    strata::set_m2_observer([](const strata::M2Problem& pr, const strata::M2Fit& fit) {
        const double r = oracle::m2_recheck(pr, fit.coef, fit.common);
        std::ostringstream os;
        os << "M2 K=" << pr.data->strata() << " p=" << pr.data->features() << " residual " << r;
        record(false, r, os.str());
    });
}

Summary summary()
{
    std::lock_guard lock(mutex);
    return state;
}

void reset()
{
    std::lock_guard lock(mutex);
    state = Summary{};
}

} // namespace audit
