#pragma once

// Process-wide re-check of every fit the library returns: weighted lasso fits
// against the dense KKT check, M2 fits against the bisection certificate.

#include <string>

namespace audit {

struct Summary {
    long lasso_fits = 0;
    long m2_fits = 0;
    long violations = 0;
    double worst = 0.0;
    std::string first_violation;
};

inline constexpr double kTolerance = 1e-6;

void install();
Summary summary();
void reset();

} // namespace audit
