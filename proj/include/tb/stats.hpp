#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace tb {

struct LineFit {
    double slope = 0;
    double intercept = 0;
    double slope_se = 0;
    double dof = 0;
};

struct Summary {
    double mean = 0;
    double sd = 0;
    double se = 0;
    double ci95 = 0;
    std::size_t count = 0;
};

Summary summarize(const std::vector<double>& xs);

// Weighted least squares with known per-point standard errors (no residual rescaling).
LineFit wls_known_se(const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>& se);

// Ordinary least squares; slope_se from the residual variance.
LineFit ols(const std::vector<double>& x, const std::vector<double>& y);

// Two-sided Student t quantile at 97.5% (exact table for small dof, normal beyond).
double t975(double dof);

}  // namespace tb
