#include "tb/stats.hpp"

#include <array>
#include <stdexcept>

namespace tb {

Summary summarize(const std::vector<double>& xs) {
    Summary s;
    s.count = xs.size();
    if (xs.empty()) return s;
    for (double x : xs) s.mean += x;
    s.mean /= static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0;
        for (double x : xs) ss += (x - s.mean) * (x - s.mean);
        s.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
        s.se = s.sd / std::sqrt(static_cast<double>(xs.size()));
        s.ci95 = t975(static_cast<double>(xs.size() - 1)) * s.se;
    }
    return s;
}

LineFit wls_known_se(const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>& se) {
    if (x.size() != y.size() || x.size() != se.size() || x.size() < 2)
        throw std::invalid_argument("wls_known_se: need at least two matched points");
    double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double w = 1.0 / (se[i] * se[i]);
        sw += w;
        sx += w * x[i];
        sy += w * y[i];
        sxx += w * x[i] * x[i];
        sxy += w * x[i] * y[i];
    }
    const double det = sw * sxx - sx * sx;
    LineFit f;
    f.slope = (sw * sxy - sx * sy) / det;
    f.intercept = (sxx * sy - sx * sxy) / det;
    f.slope_se = std::sqrt(sw / det);
    f.dof = static_cast<double>(x.size() - 2);
    return f;
}

LineFit ols(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("ols: need at least two matched points");
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.dof = n - 2;
    if (x.size() > 2) {
        double rss = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double e = y[i] - f.intercept - f.slope * x[i];
            rss += e * e;
        }
        f.slope_se = std::sqrt(rss / f.dof / sxx);
    }
    return f;
}

double t975(double dof) {
    static constexpr std::array<double, 30> table = {
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179, 2.160, 2.145, 2.131,
        2.120,  2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042};
    if (dof < 1) return table[0];
    const auto i = static_cast<std::size_t>(dof);
    return i <= table.size() ? table[i - 1] : 1.96;
}

}  // namespace tb
