#pragma once

#include <cmath>
#include <span>

namespace pslab {

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double residual = 0.0;      // root mean square of the residuals
    double slope_stderr = 0.0;  // 0 when fewer than three points
};

/// Ordinary least squares y ~ slope * x + intercept.
inline LinearFit linear_fit(std::span<const double> x, std::span<const double> y)
{
    const std::size_t n = x.size();
    LinearFit f;
    if (n < 2) return f;
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    f.slope = sxx > 0 ? sxy / sxx : 0.0;
    f.intercept = my - f.slope * mx;
    double ss = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double r = y[i] - f.slope * x[i] - f.intercept;
        ss += r * r;
    }
    f.residual = std::sqrt(ss / n);
    if (n > 2 && sxx > 0) f.slope_stderr = std::sqrt(ss / (n - 2) / sxx);
    return f;
}

}  // namespace pslab
