#pragma once

#include <cmath>
#include <functional>
#include <vector>

// Test-side oracles, independent of the library's quadrature and regression
// code paths.
namespace testsupport {

// Composite Simpson rule; n is the number of subintervals (made even).
inline double simpson(const std::function<double(double)>& f, double a, double b,
                      std::size_t n = 200000) {
    if (n % 2 == 1) ++n;
    const double h = (b - a) / static_cast<double>(n);
    double acc = f(a) + f(b);
    for (std::size_t i = 1; i < n; ++i) {
        acc += f(a + static_cast<double>(i) * h) * (i % 2 == 1 ? 4.0 : 2.0);
    }
    return acc * h / 3.0;
}

// Adaptive-style refinement: doubles the panel count until two Simpson
// passes agree to the requested tolerance.
inline double integrate_oracle(const std::function<double(double)>& f, double a, double b,
                               double tol = 1e-11) {
    std::size_t n = 4096;
    double prev = simpson(f, a, b, n);
    for (int round = 0; round < 8; ++round) {
        n *= 2;
        const double cur = simpson(f, a, b, n);
        if (std::fabs(cur - prev) < tol) return cur;
        prev = cur;
    }
    return prev;
}

// Plain least squares slope for (x, y) pairs.
inline double lsq_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

} // namespace testsupport
