#pragma once

#include "sksim/errors.hpp"

#include <span>
#include <vector>

namespace sksim {

/// Thomas algorithm. Row i reads lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i];
/// lower[0] and upper[n-1] are ignored. Result overwrites `rhs`.
inline void solve_tridiagonal(std::span<const double> lower, std::span<const double> diag,
                              std::span<const double> upper, std::span<double> rhs) {
    const std::size_t n = diag.size();
    std::vector<double> c(n);
    double denom = diag[0];
    if (denom == 0.0) throw SchemeFailure("singular tridiagonal system");
    c[0] = upper[0] / denom;
    rhs[0] /= denom;
    for (std::size_t i = 1; i < n; ++i) {
        denom = diag[i] - lower[i] * c[i - 1];
        if (denom == 0.0) throw SchemeFailure("singular tridiagonal system");
        c[i] = i + 1 < n ? upper[i] / denom : 0.0;
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / denom;
    }
    for (std::size_t i = n - 1; i-- > 0;) rhs[i] -= c[i] * rhs[i + 1];
}

/// Periodic tridiagonal system: lower[0] couples row 0 to x[n-1] and
/// upper[n-1] couples row n-1 to x[0]. Sherman-Morrison on top of Thomas.
inline void solve_cyclic_tridiagonal(std::span<const double> lower, std::span<const double> diag,
                                     std::span<const double> upper, std::span<double> rhs) {
    const std::size_t n = diag.size();
    if (n < 3) throw PreconditionError("cyclic system needs at least 3 unknowns");
    const double corner_top = lower[0];        // A[0][n-1]
    const double corner_bottom = upper[n - 1];  // A[n-1][0]
    const double gamma = -diag[0];
    std::vector<double> d(diag.begin(), diag.end());
    d[0] -= gamma;
    d[n - 1] -= corner_bottom * corner_top / gamma;
    solve_tridiagonal(lower, d, upper, rhs);
    std::vector<double> z(n, 0.0);
    z[0] = gamma;
    z[n - 1] = corner_bottom;
    solve_tridiagonal(lower, d, upper, z);
    const double fact = (rhs[0] + corner_top * rhs[n - 1] / gamma) / (1.0 + z[0] + corner_top * z[n - 1] / gamma);
    for (std::size_t i = 0; i < n; ++i) rhs[i] -= fact * z[i];
}

}  // namespace sksim
