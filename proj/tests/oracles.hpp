#pragma once

// Reference computations written independently of the library, used as
// ground truth by the unit and acceptance tests.

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

namespace oracle {

struct Atom {
    double u;
    double c;
};

/// psi(z) = -alpha z + beta z^2 + sum c (e^{-zu} - 1 + zu), written out term by term.
inline double psi(double alpha, double beta, const std::vector<Atom>& atoms, double z) {
    double s = -alpha * z + beta * z * z;
    for (const auto& a : atoms) s += a.c * (std::exp(-z * a.u) - 1.0 + z * a.u);
    return s;
}

/// Plain bisection on a sign change.
inline double bisect(const std::function<double(double)>& f, double lo, double hi, double tol = 1e-14) {
    double flo = f(lo);
    if (flo * f(hi) > 0.0) throw std::runtime_error("bisect: no sign change");
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if ((fm < 0.0) == (flo < 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

/// Positive root of psi: scan outward from a small z for the sign change.
inline double positive_root(double alpha, double beta, const std::vector<Atom>& atoms) {
    auto f = [&](double z) { return psi(alpha, beta, atoms, z); };
    double lo = 1e-6;
    if (!(f(lo) < 0.0)) throw std::runtime_error("positive_root: not supercritical");
    double hi = lo;
    while (f(hi) < 0.0) hi *= 1.5;
    return bisect(f, lo, hi);
}

/// Classical RK4 for y' = F(y) from y0 over [0, T] with n steps.
inline double rk4(const std::function<double(double)>& F, double y0, double T, int n) {
    const double h = T / n;
    double y = y0;
    for (int i = 0; i < n; ++i) {
        const double k1 = F(y);
        const double k2 = F(y + 0.5 * h * k1);
        const double k3 = F(y + 0.5 * h * k2);
        const double k4 = F(y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return y;
}

/// RK4 with step halving until two successive results agree to `rtol`.
inline double rk4_adaptive(const std::function<double(double)>& F, double y0, double T, double rtol = 1e-12) {
    int n = 16;
    double prev = rk4(F, y0, T, n);
    for (int iter = 0; iter < 20; ++iter) {
        n *= 2;
        const double next = rk4(F, y0, T, n);
        if (std::abs(next - prev) <= rtol * std::max(1.0, std::abs(next))) return next;
        prev = next;
    }
    throw std::runtime_error("rk4_adaptive: no convergence");
}

/// Closed form of u' = -(alpha u + beta u^2), u(0) = c.
inline double quadratic_decay(double alpha, double beta, double c, double t) {
    const double e = std::exp(-alpha * t);
    return alpha * c * e / (alpha + beta * c * (1.0 - e));
}

/// Discrete Fourier representation on n equispaced torus nodes of [0, L).
struct Torus {
    int n;
    double length;

    double node(int i) const { return length * i / n; }
    /// Signed wavenumber of mode k.
    double wavenumber(int k) const {
        const int kk = k <= n / 2 ? k : k - n;
        return 2.0 * std::numbers::pi * kk / length;
    }

    std::vector<std::complex<double>> forward(const std::vector<double>& f) const {
        std::vector<std::complex<double>> out(n);
        for (int k = 0; k < n; ++k) {
            std::complex<double> s = 0.0;
            for (int j = 0; j < n; ++j) s += f[j] * std::polar(1.0, -2.0 * std::numbers::pi * k * j / n);
            out[k] = s / static_cast<double>(n);
        }
        return out;
    }

    std::vector<double> inverse(const std::vector<std::complex<double>>& c) const {
        std::vector<double> out(n);
        for (int j = 0; j < n; ++j) {
            std::complex<double> s = 0.0;
            for (int k = 0; k < n; ++k) s += c[k] * std::polar(1.0, 2.0 * std::numbers::pi * k * j / n);
            out[j] = s.real();
        }
        return out;
    }

    /// Heat semigroup exp(t a/2 d^2/dx^2) applied spectrally.
    std::vector<double> heat(const std::vector<double>& f, double a, double t) const {
        auto c = forward(f);
        for (int k = 0; k < n; ++k) c[k] *= std::exp(-0.5 * a * wavenumber(k) * wavenumber(k) * t);
        return inverse(c);
    }

    /// Heat semigroup applied to a function evaluated exactly at one point.
    double heat_at(const std::vector<double>& f, double a, double t, double x) const {
        auto c = forward(f);
        double s = 0.0;
        for (int k = 0; k < n; ++k) {
            const double kw = wavenumber(k);
            s += (c[k] * std::exp(-0.5 * a * kw * kw * t) * std::polar(1.0, kw * x)).real();
        }
        return s;
    }
};

/// Picard iteration on the mild form
///   u(t) = P_t f - int_0^t P_{t-s} psi(u(s)) ds
/// with the spectral heat semigroup and trapezoidal quadrature in time,
/// iterated until successive iterates agree to `tol`. Returns u at time T
/// on the torus nodes.
inline std::vector<double> picard_mild(const Torus& torus, double a, const std::function<double(double)>& psi_fn,
                                       const std::vector<double>& f, double T, int steps, double tol = 1e-12,
                                       int* iterations = nullptr) {
    const int n = torus.n;
    const double h = T / steps;
    std::vector<double> decay(n);
    for (int k = 0; k < n; ++k) decay[k] = -0.5 * a * torus.wavenumber(k) * torus.wavenumber(k);
    const auto fhat = torus.forward(f);
    std::vector<std::vector<double>> u(steps + 1, f);
    for (int iter = 0; iter < 200; ++iter) {
        // spectral coefficients of psi(u(s_i))
        std::vector<std::vector<std::complex<double>>> r(steps + 1);
        for (int i = 0; i <= steps; ++i) {
            std::vector<double> p(n);
            for (int j = 0; j < n; ++j) p[j] = psi_fn(u[i][j]);
            r[i] = torus.forward(p);
        }
        std::vector<std::vector<double>> next(steps + 1);
        double change = 0.0;
        for (int m = 0; m <= steps; ++m) {
            const double t = m * h;
            std::vector<std::complex<double>> c(n);
            for (int k = 0; k < n; ++k) {
                std::complex<double> integral = 0.0;
                for (int i = 0; i <= m; ++i) {
                    const double wgt = (i == 0 || i == m) ? 0.5 : 1.0;
                    integral += wgt * r[i][k] * std::exp(decay[k] * (t - i * h));
                }
                if (m == 0) integral = 0.0;
                c[k] = fhat[k] * std::exp(decay[k] * t) - h * integral;
            }
            next[m] = torus.inverse(c);
            for (int j = 0; j < n; ++j) change = std::max(change, std::abs(next[m][j] - u[m][j]));
        }
        u = std::move(next);
        if (change < tol) {
            if (iterations) *iterations = iter + 1;
            return u[steps];
        }
    }
    throw std::runtime_error("picard_mild: no convergence");
}

}  // namespace oracle
