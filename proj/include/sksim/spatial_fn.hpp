#pragma once

#include "sksim/domain.hpp"
#include "sksim/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace sksim {

/// A real function on the spatial domain with optional closed-form gradient.
///
/// Spatially constant functions are tagged so callers can take the
/// homogeneous fast paths (exact Gaussian transport, constant w).
class SpatialFn {
public:
    using Eval = std::function<double(double)>;

    SpatialFn() : SpatialFn(constant(0.0)) {}

    SpatialFn(Eval value, std::optional<Eval> gradient, std::string description = "custom")
        : value_(std::move(value)), gradient_(std::move(gradient)), description_(std::move(description)) {}

    static SpatialFn constant(double c) {
        SpatialFn fn([c](double) { return c; }, Eval([](double) { return 0.0; }),
                     "constant(" + fmt_num(c) + ")");
        fn.constant_ = c;
        return fn;
    }

    /// a + b x
    static SpatialFn affine(double a, double b) {
        if (b == 0.0) return constant(a);
        return {[a, b](double x) { return a + b * x; }, Eval([b](double) { return b; }),
                "affine(" + fmt_num(a) + "," + fmt_num(b) + ")"};
    }

    /// base + amp * exp(-(x - center)^2 / (2 width^2))
    static SpatialFn gaussian_bump(double base, double amp, double center, double width) {
        if (!(width > 0.0)) throw ConfigError("gaussian-bump width must be positive");
        if (amp == 0.0) return constant(base);
        const double inv = 1.0 / (2.0 * width * width);
        return {[=](double x) { return base + amp * std::exp(-(x - center) * (x - center) * inv); },
                Eval([=](double x) {
                    return -2.0 * inv * (x - center) * amp * std::exp(-(x - center) * (x - center) * inv);
                }),
                "gaussian-bump(" + fmt_num(base) + "," + fmt_num(amp) + "," + fmt_num(center) + "," +
                    fmt_num(width) + ")"};
    }

    /// base + amp * sin(k x + phase)
    static SpatialFn sine(double base, double amp, double k, double phase) {
        if (amp == 0.0 || k == 0.0) return constant(base + amp * std::sin(phase));
        return {[=](double x) { return base + amp * std::sin(k * x + phase); },
                Eval([=](double x) { return amp * k * std::cos(k * x + phase); }),
                "sine(" + fmt_num(base) + "," + fmt_num(amp) + "," + fmt_num(k) + "," + fmt_num(phase) + ")"};
    }

    /// scale * exp(theta x)
    static SpatialFn exponential(double scale, double theta) {
        if (theta == 0.0) return constant(scale);
        return {[=](double x) { return scale * std::exp(theta * x); },
                Eval([=](double x) { return scale * theta * std::exp(theta * x); }),
                "exponential(" + fmt_num(scale) + "," + fmt_num(theta) + ")"};
    }

    /// Piecewise-linear interpolant of values on `grid`. No closed-form gradient.
    static SpatialFn from_grid(const Grid& grid, std::vector<double> values, std::string description = "grid") {
        if (values.size() != grid.size()) throw PreconditionError("grid function size mismatch");
        auto shared = std::make_shared<const std::pair<Grid, std::vector<double>>>(grid, std::move(values));
        return {[shared](double x) { return interpolate(shared->first, shared->second.data(), x); }, std::nullopt,
                std::move(description)};
    }

    double operator()(double x) const { return value_(x); }

    bool has_gradient() const noexcept { return gradient_.has_value(); }

    double gradient(double x) const {
        if (!gradient_) throw PreconditionError("no closed-form gradient for " + description_);
        return (*gradient_)(x);
    }

    std::optional<double> constant_value() const noexcept { return constant_; }
    bool is_constant() const noexcept { return constant_.has_value(); }

    const std::string& description() const noexcept { return description_; }

    SpatialFn scaled(double s) const {
        if (constant_) return constant(*constant_ * s);
        auto v = value_;
        std::optional<Eval> g;
        if (gradient_) g = [gg = *gradient_, s](double x) { return s * gg(x); };
        return {[v, s](double x) { return s * v(x); }, std::move(g), fmt_num(s) + "*" + description_};
    }

private:
    static std::string fmt_num(double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return buf;
    }

    Eval value_;
    std::optional<Eval> gradient_;
    std::string description_;
    std::optional<double> constant_;
};

inline std::vector<double> grid_values(const SpatialFn& fn, const Grid& grid) {
    std::vector<double> out(grid.size());
    std::transform(grid.nodes.begin(), grid.nodes.end(), out.begin(), [&](double x) { return fn(x); });
    return out;
}

inline double grid_min(const SpatialFn& fn, const Grid& grid) {
    auto v = grid_values(fn, grid);
    return *std::min_element(v.begin(), v.end());
}

inline double grid_max(const SpatialFn& fn, const Grid& grid) {
    auto v = grid_values(fn, grid);
    return *std::max_element(v.begin(), v.end());
}

/// Certified sup |fn| over the grid. Throws if fn is not finite at a node.
inline double sup_abs(const SpatialFn& fn, const Grid& grid) {
    double s = 0.0;
    for (double x : grid.nodes) {
        const double v = fn(x);
        if (!std::isfinite(v)) throw ModelError(fn.description() + " is not finite on the grid");
        s = std::max(s, std::abs(v));
    }
    return s;
}

/// Upper bound of an arbitrary evaluator for thinning. Samples four times
/// the grid resolution and pads by 2% so off-node positions stay covered.
inline double thinning_bound(const std::function<double(double)>& fn, const Grid& grid, bool constant) {
    if (constant) return std::max(0.0, fn(grid.nodes.front()));
    double s = 0.0;
    const std::size_t fine = 4 * grid.size();
    const double lo = grid.left;
    const double h = (grid.right - grid.left) / static_cast<double>(fine);
    for (std::size_t i = 0; i <= fine; ++i) s = std::max(s, fn(lo + static_cast<double>(i) * h));
    return s * 1.02 + 1e-12;
}

}  // namespace sksim
