#pragma once

#include "sksim/domain.hpp"
#include "sksim/errors.hpp"
#include "sksim/martingale_function.hpp"
#include "sksim/spatial_fn.hpp"

#include <cmath>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace sksim {

/// One-dimensional diffusion with generator 1/2 a(x) f'' + b(x) f' on a
/// killed interval or a torus.
class Motion {
public:
    Motion(SpatialFn drift, SpatialFn diffusion, DomainSpec domain)
        : drift_(std::move(drift)), diffusion_(std::move(diffusion)), domain_(domain), grid_(domain.grid()) {
        domain_.validate();
        drift_grid_ = grid_values(drift_, grid_);
        diffusion_grid_ = grid_values(diffusion_, grid_);
        for (std::size_t i = 0; i < grid_.size(); ++i) {
            if (!(diffusion_grid_[i] > 0.0) || !std::isfinite(diffusion_grid_[i]))
                throw ConfigError("diffusion coefficient must be positive and finite on the grid");
            if (!std::isfinite(drift_grid_[i])) throw ConfigError("drift must be finite on the grid");
        }
    }

    double drift(double x) const { return drift_(x); }
    double diffusion(double x) const { return diffusion_(x); }
    double sigma(double x) const { return std::sqrt(diffusion_(x)); }

    const SpatialFn& drift_fn() const noexcept { return drift_; }
    const SpatialFn& diffusion_fn() const noexcept { return diffusion_; }
    const DomainSpec& domain() const noexcept { return domain_; }
    const Grid& grid() const noexcept { return grid_; }
    std::span<const double> drift_on_grid() const noexcept { return drift_grid_; }
    std::span<const double> diffusion_on_grid() const noexcept { return diffusion_grid_; }

    /// Constant coefficients: a single Euler-Maruyama step of any length is
    /// exact in law.
    bool homogeneous() const noexcept { return drift_.is_constant() && diffusion_.is_constant(); }

    /// Same coefficients on a grid with `nodes` nodes.
    Motion refined(int nodes) const {
        DomainSpec d = domain_;
        d.grid_nodes = nodes;
        return Motion(drift_, diffusion_, d);
    }

private:
    SpatialFn drift_;
    SpatialFn diffusion_;
    DomainSpec domain_;
    Grid grid_;
    std::vector<double> drift_grid_;
    std::vector<double> diffusion_grid_;
};

/// Position of one path. Once killed the position stays at its last
/// in-domain value.
struct PathState {
    double position = 0.0;
    double time = 0.0;
    bool alive = true;
    std::optional<double> kill_time;
};

namespace detail {

inline PathState euler_step(const Motion& motion, const PathState& state, double dt, double noise, double drift) {
    if (!state.alive) throw PreconditionError("cannot step a killed path");
    if (!(dt > 0.0)) throw PreconditionError("step requires dt > 0");
    PathState next = state;
    const double x = state.position;
    const double moved = x + drift * dt + motion.sigma(x) * std::sqrt(dt) * noise;
    next.time = state.time + dt;
    const DomainSpec& d = motion.domain();
    if (d.periodic()) {
        next.position = d.wrap(moved);
    } else if (moved > d.left && moved < d.right) {
        next.position = moved;
    } else {
        next.alive = false;
        next.kill_time = next.time;
    }
    return next;
}

}  // namespace detail

/// Euler-Maruyama step x' = x + b(x) dt + sigma(x) sqrt(dt) noise.
inline PathState step(const Motion& motion, const PathState& state, double dt, double noise) {
    return detail::euler_step(motion, state, dt, noise, motion.drift(state.position));
}

/// b(x) + a(x) w'(x) / w(x)
inline double htransform_drift(const Motion& motion, const MartingaleFunction& w, double x) {
    return motion.drift(x) + motion.diffusion(x) * w.gradient(x) / w(x);
}

inline PathState step_htransformed(const Motion& motion, const MartingaleFunction& w, const PathState& state, double dt,
                                   double noise) {
    return detail::euler_step(motion, state, dt, noise, htransform_drift(motion, w, state.position));
}

/// Second-order central-difference approximation of L f on the motion's grid.
/// Killed interval: zero ghost values. Torus: periodic wrap.
inline std::vector<double> discrete_generator(const Motion& motion, std::span<const double> f) {
    const Grid& g = motion.grid();
    const std::size_t n = g.size();
    if (f.size() != n) throw PreconditionError("discrete_generator: grid size mismatch");
    const auto a = motion.diffusion_on_grid();
    const auto b = motion.drift_on_grid();
    const double inv_dx2 = 1.0 / (g.dx * g.dx);
    const double inv_2dx = 0.5 / g.dx;
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double lo, hi;
        if (g.periodic) {
            lo = f[(i + n - 1) % n];
            hi = f[(i + 1) % n];
        } else {
            lo = i == 0 ? 0.0 : f[i - 1];
            hi = i + 1 == n ? 0.0 : f[i + 1];
        }
        out[i] = 0.5 * a[i] * (hi - 2.0 * f[i] + lo) * inv_dx2 + b[i] * (hi - lo) * inv_2dx;
    }
    return out;
}

}  // namespace sksim
