#pragma once

#include "sksim/errors.hpp"

#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace sksim {

enum class DomainMode { killed_interval, torus };

inline std::string_view to_string(DomainMode mode) {
    return mode == DomainMode::torus ? "torus" : "killed-interval";
}

inline DomainMode parse_domain_mode(std::string_view name) {
    if (name == "torus") return DomainMode::torus;
    if (name == "killed-interval") return DomainMode::killed_interval;
    throw ConfigError("unknown domain mode '" + std::string(name) + "'");
}

/// Spatial grid used by every finite-difference computation.
///
/// Torus: `n` nodes at l + i*dx, dx = (r-l)/n, periodic.
/// Killed interval: `n` interior nodes at l + (i+1)*dx, dx = (r-l)/(n+1); the
/// boundary points l and r carry Dirichlet-zero ghost values.
struct Grid {
    std::vector<double> nodes;
    double dx = 0.0;
    double left = 0.0;
    double right = 0.0;
    bool periodic = false;

    std::size_t size() const noexcept { return nodes.size(); }
    double period() const noexcept { return right - left; }
};

struct DomainSpec {
    DomainMode mode = DomainMode::torus;
    double left = 0.0;
    double right = 1.0;
    int grid_nodes = 3;

    DomainSpec() = default;
    DomainSpec(DomainMode m, double l, double r, int nodes) : mode(m), left(l), right(r), grid_nodes(nodes) {
        validate();
    }

    void validate() const {
        if (!(left < right)) throw ConfigError("domain requires left < right");
        if (grid_nodes < 3) throw ConfigError("domain requires at least 3 grid nodes");
    }

    bool periodic() const noexcept { return mode == DomainMode::torus; }

    /// Open interval for the killed mode, [l, r] for the torus (positions are
    /// wrapped so the closed interval only admits rounding at r).
    bool contains(double x) const noexcept {
        if (periodic()) return x >= left && x <= right;
        return x > left && x < right;
    }

    double wrap(double x) const noexcept {
        if (!periodic()) return x;
        const double period = right - left;
        double y = std::fmod(x - left, period);
        if (y < 0.0) y += period;
        // fmod can round a tiny negative up to exactly `period`
        if (y >= period) y = 0.0;
        return left + y;
    }

    Grid grid() const { return grid_with(grid_nodes); }

    /// Same domain, different resolution (grid refinement studies).
    Grid grid_with(int nodes) const {
        if (nodes < 3) throw ConfigError("grid needs at least 3 nodes");
        Grid g;
        g.left = left;
        g.right = right;
        g.periodic = periodic();
        const auto n = static_cast<std::size_t>(nodes);
        g.nodes.resize(n);
        if (g.periodic) {
            g.dx = (right - left) / static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) g.nodes[i] = left + static_cast<double>(i) * g.dx;
        } else {
            g.dx = (right - left) / static_cast<double>(n + 1);
            for (std::size_t i = 0; i < n; ++i) g.nodes[i] = left + static_cast<double>(i + 1) * g.dx;
        }
        return g;
    }

    /// Node count that halves dx.
    int refined_nodes() const noexcept { return periodic() ? 2 * grid_nodes : 2 * grid_nodes + 1; }
};

/// Piecewise-linear interpolation of grid values; periodic on the torus,
/// zero ghost values at killed boundaries.
inline double interpolate(const Grid& grid, const double* values, double x) {
    const std::size_t n = grid.size();
    if (grid.periodic) {
        double s = (x - grid.left) / grid.dx;
        s = std::fmod(s, static_cast<double>(n));
        if (s < 0.0) s += static_cast<double>(n);
        auto i = static_cast<std::size_t>(s);
        if (i >= n) i = 0;
        const double frac = s - static_cast<double>(i);
        const std::size_t j = (i + 1) % n;
        return (1.0 - frac) * values[i] + frac * values[j];
    }
    // ghost nodes at index -1 (x = left) and n (x = right)
    const double s = (x - grid.left) / grid.dx - 1.0;
    if (s <= -1.0 || s >= static_cast<double>(n)) return 0.0;
    const double fl = std::floor(s);
    const auto i = static_cast<long>(fl);
    const double frac = s - fl;
    const double lo = i < 0 ? 0.0 : values[static_cast<std::size_t>(i)];
    const double hi = i + 1 >= static_cast<long>(n) ? 0.0 : values[static_cast<std::size_t>(i + 1)];
    return (1.0 - frac) * lo + frac * hi;
}

}  // namespace sksim
