#pragma once

#include "sksim/domain.hpp"
#include "sksim/errors.hpp"
#include "sksim/martingale_function.hpp"
#include "sksim/measure.hpp"
#include "sksim/mechanism.hpp"
#include "sksim/motion.hpp"
#include "sksim/spatial_fn.hpp"
#include "sksim/tridiagonal.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace sksim {

/// Non-negative bounded data for the Laplace-exponent equations.
struct TestFunction {
    SpatialFn f;
    std::string tag;

    TestFunction(SpatialFn fn) : f(std::move(fn)), tag(f.description()) {}  // NOLINT(google-explicit-constructor)
    TestFunction(SpatialFn fn, std::string t) : f(std::move(fn)), tag(std::move(t)) {}

    std::vector<double> on(const Grid& grid) const {
        auto v = grid_values(f, grid);
        for (double x : v)
            if (!(x >= 0.0) || !std::isfinite(x))
                throw PreconditionError("test function " + tag + " must be non-negative and bounded");
        return v;
    }
};

/// Time-by-node array of one solved field; row k holds time k*dt.
struct SolverField {
    Grid grid;
    std::vector<double> times;
    std::vector<double> values;
    std::string tag;

    std::size_t nodes() const noexcept { return grid.size(); }
    std::size_t time_count() const noexcept { return times.size(); }
    double final_time() const noexcept { return times.back(); }

    std::span<const double> slice(std::size_t k) const { return {values.data() + k * nodes(), nodes()}; }
    std::span<double> slice(std::size_t k) { return {values.data() + k * nodes(), nodes()}; }
    double at(std::size_t k, std::size_t i) const { return values[k * nodes() + i]; }

    double interpolate(std::size_t k, double x) const { return sksim::interpolate(grid, values.data() + k * nodes(), x); }

    /// <field(., t_k), mu> with linear interpolation between nodes.
    double pair(std::size_t k, const AtomicMeasure& mu) const {
        return mu.integrate([&](double x) { return interpolate(k, x); });
    }

    /// Row order reversed: result(t) = field(T - t).
    SolverField reversed(std::string new_tag) const {
        SolverField out{grid, times, std::vector<double>(values.size()), std::move(new_tag)};
        const std::size_t nt = time_count();
        for (std::size_t k = 0; k < nt; ++k) {
            auto src = slice(nt - 1 - k);
            std::copy(src.begin(), src.end(), out.slice(k).begin());
        }
        return out;
    }
};

/// CSV with columns t,x,value,field-tag. `stride` thins the time rows.
inline void write_csv(std::ostream& os, const SolverField& field, std::size_t stride = 1, bool header = true) {
    if (header) os << "t,x,value,field-tag\n";
    char buf[96];
    for (std::size_t k = 0; k < field.time_count(); k += std::max<std::size_t>(stride, 1)) {
        for (std::size_t i = 0; i < field.nodes(); ++i) {
            std::snprintf(buf, sizeof buf, "%.10g,%.10g,%.17g,", field.times[k], field.grid.nodes[i], field.at(k, i));
            os << buf << field.tag << '\n';
        }
    }
}

struct SolverOptions {
    double ceiling = 1e6;
};

namespace detail {

/// psi coefficients cached on the grid nodes.
class GridMechanism {
public:
    GridMechanism(const BranchingMechanism& mech, const Grid& grid) {
        alpha_ = grid_values(mech.alpha(), grid);
        beta_ = grid_values(mech.beta(), grid);
        for (const auto& j : mech.jumps()) {
            sizes_.push_back(j.size);
            intensities_.push_back(grid_values(j.intensity, grid));
        }
    }

    double psi(std::size_t i, double z) const {
        double v = -alpha_[i] * z + beta_[i] * z * z;
        for (std::size_t j = 0; j < sizes_.size(); ++j) v += intensities_[j][i] * compensated_exp(z * sizes_[j]);
        return v;
    }

    double psi_prime(std::size_t i, double z) const {
        double v = -alpha_[i] + 2.0 * beta_[i] * z;
        for (std::size_t j = 0; j < sizes_.size(); ++j) v += intensities_[j][i] * sizes_[j] * -std::expm1(-z * sizes_[j]);
        return v;
    }

    /// sup over nodes and z in [0, zmax] of |psi'| (psi' is increasing in z).
    double lipschitz(double zmax) const {
        double l = 0.0;
        for (std::size_t i = 0; i < alpha_.size(); ++i)
            l = std::max({l, std::abs(psi_prime(i, 0.0)), std::abs(psi_prime(i, zmax))});
        return l;
    }

private:
    std::vector<double> alpha_;
    std::vector<double> beta_;
    std::vector<double> sizes_;
    std::vector<std::vector<double>> intensities_;
};

/// Crank-Nicolson solve of du/dt = L u over a time span `tau`.
class DiffusionStep {
public:
    DiffusionStep(const Motion& motion, double tau) : periodic_(motion.grid().periodic) {
        const Grid& g = motion.grid();
        const std::size_t n = g.size();
        const auto a = motion.diffusion_on_grid();
        const auto b = motion.drift_on_grid();
        lo_.resize(n);
        di_.resize(n);
        up_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            lo_[i] = 0.5 * a[i] / (g.dx * g.dx) - 0.5 * b[i] / g.dx;
            di_[i] = -a[i] / (g.dx * g.dx);
            up_[i] = 0.5 * a[i] / (g.dx * g.dx) + 0.5 * b[i] / g.dx;
        }
        const double h = 0.5 * tau;
        a_lo_.resize(n);
        a_di_.resize(n);
        a_up_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            a_lo_[i] = -h * lo_[i];
            a_di_[i] = 1.0 - h * di_[i];
            a_up_[i] = -h * up_[i];
        }
        h_ = h;
    }

    void apply(std::span<double> u) const {
        const std::size_t n = u.size();
        rhs_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            double left, right;
            if (periodic_) {
                left = u[(i + n - 1) % n];
                right = u[(i + 1) % n];
            } else {
                left = i == 0 ? 0.0 : u[i - 1];
                right = i + 1 == n ? 0.0 : u[i + 1];
            }
            rhs_[i] = u[i] + h_ * (lo_[i] * left + di_[i] * u[i] + up_[i] * right);
        }
        if (periodic_)
            solve_cyclic_tridiagonal(a_lo_, a_di_, a_up_, rhs_);
        else
            solve_tridiagonal(a_lo_, a_di_, a_up_, rhs_);
        std::copy(rhs_.begin(), rhs_.end(), u.begin());
    }

private:
    bool periodic_;
    double h_ = 0.0;
    std::vector<double> lo_, di_, up_;
    std::vector<double> a_lo_, a_di_, a_up_;
    mutable std::vector<double> rhs_;
};

inline std::size_t step_count(double T, double dt) {
    if (!(T > 0.0) || !(dt > 0.0)) throw PreconditionError("solver needs T > 0 and dt > 0");
    const double r = T / dt;
    const auto n = static_cast<std::size_t>(std::llround(r));
    if (n == 0 || std::abs(static_cast<double>(n) - r) > 1e-6 * r)
        throw PreconditionError("T must be an integer multiple of dt");
    return n;
}

/// Strang splitting: half Crank-Nicolson diffusion step, one RK4 reaction
/// step, half diffusion step. Second order in dt and dx.
///
/// `reaction(i, state)` returns d state / dt at node i; `check(k, state)`
/// validates the state after step k.
template <std::size_t K, class Reaction, class Check>
std::array<std::vector<double>, K> integrate_split(const Motion& motion, std::array<std::vector<double>, K> state,
                                                   std::size_t steps, double dt, Reaction&& reaction, Check&& check) {
    const std::size_t n = motion.grid().size();
    std::array<std::vector<double>, K> out;
    for (std::size_t c = 0; c < K; ++c) {
        out[c].resize((steps + 1) * n);
        std::copy(state[c].begin(), state[c].end(), out[c].begin());
    }
    const DiffusionStep diffuse(motion, 0.5 * dt);
    using Node = std::array<double, K>;
    for (std::size_t k = 1; k <= steps; ++k) {
        for (auto& s : state) diffuse.apply(s);
        for (std::size_t i = 0; i < n; ++i) {
            Node y;
            for (std::size_t c = 0; c < K; ++c) y[c] = state[c][i];
            const Node k1 = reaction(i, y);
            Node y2, y3, y4;
            for (std::size_t c = 0; c < K; ++c) y2[c] = y[c] + 0.5 * dt * k1[c];
            const Node k2 = reaction(i, y2);
            for (std::size_t c = 0; c < K; ++c) y3[c] = y[c] + 0.5 * dt * k2[c];
            const Node k3 = reaction(i, y3);
            for (std::size_t c = 0; c < K; ++c) y4[c] = y[c] + dt * k3[c];
            const Node k4 = reaction(i, y4);
            for (std::size_t c = 0; c < K; ++c)
                state[c][i] = y[c] + dt / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        }
        for (auto& s : state) diffuse.apply(s);
        check(k, state);
        for (std::size_t c = 0; c < K; ++c) std::copy(state[c].begin(), state[c].end(), out[c].begin() + k * n);
    }
    return out;
}

inline void check_stability(const GridMechanism& gm, double zmax, double dt) {
    if (dt * gm.lipschitz(zmax) > 2.5)
        throw PreconditionError("dt too large for the explicit reaction step (dt * Lip > 2.5)");
}

inline void check_scalar(const std::vector<double>& u, double ceiling, const char* tag) {
    for (double v : u) {
        if (!std::isfinite(v) || v > ceiling) throw BlowUpError(std::string(tag) + ": solution exceeded the ceiling");
        if (v < -1e-9) throw SchemeFailure(std::string(tag) + ": solution went negative");
    }
}

inline std::vector<double> make_times(std::size_t steps, double dt) {
    std::vector<double> t(steps + 1);
    for (std::size_t k = 0; k <= steps; ++k) t[k] = static_cast<double>(k) * dt;
    return t;
}

}  // namespace detail

/// u_f(., t) for t in [0, T]: du/dt = L u - psi(., u), u(., 0) = f.
inline SolverField solve_u(const BranchingMechanism& mech, const Motion& motion, const TestFunction& f, double T,
                           double dt, const SolverOptions& opts = {}) {
    const Grid& g = motion.grid();
    const std::size_t steps = detail::step_count(T, dt);
    const detail::GridMechanism gm(mech, g);
    auto init = f.on(g);
    const double sup_f = *std::max_element(init.begin(), init.end());
    detail::check_stability(gm, 2.0 * std::max(sup_f, 1.0), dt);
    auto out = detail::integrate_split<1>(
        motion, {std::move(init)}, steps, dt,
        [&](std::size_t i, const std::array<double, 1>& y) { return std::array<double, 1>{-gm.psi(i, y[0])}; },
        [&](std::size_t, const std::array<std::vector<double>, 1>& s) { detail::check_scalar(s[0], opts.ceiling, "u"); });
    return {g, detail::make_times(steps, dt), std::move(out[0]), "u"};
}

/// u*_f: solve_u with the tilted mechanism.
inline SolverField solve_u_star(const BranchingMechanism& mech, const MartingaleFunction& w, const Motion& motion,
                                const TestFunction& f, double T, double dt, const SolverOptions& opts = {}) {
    auto field = solve_u(tilt(mech, w), motion, f, T, dt, opts);
    field.tag = "u_star";
    return field;
}

/// f^T(x, t) = u*_f(x, T - t).
inline SolverField solve_fT(const BranchingMechanism& mech, const MartingaleFunction& w, const Motion& motion,
                            const TestFunction& f, double T, double dt, const SolverOptions& opts = {}) {
    return solve_u_star(mech, w, motion, f, T, dt, opts).reversed("fT");
}

/// u*_f together with g = w exp(-v_{f,h}) and v_{f,h} itself.
struct VSolution {
    SolverField u_star;
    SolverField g;
    SolverField v;
};

/// Integrates (u*, g) jointly with g = w exp(-v):
///   du*/dt = L u* - psi*(u*)
///   dg/dt  = L g + psi*(u* - g) - psi*(u*)
/// with psi*(u* - g) - psi*(u*) evaluated as psi(w + u* - g) - psi(w + u*).
/// The u* component is computed by exactly the same arithmetic as solve_u_star.
inline VSolution solve_v_system(const BranchingMechanism& mech, const MartingaleFunction& w, const Motion& motion,
                                const TestFunction& f, const TestFunction& h, double T, double dt,
                                const SolverOptions& opts = {}) {
    const Grid& g = motion.grid();
    const std::size_t steps = detail::step_count(T, dt);
    const detail::GridMechanism base(mech, g);
    const detail::GridMechanism star(tilt(mech, w), g);
    const auto wv = grid_values(w.fn(), g);
    auto u0 = f.on(g);
    const auto h0 = h.on(g);
    std::vector<double> g0(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) g0[i] = wv[i] * std::exp(-h0[i]);
    const double sup_f = *std::max_element(u0.begin(), u0.end());
    detail::check_stability(star, 2.0 * std::max(sup_f, 1.0), dt);
    detail::check_stability(base, 2.0 * (std::max(sup_f, 1.0) + w.bound()), dt);

    auto out = detail::integrate_split<2>(
        motion, {std::move(u0), std::move(g0)}, steps, dt,
        [&](std::size_t i, const std::array<double, 2>& y) {
            const double du = -star.psi(i, y[0]);
            const double dg = base.psi(i, wv[i] + y[0] - y[1]) - base.psi(i, wv[i] + y[0]);
            return std::array<double, 2>{du, dg};
        },
        [&](std::size_t, const std::array<std::vector<double>, 2>& s) {
            detail::check_scalar(s[0], opts.ceiling, "u_star");
            for (std::size_t i = 0; i < s[1].size(); ++i) {
                if (!(s[1][i] > 0.0) || s[1][i] > wv[i] * (1.0 + 1e-8))
                    throw SchemeFailure("w exp(-v) left (0, w]: v would be negative or infinite");
            }
        });

    const auto times = detail::make_times(steps, dt);
    std::vector<double> v(out[1].size());
    const std::size_t n = g.size();
    for (std::size_t k = 0; k <= steps; ++k)
        for (std::size_t i = 0; i < n; ++i) v[k * n + i] = -std::log(std::min(out[1][k * n + i] / wv[i], 1.0));
    return {SolverField{g, times, std::move(out[0]), "u_star"}, SolverField{g, times, std::move(out[1]), "g"},
            SolverField{g, times, std::move(v), "v"}};
}

inline SolverField solve_v(const BranchingMechanism& mech, const MartingaleFunction& w, const Motion& motion,
                           const TestFunction& f, const TestFunction& h, double T, double dt,
                           const SolverOptions& opts = {}) {
    return solve_v_system(mech, w, motion, f, h, T, dt, opts).v;
}

/// h^T(x, t) = v_{f,h}(x, T - t).
inline SolverField solve_hT(const BranchingMechanism& mech, const MartingaleFunction& w, const Motion& motion,
                            const TestFunction& f, const TestFunction& h, double T, double dt,
                            const SolverOptions& opts = {}) {
    return solve_v(mech, w, motion, f, h, T, dt, opts).reversed("hT");
}

/// kappa^T = f^T + w (1 - exp(-h^T)).
inline SolverField kappa(const SolverField& fT, const SolverField& hT, const MartingaleFunction& w) {
    if (fT.nodes() != hT.nodes() || fT.time_count() != hT.time_count() || fT.grid.dx != hT.grid.dx ||
        fT.grid.left != hT.grid.left)
        throw PreconditionError("kappa: f^T and h^T live on different grids");
    SolverField out{fT.grid, fT.times, std::vector<double>(fT.values.size()), "kappa"};
    const auto wv = grid_values(w.fn(), fT.grid);
    const std::size_t n = fT.nodes();
    for (std::size_t k = 0; k < fT.time_count(); ++k)
        for (std::size_t i = 0; i < n; ++i)
            out.values[k * n + i] = fT.at(k, i) + wv[i] * -std::expm1(-hT.at(k, i));
    return out;
}

/// f + w (1 - exp(-h)): the data whose u-solution matches kappa^T(., 0).
inline SpatialFn transported_data(const SpatialFn& f, const SpatialFn& h, const MartingaleFunction& w) {
    return {[f, h, w](double x) { return f(x) + w(x) * -std::expm1(-h(x)); }, std::nullopt,
            "f+w(1-exp(-h))[" + f.description() + ";" + h.description() + "]"};
}

}  // namespace sksim
