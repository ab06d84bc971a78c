#pragma once

#include "sksim/domain.hpp"
#include "sksim/errors.hpp"
#include "sksim/martingale_function.hpp"
#include "sksim/motion.hpp"
#include "sksim/spatial_fn.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace sksim {

/// One atom c(x) delta_u of the jump measure m(x, du).
struct JumpAtom {
    double size = 1.0;
    SpatialFn intensity = SpatialFn::constant(0.0);
};

/// psi(x, z) = -alpha(x) z + beta(x) z^2 + sum_j c_j(x) (exp(-z u_j) - 1 + z u_j)
class BranchingMechanism {
public:
    BranchingMechanism(SpatialFn alpha, SpatialFn beta, std::vector<JumpAtom> jumps, DomainSpec domain)
        : alpha_(std::move(alpha)), beta_(std::move(beta)), jumps_(std::move(jumps)), domain_(domain) {
        const Grid g = domain_.grid();
        for (double x : g.nodes) {
            if (!std::isfinite(alpha_(x))) throw ConfigError("alpha must be finite on the grid");
            const double b = beta_(x);
            if (!(b >= 0.0) || !std::isfinite(b)) throw ConfigError("beta must be non-negative on the grid");
        }
        for (const auto& j : jumps_) {
            if (!(j.size > 0.0) || !std::isfinite(j.size)) throw ConfigError("jump sizes must be positive");
            for (double x : g.nodes) {
                const double c = j.intensity(x);
                if (!(c >= 0.0) || !std::isfinite(c))
                    throw ConfigError("jump intensities must be non-negative on the grid");
            }
        }
    }

    const SpatialFn& alpha() const noexcept { return alpha_; }
    const SpatialFn& beta() const noexcept { return beta_; }
    const std::vector<JumpAtom>& jumps() const noexcept { return jumps_; }
    const DomainSpec& domain() const noexcept { return domain_; }

    bool homogeneous() const noexcept {
        return alpha_.is_constant() && beta_.is_constant() &&
               std::all_of(jumps_.begin(), jumps_.end(), [](const JumpAtom& j) { return j.intensity.is_constant(); });
    }

    double max_jump() const noexcept {
        double m = 0.0;
        for (const auto& j : jumps_) m = std::max(m, j.size);
        return m;
    }

    /// Net linear growth rate per unit mass once jumps are compensated:
    /// alpha(x) - sum_j c_j(x) u_j.
    double net_linear_rate(double x) const {
        double a = alpha_(x);
        for (const auto& j : jumps_) a -= j.intensity(x) * j.size;
        return a;
    }

    void check_position(double x) const {
        if (!domain_.contains(x)) throw DomainError("position " + std::to_string(x) + " outside the domain");
    }

private:
    SpatialFn alpha_;
    SpatialFn beta_;
    std::vector<JumpAtom> jumps_;
    DomainSpec domain_;
};

namespace detail {

// exp(-y) - 1 + y without cancellation for small y
inline double compensated_exp(double y) {
    if (std::abs(y) < 1e-5) return y * y * (0.5 - y / 6.0 + y * y / 24.0);
    return std::expm1(-y) + y;
}

inline double psi_unchecked(const BranchingMechanism& mech, double x, double z) {
    double v = -mech.alpha()(x) * z + mech.beta()(x) * z * z;
    for (const auto& j : mech.jumps()) v += j.intensity(x) * compensated_exp(z * j.size);
    return v;
}

inline double psi_prime_unchecked(const BranchingMechanism& mech, double x, double z) {
    double v = -mech.alpha()(x) + 2.0 * mech.beta()(x) * z;
    for (const auto& j : mech.jumps()) v += j.intensity(x) * j.size * -std::expm1(-z * j.size);
    return v;
}

inline void check_argument(double z) {
    if (!(z >= 0.0) || !std::isfinite(z)) throw PreconditionError("psi requires a finite argument z >= 0");
}

}  // namespace detail

inline double eval_psi(const BranchingMechanism& mech, double x, double z) {
    mech.check_position(x);
    detail::check_argument(z);
    return detail::psi_unchecked(mech, x, z);
}

inline double eval_psi_prime(const BranchingMechanism& mech, double x, double z) {
    mech.check_position(x);
    detail::check_argument(z);
    return detail::psi_prime_unchecked(mech, x, z);
}

/// Unique positive root of a spatially homogeneous, supercritical psi.
///
/// Brackets on [1e-12, hi] doubling hi until psi changes sign, then bisects
/// until the bracket cannot shrink further (machine precision).
inline double find_w_star(const BranchingMechanism& mech) {
    if (!mech.homogeneous()) throw PreconditionError("find_w_star needs spatially constant coefficients");
    const double x = mech.domain().grid().nodes.front();
    if (!(eval_psi_prime(mech, x, 0.0) < 0.0))
        throw ModelError("mechanism is not supercritical (psi'(0) >= 0): no positive root");
    double lo = 1e-12;
    double hi = 1.0;
    while (eval_psi(mech, x, hi) <= 0.0) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e12) throw ModelError("psi has no positive root below 1e12");
    }
    while (true) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (eval_psi(mech, x, mid) <= 0.0)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

/// Certifies `candidate` as a martingale function: w > 0 on the grid and
/// sup |L w - psi(., w)| <= tol with L the motion's discrete generator.
inline MartingaleFunction validate_w(const BranchingMechanism& mech, const Motion& motion, const SpatialFn& candidate,
                                     double tol) {
    const Grid& g = motion.grid();
    const auto w = grid_values(candidate, g);
    for (double v : w)
        if (!(v > 0.0) || !std::isfinite(v)) throw PreconditionError("candidate w must be positive and finite");
    const auto lw = discrete_generator(motion, w);
    std::vector<double> residual(g.size());
    double sup = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        residual[i] = std::abs(lw[i] - eval_psi(mech, g.nodes[i], w[i]));
        sup = std::max(sup, residual[i]);
    }
    if (!(sup <= tol)) {
        throw InvalidMartingaleFunction("w fails the generator check: sup |Lw - psi(w)| = " + std::to_string(sup) +
                                            " > " + std::to_string(tol),
                                        sup, std::move(residual));
    }
    return MartingaleFunction(candidate, g, sup);
}

/// Esscher tilt: alpha* = -psi'(., w), same beta, c_j* = c_j exp(-w u_j).
inline BranchingMechanism tilt(const BranchingMechanism& mech, const MartingaleFunction& w) {
    const bool flat = mech.homogeneous() && w.constant_value().has_value();
    const double x0 = mech.domain().grid().nodes.front();
    SpatialFn alpha_star = flat ? SpatialFn::constant(-eval_psi_prime(mech, x0, w(x0)))
                                : SpatialFn([mech, w](double x) { return -detail::psi_prime_unchecked(mech, x, w(x)); },
                                            std::nullopt, "tilted-alpha");
    std::vector<JumpAtom> jumps;
    for (const auto& j : mech.jumps()) {
        JumpAtom t;
        t.size = j.size;
        if (flat) {
            t.intensity = SpatialFn::constant(j.intensity(x0) * std::exp(-w(x0) * j.size));
        } else {
            t.intensity = SpatialFn([c = j.intensity, u = j.size, w](double x) { return c(x) * std::exp(-w(x) * u); },
                                    std::nullopt, "tilted-intensity");
        }
        jumps.push_back(std::move(t));
    }
    return BranchingMechanism(std::move(alpha_star), mech.beta(), std::move(jumps), mech.domain());
}

/// One atom of the branch-point mass law eta(x, n).
struct MassAtom {
    double mass = 0.0;
    double probability = 0.0;
};

/// Skeleton branching data q(x), p(x, n), eta(x, n) for atomic jump measures.
class OffspringLaw {
public:
    OffspringLaw(BranchingMechanism mech, MartingaleFunction w, int n_max)
        : mech_(std::move(mech)), w_(std::move(w)), n_max_(n_max) {}

    int n_max() const noexcept { return n_max_; }
    const BranchingMechanism& mechanism() const noexcept { return mech_; }
    const MartingaleFunction& w() const noexcept { return w_; }

    /// q = psi'(x, w) - psi(x, w) / w
    double q(double x) const {
        const double wx = w_(x);
        return detail::psi_prime_unchecked(mech_, x, wx) - detail::psi_unchecked(mech_, x, wx) / wx;
    }

    double p(double x, int n) const {
        if (n < 2 || n > n_max_) return 0.0;
        const double norm = w_(x) * q(x);
        if (norm <= 0.0) return n == 2 ? 1.0 : 0.0;
        return weight(x, n) / norm;
    }

    /// Probability mass beyond n_max, from the Poisson upper tails of the
    /// jump terms (independent of the truncated sum).
    double tail_mass(double x) const {
        const double wx = w_(x);
        const double norm = wx * q(x);
        if (norm <= 0.0) return 0.0;
        double t = 0.0;
        for (const auto& j : mech_.jumps()) {
            const double lambda = wx * j.size;
            if (lambda > 0.0) t += j.intensity(x) * boost::math::gamma_p(static_cast<double>(n_max_ + 1), lambda);
        }
        return t / norm;
    }

    double mean_offspring(double x) const {
        double m = 0.0;
        for (int n = 2; n <= n_max_; ++n) m += n * p(x, n);
        return m;
    }

    std::vector<MassAtom> eta(double x, int n) const {
        std::vector<MassAtom> atoms;
        if (n < 2) return atoms;
        const double wx = w_(x);
        double total = 0.0;
        if (n == 2) {
            const double b = mech_.beta()(x) * wx * wx;
            if (b > 0.0) atoms.push_back({0.0, b});
            total += b;
        }
        for (const auto& j : mech_.jumps()) {
            const double v = j.intensity(x) * poisson_weight(wx * j.size, n);
            if (v > 0.0) atoms.push_back({j.size, v});
            total += v;
        }
        if (total <= 0.0) return {{0.0, 1.0}};
        for (auto& a : atoms) a.probability /= total;
        return atoms;
    }

    /// Inverse-CDF draw of the offspring count; `u` uniform on [0, 1).
    int sample_offspring(double x, double u) const {
        double acc = 0.0;
        double total = 0.0;
        for (int n = 2; n <= n_max_; ++n) total += p(x, n);
        const double target = u * total;
        for (int n = 2; n <= n_max_; ++n) {
            acc += p(x, n);
            if (target < acc) return n;
        }
        return n_max_;
    }

    double sample_branch_mass(double x, int n, double u) const {
        const auto atoms = eta(x, n);
        double acc = 0.0;
        for (const auto& a : atoms) {
            acc += a.probability;
            if (u < acc) return a.mass;
        }
        return atoms.back().mass;
    }

private:
    // e^{-lambda} lambda^n / n!
    static double poisson_weight(double lambda, int n) {
        if (lambda <= 0.0) return 0.0;
        return std::exp(n * std::log(lambda) - lambda - std::lgamma(n + 1.0));
    }

    double weight(double x, int n) const {
        const double wx = w_(x);
        double v = n == 2 ? mech_.beta()(x) * wx * wx : 0.0;
        for (const auto& j : mech_.jumps()) v += j.intensity(x) * poisson_weight(wx * j.size, n);
        return v;
    }

    BranchingMechanism mech_;
    MartingaleFunction w_;
    int n_max_;
};

/// Builds q, p_n and eta_n. n_max grows until the truncated tail is below
/// `tail_tol` at every grid node.
inline OffspringLaw build_offspring_law(const BranchingMechanism& mech, const MartingaleFunction& w, int n_max = 2,
                                        double tail_tol = 1e-12) {
    if (n_max < 2) throw PreconditionError("n_max must be at least 2");
    const Grid g = mech.domain().grid();
    const OffspringLaw probe(mech, w, 2);
    for (double x : g.nodes) {
        if (probe.q(x) < -1e-12) throw ModelError("skeleton branching rate q is negative at x = " + std::to_string(x));
    }
    constexpr int n_cap = 400;
    while (true) {
        OffspringLaw law(mech, w, n_max);
        bool ok = true;
        for (double x : g.nodes) {
            if (law.tail_mass(x) > tail_tol) {
                ok = false;
                break;
            }
        }
        if (ok) return law;
        if (n_max >= n_cap) throw ModelError("offspring tail does not fall below tail_tol by n = 400");
        ++n_max;
    }
}

}  // namespace sksim
