#pragma once

#include "sksim/errors.hpp"

#include <cmath>
#include <vector>

namespace sksim {

struct Atom {
    double mass = 0.0;
    double position = 0.0;
};

/// Finite sum of weighted Dirac masses.
class AtomicMeasure {
public:
    AtomicMeasure() = default;
    AtomicMeasure(std::initializer_list<Atom> atoms) {
        for (const auto& a : atoms) add(a.mass, a.position);
    }

    void add(double mass, double position) {
        if (!(mass > 0.0) || !std::isfinite(mass)) throw PreconditionError("atom masses must be positive and finite");
        atoms_.push_back({mass, position});
    }

    void reserve(std::size_t n) { atoms_.reserve(n); }

    const std::vector<Atom>& atoms() const noexcept { return atoms_; }
    std::size_t size() const noexcept { return atoms_.size(); }
    bool empty() const noexcept { return atoms_.empty(); }

    double total_mass() const noexcept {
        double m = 0.0;
        for (const auto& a : atoms_) m += a.mass;
        return m;
    }

    /// <f, measure>
    template <class F>
    double integrate(const F& f) const {
        double s = 0.0;
        for (const auto& a : atoms_) s += a.mass * f(a.position);
        return s;
    }

private:
    std::vector<Atom> atoms_;
};

}  // namespace sksim
