#pragma once

#include "sksim/domain.hpp"
#include "sksim/errors.hpp"
#include "sksim/spatial_fn.hpp"

#include <optional>
#include <utility>

namespace sksim {

/// A strictly positive, bounded w that passed the generator-residual check
/// (see `validate_w`). Holds the certificate alongside the function.
class MartingaleFunction {
public:
    MartingaleFunction(SpatialFn w, const Grid& grid, double residual_sup)
        : w_(std::move(w)), grid_(grid), residual_sup_(residual_sup) {
        lower_bound_ = grid_min(w_, grid_);
        upper_bound_ = grid_max(w_, grid_);
        if (!(lower_bound_ > 0.0)) throw PreconditionError("martingale function must be strictly positive");
        if (!std::isfinite(upper_bound_)) throw PreconditionError("martingale function must be bounded");
    }

    double operator()(double x) const { return w_(x); }

    /// Closed-form gradient when available; otherwise central differences
    /// with the grid spacing (one-sided at killed boundaries).
    double gradient(double x) const {
        if (w_.has_gradient()) return w_.gradient(x);
        const double h = grid_.dx;
        if (!grid_.periodic) {
            if (x - h <= grid_.left) return (w_(x + h) - w_(x)) / h;
            if (x + h >= grid_.right) return (w_(x) - w_(x - h)) / h;
        }
        return (w_(x + h) - w_(x - h)) / (2.0 * h);
    }

    bool gradient_is_approximate() const noexcept { return !w_.has_gradient(); }

    const SpatialFn& fn() const noexcept { return w_; }
    const Grid& grid() const noexcept { return grid_; }
    double residual_sup() const noexcept { return residual_sup_; }
    double lower_bound() const noexcept { return lower_bound_; }
    double bound() const noexcept { return upper_bound_; }
    std::optional<double> constant_value() const noexcept { return w_.constant_value(); }

private:
    SpatialFn w_;
    Grid grid_;
    double residual_sup_;
    double lower_bound_ = 0.0;
    double upper_bound_ = 0.0;
};

}  // namespace sksim
