#pragma once

// Closed-form fields of the two shipped examples, generic over the scalar
// type. They mirror models/pendulum.mdl and models/reactor.mdl (converted
// form) and are used where a parsed model would be needlessly slow.

#include <array>

#include "adctl/autodiff.hpp"

namespace adctl {

struct PendulumParams {
    double M = 0.5;
    double m = 0.2;
    double b = 0.1;
    double I = 0.006;
    double g = 9.81;
    double l = 0.3;
};

/// z = [x, dx, theta, dtheta]; theta = 0 hangs down.
template <class S>
std::array<S, 4> pendulum_rhs(const S& dx, const S& theta, const S& dtheta, const S& F, const PendulumParams& p) {
    const double J = p.I + p.m * p.l * p.l;
    const double ml = p.m * p.l;
    const S c = cos(theta);
    const S s = sin(theta);
    const S den = ml * ml * (c * c) - (p.m + p.M) * J;
    const S w2 = dtheta * dtheta;
    // sin(2 theta) / 2 = s c
    const S ddx = (J * (p.b * dx - F - ml * w2 * s) - ml * ml * p.g * (s * c)) / den;
    const S ddtheta = ml * (F * c + ml * w2 * (s * c) - p.b * dx * c + (p.m + p.M) * p.g * s) / den;
    return {dx, ddx, dtheta, ddtheta};
}

/// Field on [x, dx, theta, dtheta, F].
inline VectorFunction pendulum_field(const PendulumParams& p = {}) {
    return VectorFunction::generic(5, 0, 4, [p](auto z, std::span<const double>) {
        using S = std::remove_const_t<typename decltype(z)::value_type>;
        const auto r = pendulum_rhs<S>(z[1], z[2], z[3], z[4], p);
        return std::vector<S>(r.begin(), r.end());
    });
}

/// Mechanical energy; conserved when b = 0 and F = 0.
inline double pendulum_energy(std::span<const double> z, const PendulumParams& p = {}) {
    const double dx = z[1], th = z[2], w = z[3];
    return 0.5 * (p.M + p.m) * dx * dx + p.m * p.l * dx * w * std::cos(th) +
           0.5 * (p.I + p.m * p.l * p.l) * w * w - p.m * p.g * p.l * std::cos(th);
}

}  // namespace adctl
