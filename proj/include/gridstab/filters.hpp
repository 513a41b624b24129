#pragma once

#include "gridstab/common.hpp"

namespace gridstab {

// First-order control blocks discretized by the trapezoidal rule. All are
// pure: advance() maps (state, input at both step ends) to the new state,
// so callers can re-evaluate a step inside corrector iterations without
// accumulating.

/// Lead-lag (1 + s*t_num) / (1 + s*t_den). State is the internal lag x with
/// output y = (t_num/t_den)*u + (1 - t_num/t_den)*x. Identity when
/// t_num == t_den.
struct LeadLag {
    Real t_num = 0.0;
    Real t_den = 1.0;

    Real advance(Real x, Real u_prev, Real u_next, Real dt) const {
        const Real a = dt / (2.0 * t_den);
        return (x * (1.0 - a) + a * (u_prev + u_next)) / (1.0 + a);
    }

    Real output(Real x, Real u) const {
        const Real k = t_num / t_den;
        return k * u + (1.0 - k) * x;
    }
};

/// Washout s*t_w / (1 + s*t_w). State is the low-pass x of the input;
/// output y = u - x, which rejects any DC component.
struct Washout {
    Real t_w = 1.0;

    Real advance(Real x, Real u_prev, Real u_next, Real dt) const {
        const Real a = dt / (2.0 * t_w);
        return (x * (1.0 - a) + a * (u_prev + u_next)) / (1.0 + a);
    }

    Real output(Real x, Real u) const { return u - x; }
};

} // namespace gridstab
