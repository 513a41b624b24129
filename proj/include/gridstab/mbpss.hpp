#pragma once

#include "gridstab/common.hpp"
#include "gridstab/filters.hpp"

#include <algorithm>
#include <array>
#include <complex>

namespace gridstab {

/// One stabilizer band: gain, washout, two lead-lag stages, output limit.
struct BandParams {
    Real k = 1.0;
    Real t_w = 1.0;   // washout
    Real t_1 = 1.0;   // first lead-lag numerator
    Real t_2 = 1.0;   // first lead-lag denominator
    Real t_3 = 1.0;   // second lead-lag numerator
    Real t_4 = 1.0;   // second lead-lag denominator
    Real limit = 0.15;

    /// Band response K * sTw/(1+sTw) * (1+sT1)/(1+sT2) * (1+sT3)/(1+sT4)
    /// evaluated at s = j*2*pi*f.
    Complex response(Real f_hz) const {
        const Complex s(0.0, 2.0 * kPi * f_hz);
        return k * (s * t_w / (1.0 + s * t_w)) * ((1.0 + s * t_1) / (1.0 + s * t_2)) *
               ((1.0 + s * t_3) / (1.0 + s * t_4));
    }
};

/// Parameters for the three bands plus the summed-output limit.
struct MbPssParams {
    BandParams low;   // centered 0.2 Hz
    BandParams mid;   // centered 1.25 Hz
    BandParams high;  // centered 12 Hz
    Real global_limit = 0.15;

    /// Symmetric tuning from band center frequencies. With T_c = 1/(2*pi*f):
    /// the washout zero of the first stage cancels the washout pole
    /// (T1 = Tw), both stage denominators sit at the center (T2 = T4 = T_c),
    /// and the spare numerator T3 = lead_ratio * T_c sets the phase lead at
    /// the center. Tw is scaled so the band gain at its center equals K.
    static BandParams tuned_band(Real f_center_hz, Real k, Real limit,
                                 Real lead_ratio = 0.5) {
        const Real t_c = 1.0 / (2.0 * kPi * f_center_hz);
        BandParams b;
        b.k = k;
        b.t_w = 2.0 * t_c / std::sqrt(1.0 + lead_ratio * lead_ratio);
        b.t_1 = b.t_w;
        b.t_2 = t_c;
        b.t_3 = lead_ratio * t_c;
        b.t_4 = t_c;
        b.limit = limit;
        return b;
    }

    static MbPssParams simplified(Real k_l = 30.0, Real k_i = 40.0, Real k_h = 160.0,
                                  Real f_l = 0.2, Real f_i = 1.25, Real f_h = 12.0,
                                  Real lead_ratio = 0.5) {
        MbPssParams p;
        p.low = tuned_band(f_l, k_l, 0.075, lead_ratio);
        p.mid = tuned_band(f_i, k_i, 0.15, lead_ratio);
        p.high = tuned_band(f_h, k_h, 0.15, lead_ratio);
        p.global_limit = 0.15;
        return p;
    }

    Complex response(Real f_hz) const {
        return low.response(f_hz) + mid.response(f_hz) + high.response(f_hz);
    }
};

struct BandState {
    Real wash_x = 0.0;
    Real ll1_x = 0.0;
    Real ll2_x = 0.0;
};

struct MbPssState {
    BandState low, mid, high;
    Real prev_input = 0.0;
};

namespace detail {

inline Real band_output(const BandParams& p, const BandState& s, Real u) {
    const Washout w{p.t_w};
    const LeadLag l1{p.t_1, p.t_2};
    const LeadLag l2{p.t_3, p.t_4};
    const Real y_w = w.output(s.wash_x, u);
    const Real y_1 = l1.output(s.ll1_x, y_w);
    const Real y_2 = l2.output(s.ll2_x, y_1);
    return std::clamp(p.k * y_2, -p.limit, p.limit);
}

inline BandState band_advance(const BandParams& p, const BandState& s, Real u0, Real u1,
                              Real dt) {
    const Washout w{p.t_w};
    const LeadLag l1{p.t_1, p.t_2};
    const LeadLag l2{p.t_3, p.t_4};
    BandState n;
    const Real y_w0 = w.output(s.wash_x, u0);
    n.wash_x = w.advance(s.wash_x, u0, u1, dt);
    const Real y_w1 = w.output(n.wash_x, u1);
    const Real y_10 = l1.output(s.ll1_x, y_w0);
    n.ll1_x = l1.advance(s.ll1_x, y_w0, y_w1, dt);
    const Real y_11 = l1.output(n.ll1_x, y_w1);
    n.ll2_x = l2.advance(s.ll2_x, y_10, y_11, dt);
    return n;
}

} // namespace detail

/// Stabilizer output for the current state without advancing it.
inline Real mbpss_eval(const MbPssParams& p, const MbPssState& s, Real d_omega) {
    const Real sum = detail::band_output(p.low, s.low, d_omega) +
                     detail::band_output(p.mid, s.mid, d_omega) +
                     detail::band_output(p.high, s.high, d_omega);
    return std::clamp(sum, -p.global_limit, p.global_limit);
}

/// Advance all bands one step with endpoint inputs (u0, u1). Pure: callers
/// may retry a step from the same starting state.
inline MbPssState mbpss_advance(const MbPssParams& p, const MbPssState& s, Real u0,
                                Real u1, Real dt) {
    MbPssState n;
    n.low = detail::band_advance(p.low, s.low, u0, u1, dt);
    n.mid = detail::band_advance(p.mid, s.mid, u0, u1, dt);
    n.high = detail::band_advance(p.high, s.high, u0, u1, dt);
    n.prev_input = u1;
    return n;
}

/// One filter step driven by the stored previous input.
inline std::pair<Real, MbPssState> mbpss_output(Real d_omega, const MbPssState& s,
                                                Real dt, const MbPssParams& p) {
    if (dt <= 0.0) throw ValidationError("dt must be positive");
    MbPssState n = mbpss_advance(p, s, s.prev_input, d_omega, dt);
    return {mbpss_eval(p, n, d_omega), n};
}

} // namespace gridstab
