#pragma once

#include "gridstab/common.hpp"
#include "gridstab/filters.hpp"

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace gridstab {

/// Exponential charging-station load: P = p0 * (a*(V/V0)^alpha + b).
struct EvExponentialParams {
    Real a = 0.06;
    Real b = 0.94;
    Real alpha = -1.0;  // must be <= -1
    Real p0 = 1.0;      // pu rated power
    Real v0 = 1.0;      // pu reference voltage
};

inline Real ev_power_exponential(Real v, const EvExponentialParams& p) {
    if (v <= 0.0)
        throw SimulationError("EV load evaluated at non-positive voltage (collapse)");
    return p.p0 * (p.a * std::pow(v / p.v0, p.alpha) + p.b);
}

/// Voltage-exponent load passed through a lead-lag: steady output at
/// constant v is p0 * (v/v0)^n_p.
struct DynamicLoadLag {
    Real n_p = 1.0;
    Real t_p = 0.05;       // numerator time constant, s
    Real t_s = 0.5;        // denominator time constant, s
    Real v0 = 1.0;
    Real lag_state = 1.0;  // internal first-order state
    Real prev_input = 1.0;

    void reset(Real v) {
        const Real u = std::pow(v / v0, n_p);
        lag_state = u;
        prev_input = u;
    }
};

/// Advance the dynamic load one step of dt and return the new power.
inline std::pair<Real, DynamicLoadLag> ev_dynamic_response(Real v, Real dt,
                                                           const DynamicLoadLag& lag,
                                                           Real p0) {
    if (dt <= 0.0) throw ValidationError("dt must be positive");
    if (lag.t_s <= 0.0) throw ValidationError("lag time constant t_s must be positive");
    const Real u = std::pow(v / lag.v0, lag.n_p);
    const LeadLag f{lag.t_p, lag.t_s};
    DynamicLoadLag out = lag;
    out.lag_state = f.advance(lag.lag_state, lag.prev_input, u, dt);
    out.prev_input = u;
    return {p0 * f.output(out.lag_state, u), out};
}

/// Headroom for reactive support at active loading p_now, capped so the
/// station power factor never drops below pf_min while injecting.
inline Real reactive_capability(Real p_now, Real s_rated, Real pf_min = 0.95) {
    const Real q_thermal = std::sqrt(std::max(0.0, s_rated * s_rated - p_now * p_now));
    const Real q_pf = p_now * std::tan(std::acos(pf_min));
    return std::min(q_thermal, q_pf);
}

/// Step-scheduled demand at fixed power factor: P = schedule(t) * p_rated,
/// Q = P * tan(acos(pf)).
inline std::pair<Real, Real> pq_step_control(Real p_rated, Real t,
                                             const std::function<Real(Real)>& schedule,
                                             Real pf = 0.95) {
    const Real p = schedule(t) * p_rated;
    return {p, p * std::tan(std::acos(pf))};
}

enum class EvVariant { ChargingModule, DynamicPqControl, ExponentialOnly };

inline std::string to_string(EvVariant v) {
    switch (v) {
        case EvVariant::ChargingModule: return "charging_module";
        case EvVariant::DynamicPqControl: return "dynamic_pq_control";
        default: return "exponential_only";
    }
}

inline EvVariant ev_variant_from_string(const std::string& s) {
    if (s == "charging_module" || s == "first") return EvVariant::ChargingModule;
    if (s == "dynamic_pq_control" || s == "second") return EvVariant::DynamicPqControl;
    if (s == "exponential_only" || s == "third") return EvVariant::ExponentialOnly;
    throw ParseError("unknown EV variant '" + s + "'");
}

struct EvStation {
    EvVariant variant = EvVariant::ChargingModule;
    int bus = 0;               // bus the station sits on (spur leaf)
    Real r_lead = 0.05;        // ohms, lead resistance
    Real rated_kv = 5.0;
    Real s_rated_kva = 10500.0;
    Real soc = 0.5;
    Real soc_min = 0.10;
    Real soc_max = 0.90;
    Real efficiency = 0.96;
    Real pf_min = 0.95;
    Real capacity_kwh = 100.0;
    Real switch_time_s = 0.0;  // when the station load connects
    bool active = true;
    EvExponentialParams exp_params{};
    DynamicLoadLag lag{};

    Real p_rated_kw() const { return pf_min * s_rated_kva; }
    Real p_rated_pu(Real s_base_mva) const { return p_rated_kw() / 1000.0 / s_base_mva; }
    Real s_rated_pu(Real s_base_mva) const { return s_rated_kva / 1000.0 / s_base_mva; }
};

/// One step of battery energy integration. Charging applies efficiency on
/// the way in, discharging on the way out; SoC is clamped to its limits and
/// power in the blocked direction is forced to zero at a limit.
struct SocUpdateResult {
    EvStation station;
    Real applied_kw = 0.0;
};

inline SocUpdateResult soc_update(const EvStation& st, Real p_charge_kw, Real dt_s) {
    if (dt_s < 0.0) throw ValidationError("dt must be >= 0");
    SocUpdateResult r{st, p_charge_kw};
    if (dt_s == 0.0) {
        r.applied_kw = 0.0;
        return r;
    }
    if (p_charge_kw > 0.0 && st.soc >= st.soc_max) {
        r.applied_kw = 0.0;
        return r;
    }
    if (p_charge_kw < 0.0 && st.soc <= st.soc_min) {
        r.applied_kw = 0.0;
        return r;
    }
    const Real hours = dt_s / 3600.0;
    Real d_soc;
    if (p_charge_kw >= 0.0)
        d_soc = st.efficiency * p_charge_kw * hours / st.capacity_kwh;
    else
        d_soc = p_charge_kw * hours / (st.efficiency * st.capacity_kwh);
    r.station.soc = std::clamp(st.soc + d_soc, st.soc_min, st.soc_max);
    return r;
}

struct EvParamCheck {
    std::string name;
    Real observed = 0.0;
    Real lo = 0.0;
    Real hi = 0.0;
    bool pass = false;
};

struct EvParamReport {
    std::vector<EvParamCheck> checks;
    bool all_pass() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }
};

/// Check the load-model parameter constraints, report-only.
inline EvParamReport validate_ev_params(const EvStation& st) {
    EvParamReport rep;
    const auto& p = st.exp_params;
    rep.checks.push_back({"alpha <= -1", p.alpha, -1e30, -1.0, p.alpha <= -1.0});
    rep.checks.push_back({"0.05 <= a <= 0.07", p.a, 0.05, 0.07, p.a >= 0.05 && p.a <= 0.07});
    rep.checks.push_back({"0.93 <= b <= 0.95", p.b, 0.93, 0.95, p.b >= 0.93 && p.b <= 0.95});
    rep.checks.push_back({"0.01 ohm <= R_L <= 0.09 ohm", st.r_lead, 0.01, 0.09,
                          st.r_lead >= 0.01 && st.r_lead <= 0.09});
    return rep;
}

/// Steady-state station demand at voltage v, pu on the system base.
/// Positive P/Q is consumption; the charging-module variant injects its
/// reactive headroom (negative Q).
inline std::pair<Real, Real> ev_steady_injection(const EvStation& st, Real v,
                                                 Real s_base_mva) {
    if (!st.active) return {0.0, 0.0};
    const Real p_rated = st.p_rated_pu(s_base_mva);
    const Real tan_phi = std::tan(std::acos(st.pf_min));
    switch (st.variant) {
        case EvVariant::ChargingModule: {
            const Real p = (st.soc < st.soc_max) ? p_rated : 0.0;
            return {p, -reactive_capability(p, st.s_rated_pu(s_base_mva), st.pf_min)};
        }
        case EvVariant::DynamicPqControl: {
            const Real p = p_rated * std::pow(v / st.lag.v0, st.lag.n_p);
            return {p, p * tan_phi};
        }
        default: {
            EvExponentialParams ep = st.exp_params;
            ep.p0 = p_rated;
            const Real p = ev_power_exponential(v, ep);
            return {p, p * tan_phi};
        }
    }
}

} // namespace gridstab
