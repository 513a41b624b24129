#pragma once

#include "gridstab/powerflow.hpp"

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

namespace gridstab {

/// Which end's voltage goes in the index denominators. The printed index
/// forms use the receiving end; the sending-end option exists for
/// cross-checks against the wider index literature.
enum class VoltageEnd { Receiving, Sending };

/// Fast voltage stability index 4*Z^2*Q / (V^2*X) for one line.
inline Real fvsi_value(Real z_mag, Real x, Real q_recv, Real v) {
    if (x == 0.0) throw ValidationError("FVSI undefined for zero-reactance branch");
    return 4.0 * z_mag * z_mag * q_recv / (v * v * x);
}

/// Line stability index (R*P + X*Q) / (0.25*V^2) for one line.
inline Real nlsi_value(Real r, Real x, Real p_recv, Real q_recv, Real v) {
    return (r * p_recv + x * q_recv) / (0.25 * v * v);
}

namespace detail {

struct EndFlows {
    Real p_recv = 0.0;  // power delivered into the receiving bus
    Real q_recv = 0.0;
    Real v_recv = 0.0;
    Real v_send = 0.0;
};

/// Orient a branch by actual power direction: the receiving end is the one
/// power is delivered into.
inline EndFlows receiving_end(const Network& net, const PowerFlowSolution& sol,
                              size_t branch_idx) {
    const Branch& br = net.branches[branch_idx];
    const BranchFlow& f = sol.branch_flows[branch_idx];
    const Real v_from = sol.v_mag[static_cast<size_t>(net.bus_index(br.from_bus))];
    const Real v_to = sol.v_mag[static_cast<size_t>(net.bus_index(br.to_bus))];
    EndFlows e;
    if (f.p_recv >= 0.0) {
        e.p_recv = f.p_recv;
        e.q_recv = f.q_recv;
        e.v_recv = v_to;
        e.v_send = v_from;
    } else {
        e.p_recv = -f.p_send;
        e.q_recv = -f.q_send;
        e.v_recv = v_from;
        e.v_send = v_to;
    }
    return e;
}

} // namespace detail

inline Real fvsi(const Network& net, const PowerFlowSolution& sol, size_t branch_idx,
                 VoltageEnd end = VoltageEnd::Receiving) {
    const Branch& br = net.branches[branch_idx];
    const auto e = detail::receiving_end(net, sol, branch_idx);
    const Real v = (end == VoltageEnd::Receiving) ? e.v_recv : e.v_send;
    return fvsi_value(br.z_mag, br.x, e.q_recv, v);
}

inline Real nlsi(const Network& net, const PowerFlowSolution& sol, size_t branch_idx,
                 VoltageEnd end = VoltageEnd::Receiving) {
    const Branch& br = net.branches[branch_idx];
    const auto e = detail::receiving_end(net, sol, branch_idx);
    const Real v = (end == VoltageEnd::Receiving) ? e.v_recv : e.v_send;
    return nlsi_value(br.r, br.x, e.p_recv, e.q_recv, v);
}

struct LineIndexReport {
    int from = 0;
    int to = 0;
    Real fvsi = 0.0;
    Real nlsi = 0.0;
    Real q_receiving = 0.0;
    Real at_scale = 1.0;
};

/// All branches ranked by max(fvsi, nlsi) descending, ties by id pair.
/// Negative raw values (reactive flow out of the receiving end) floor at 0.
inline std::vector<LineIndexReport> rank_weak_lines(const Network& net,
                                                    const PowerFlowSolution& sol,
                                                    VoltageEnd end = VoltageEnd::Receiving,
                                                    Real at_scale = 1.0) {
    std::vector<LineIndexReport> out;
    out.reserve(net.branches.size());
    for (size_t k = 0; k < net.branches.size(); ++k) {
        LineIndexReport rep;
        rep.from = net.branches[k].from_bus;
        rep.to = net.branches[k].to_bus;
        rep.fvsi = std::max(0.0, fvsi(net, sol, k, end));
        rep.nlsi = std::max(0.0, nlsi(net, sol, k, end));
        rep.q_receiving = detail::receiving_end(net, sol, k).q_recv;
        rep.at_scale = at_scale;
        out.push_back(rep);
    }
    std::sort(out.begin(), out.end(), [](const LineIndexReport& a, const LineIndexReport& b) {
        const Real ma = std::max(a.fvsi, a.nlsi);
        const Real mb = std::max(b.fvsi, b.nlsi);
        if (ma != mb) return ma > mb;
        if (a.from != b.from) return a.from < b.from;
        return a.to < b.to;
    });
    return out;
}

struct PvCurvePoint {
    Real load_scale = 1.0;
    Real p_load_mw = 0.0;
    Real v_mag = 1.0;
};

struct PvCurve {
    int bus = 0;
    std::vector<PvCurvePoint> points;  // increasing load_scale
    Real nose_scale = 1.0;
    Real nose_p_mw = 0.0;
    Real nose_v = 1.0;
};

struct PvCurveOptions {
    Real step = 0.02;
    bool pf_held = true;       // scale Q along with P
    Real scale_resolution = 1e-3;  // bisection stop width
    Real max_scale = 200.0;
    PowerFlowOptions pf_opts{};
};

/// Trace the load-voltage curve at one bus: step the bus load up, re-solving
/// each point with a warm start, then bisect the first non-convergent
/// interval down to scale_resolution. The nose is the last converged point.
inline PvCurve trace_pv_curve(const Network& net, int bus_id,
                              const PvCurveOptions& opts = {},
                              const std::vector<VoltageLoad>& vloads = {}) {
    if (opts.step <= 0.0) throw ValidationError("PV curve step must be positive");
    Network work = net;
    work.rebuild_index();
    const int bi = work.bus_index(bus_id);
    const Real p0 = work.bus(bus_id).p_load;
    const Real q0 = work.bus(bus_id).q_load;

    bool has_vload_here = false;
    for (const auto& vl : vloads)
        if (vl.bus == bus_id) has_vload_here = true;
    if (p0 == 0.0 && !has_vload_here)
        throw ValidationError("bus " + std::to_string(bus_id) +
                              " carries no load to scale");

    // Scale both the constant bus load and any voltage-dependent loads
    // sitting on the target bus.
    auto scaled_loads = [&](Real scale) {
        std::vector<VoltageLoad> out = vloads;
        for (auto& vl : out) {
            if (vl.bus != bus_id) continue;
            auto base = vl.pq;
            vl.pq = [base, scale](Real v) {
                auto [p, q] = base(v);
                return std::pair<Real, Real>(scale * p, scale * q);
            };
        }
        return out;
    };

    auto solve_at = [&](Real scale, const PowerFlowSolution* warm) {
        work.bus(bus_id).p_load = scale * p0;
        work.bus(bus_id).q_load = opts.pf_held ? scale * q0 : q0;
        return solve_power_flow(work, opts.pf_opts, scaled_loads(scale), warm);
    };

    PvCurve curve;
    curve.bus = bus_id;

    PowerFlowSolution last;
    try {
        last = solve_at(1.0, nullptr);
    } catch (const ConvergenceError&) {
        throw ConvergenceError("base case is infeasible at bus " + std::to_string(bus_id));
    }
    auto record = [&](Real scale, const PowerFlowSolution& s) {
        curve.points.push_back({scale, pu_to_mw(scale * p0, net.s_base),
                                s.v_mag[static_cast<size_t>(bi)]});
    };
    record(1.0, last);

    Real ok = 1.0;
    Real bad = -1.0;
    for (Real scale = 1.0 + opts.step; scale <= opts.max_scale; scale += opts.step) {
        try {
            PowerFlowSolution s = solve_at(scale, &last);
            record(scale, s);
            last = s;
            ok = scale;
        } catch (const ConvergenceError&) {
            bad = scale;
            break;
        }
    }
    if (bad > 0.0) {
        while (bad - ok > opts.scale_resolution) {
            const Real mid = 0.5 * (ok + bad);
            try {
                PowerFlowSolution s = solve_at(mid, &last);
                record(mid, s);
                last = s;
                ok = mid;
            } catch (const ConvergenceError&) {
                bad = mid;
            }
        }
    }
    std::sort(curve.points.begin(), curve.points.end(),
              [](const PvCurvePoint& a, const PvCurvePoint& b) {
                  return a.load_scale < b.load_scale;
              });
    const auto& nose = curve.points.back();
    curve.nose_scale = nose.load_scale;
    curve.nose_p_mw = nose.p_load_mw;
    curve.nose_v = nose.v_mag;
    return curve;
}

inline std::string pv_curve_csv(const PvCurve& c) {
    std::string out = "scale,p_mw,v_pu\n";
    for (const auto& p : c.points)
        out += detail::fmt_g(p.load_scale) + ',' + detail::fmt_g(p.p_load_mw) + ',' +
               detail::fmt_g(p.v_mag) + '\n';
    return out;
}

} // namespace gridstab
