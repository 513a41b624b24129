#pragma once

#include "gridstab/network.hpp"

#include <Eigen/Dense>

#include <cstdio>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace gridstab {

/// Bus admittance matrix, indexed by bus position in Network::buses.
/// Dense storage: the bundled cases stay well under 100 buses.
struct Ybus {
    Eigen::MatrixXcd y;

    int dimension() const { return static_cast<int>(y.rows()); }
    Complex operator()(int i, int j) const { return y(i, j); }
};

/// Y[i][j] = -y_ij for each branch; Y[i][i] = sum of incident series
/// admittances plus half line charging per branch end.
inline Ybus build_ybus(const Network& net) {
    const int n = static_cast<int>(net.buses.size());
    Ybus yb;
    yb.y = Eigen::MatrixXcd::Zero(n, n);
    for (const auto& br : net.branches) {
        const int i = net.bus_index(br.from_bus);
        const int j = net.bus_index(br.to_bus);
        const Complex y_series = 1.0 / Complex(br.r, br.x);
        const Complex y_sh(0.0, br.b_shunt / 2.0);
        yb.y(i, i) += y_series + y_sh;
        yb.y(j, j) += y_series + y_sh;
        yb.y(i, j) -= y_series;
        yb.y(j, i) -= y_series;
    }
    for (int i = 0; i < n; ++i) {
        bool isolated = true;
        for (int j = 0; j < n && isolated; ++j)
            if (j != i && yb.y(i, j) != Complex(0.0, 0.0)) isolated = false;
        if (isolated)
            throw ValidationError("isolated bus " + std::to_string(net.buses[static_cast<size_t>(i)].id));
    }
    return yb;
}

/// A voltage-dependent load hanging on one bus: pq(v) returns the consumed
/// (P, Q) in pu at voltage v. Used for EV station models in steady state.
struct VoltageLoad {
    int bus = 0;
    std::function<std::pair<Real, Real>(Real)> pq;
};

/// Flows at both ends of one branch, pu. p_send/q_send enter the line at
/// the from end; p_recv/q_recv leave it into the to bus, so
/// p_send - p_recv is the series active loss.
struct BranchFlow {
    Real p_send = 0.0;
    Real q_send = 0.0;
    Real p_recv = 0.0;
    Real q_recv = 0.0;
};

struct PowerFlowSolution {
    std::vector<Real> v_mag;    // pu, by bus position
    std::vector<Real> v_ang;    // rad
    std::vector<Real> p_inj;    // pu net injection
    std::vector<Real> q_inj;
    std::vector<BranchFlow> branch_flows;
    int iterations = 0;
    Real max_mismatch = 0.0;
    std::vector<Real> mismatch_history;

    Complex voltage(int idx) const {
        return std::polar(v_mag[static_cast<size_t>(idx)], v_ang[static_cast<size_t>(idx)]);
    }
};

struct PowerFlowOptions {
    Real tol = 1e-6;
    int max_iter = 30;
    bool flat_start = true;
    bool enforce_q_limits = false;
};

namespace detail {

inline std::vector<BranchFlow> compute_branch_flows(const Network& net,
                                                    const std::vector<Complex>& v) {
    std::vector<BranchFlow> flows;
    flows.reserve(net.branches.size());
    for (const auto& br : net.branches) {
        const int i = net.bus_index(br.from_bus);
        const int j = net.bus_index(br.to_bus);
        const Complex y_series = 1.0 / Complex(br.r, br.x);
        const Complex y_sh(0.0, br.b_shunt / 2.0);
        const Complex vf = v[static_cast<size_t>(i)];
        const Complex vt = v[static_cast<size_t>(j)];
        const Complex sf = vf * std::conj((vf - vt) * y_series + vf * y_sh);
        const Complex st = vt * std::conj((vt - vf) * y_series + vt * y_sh);
        BranchFlow f;
        f.p_send = sf.real();
        f.q_send = sf.imag();
        f.p_recv = -st.real();
        f.q_recv = -st.imag();
        flows.push_back(f);
    }
    return flows;
}

} // namespace detail

/// Full Newton-Raphson power flow in polar form. PV buses hold their
/// setpoint voltage unless enforce_q_limits converts them to PQ at a
/// reactive limit. Extra voltage-dependent loads are folded into the
/// mismatch and Jacobian each iteration.
/// Throws ConvergenceError when the mismatch cannot be brought below tol,
/// which callers treat as an infeasible operating point.
inline PowerFlowSolution solve_power_flow(const Network& net,
                                          const PowerFlowOptions& opts = {},
                                          const std::vector<VoltageLoad>& vloads = {},
                                          const PowerFlowSolution* warm = nullptr) {
    if (opts.tol <= 0.0) throw ValidationError("power flow tolerance must be positive");
    const int n = static_cast<int>(net.buses.size());
    const Ybus yb = build_ybus(net);
    const Eigen::MatrixXd g = yb.y.real();
    const Eigen::MatrixXd b = yb.y.imag();

    // Bus typing by position. PV buses may be demoted to PQ under q limits.
    enum class T { Slack, PV, PQ };
    std::vector<T> type(static_cast<size_t>(n), T::PQ);
    std::vector<Real> p_gen(static_cast<size_t>(n), 0.0);
    std::vector<Real> q_gen(static_cast<size_t>(n), 0.0);  // fixed Q for demoted buses
    std::vector<Real> v_sched(static_cast<size_t>(n), 1.0);
    for (int i = 0; i < n; ++i) {
        const Bus& bus = net.buses[static_cast<size_t>(i)];
        if (bus.kind == BusKind::Slack) type[static_cast<size_t>(i)] = T::Slack;
        else if (bus.kind == BusKind::PV) type[static_cast<size_t>(i)] = T::PV;
    }
    for (const auto& gen : net.generators) {
        const int i = net.bus_index(gen.bus);
        p_gen[static_cast<size_t>(i)] += gen.p_set;
        v_sched[static_cast<size_t>(i)] = gen.v_set;
    }

    // Per-bus voltage-dependent load evaluation and dP/dV, dQ/dV.
    std::vector<std::vector<const VoltageLoad*>> vl_at(static_cast<size_t>(n));
    for (const auto& vl : vloads) vl_at[static_cast<size_t>(net.bus_index(vl.bus))].push_back(&vl);
    auto vload_pq = [&](int i, Real v) {
        Real p = 0.0, q = 0.0;
        for (const auto* vl : vl_at[static_cast<size_t>(i)]) {
            auto [pp, qq] = vl->pq(v);
            p += pp;
            q += qq;
        }
        return std::pair<Real, Real>(p, q);
    };
    auto vload_dv = [&](int i, Real v) {
        if (vl_at[static_cast<size_t>(i)].empty()) return std::pair<Real, Real>(0.0, 0.0);
        const Real h = 1e-6;
        auto [p1, q1] = vload_pq(i, v + h);
        auto [p0, q0] = vload_pq(i, v - h);
        return std::pair<Real, Real>((p1 - p0) / (2 * h), (q1 - q0) / (2 * h));
    };

    // State.
    std::vector<Real> vm(static_cast<size_t>(n)), va(static_cast<size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        const size_t si = static_cast<size_t>(i);
        if (warm) {
            vm[si] = warm->v_mag[si];
            va[si] = warm->v_ang[si];
        } else if (opts.flat_start) {
            vm[si] = (type[si] == T::PQ) ? 1.0 : v_sched[si];
        } else {
            vm[si] = net.buses[si].v_mag;
            va[si] = net.buses[si].v_ang;
        }
        if (type[si] != T::PQ) vm[si] = v_sched[si];
    }
    // Slack angle is the reference.
    for (int i = 0; i < n; ++i)
        if (type[static_cast<size_t>(i)] == T::Slack) va[static_cast<size_t>(i)] = 0.0;

    auto calc_injections = [&](std::vector<Real>& p, std::vector<Real>& q) {
        for (int i = 0; i < n; ++i) {
            Real pi = 0.0, qi = 0.0;
            const size_t si = static_cast<size_t>(i);
            for (int j = 0; j < n; ++j) {
                const size_t sj = static_cast<size_t>(j);
                const Real th = va[si] - va[sj];
                const Real c = std::cos(th), s = std::sin(th);
                pi += vm[sj] * (g(i, j) * c + b(i, j) * s);
                qi += vm[sj] * (g(i, j) * s - b(i, j) * c);
            }
            p[si] = vm[si] * pi;
            q[si] = vm[si] * qi;
        }
    };

    PowerFlowSolution sol;
    std::vector<Real> p_calc(static_cast<size_t>(n)), q_calc(static_cast<size_t>(n));

    for (int outer = 0;; ++outer) {
        bool retyped = false;
        for (int iter = 1; iter <= opts.max_iter; ++iter) {
            calc_injections(p_calc, q_calc);

            // Mismatch vector ordering: dP for all non-slack, then dQ for PQ.
            std::vector<int> p_rows, q_rows;
            for (int i = 0; i < n; ++i) {
                if (type[static_cast<size_t>(i)] != T::Slack) p_rows.push_back(i);
                if (type[static_cast<size_t>(i)] == T::PQ) q_rows.push_back(i);
            }
            const int np = static_cast<int>(p_rows.size());
            const int nq = static_cast<int>(q_rows.size());
            Eigen::VectorXd mis(np + nq);
            Real max_mis = 0.0;
            for (int k = 0; k < np; ++k) {
                const int i = p_rows[static_cast<size_t>(k)];
                const size_t si = static_cast<size_t>(i);
                const Real p_spec = p_gen[si] - net.buses[si].p_load - vload_pq(i, vm[si]).first;
                mis(k) = p_spec - p_calc[si];
                max_mis = std::max(max_mis, std::abs(mis(k)));
            }
            for (int k = 0; k < nq; ++k) {
                const int i = q_rows[static_cast<size_t>(k)];
                const size_t si = static_cast<size_t>(i);
                Real q_spec = q_gen[si] - net.buses[si].q_load - vload_pq(i, vm[si]).second;
                mis(np + k) = q_spec - q_calc[si];
                max_mis = std::max(max_mis, std::abs(mis(np + k)));
            }
            sol.mismatch_history.push_back(max_mis);
            sol.iterations += 1;

            if (!std::isfinite(max_mis) || max_mis > 1e8)
                throw ConvergenceError("power flow diverged, mismatch " +
                                       std::to_string(max_mis));
            if (max_mis <= opts.tol) {
                sol.max_mismatch = max_mis;
                goto converged;
            }
            if (iter == opts.max_iter)
                throw ConvergenceError("power flow did not converge in " +
                                       std::to_string(opts.max_iter) +
                                       " iterations, mismatch " + std::to_string(max_mis));

            // Jacobian: [H N; M L] with angle columns for non-slack and
            // magnitude columns for PQ. Voltage-dependent load derivatives
            // land on the diagonal of the magnitude columns.
            Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(np + nq, np + nq);
            for (int r = 0; r < np; ++r) {
                const int i = p_rows[static_cast<size_t>(r)];
                const size_t si = static_cast<size_t>(i);
                for (int c = 0; c < np; ++c) {
                    const int j = p_rows[static_cast<size_t>(c)];
                    const size_t sj = static_cast<size_t>(j);
                    const Real th = va[si] - va[sj];
                    if (i == j)
                        jac(r, c) = -q_calc[si] - b(i, i) * vm[si] * vm[si];
                    else
                        jac(r, c) = vm[si] * vm[sj] *
                                    (g(i, j) * std::sin(th) - b(i, j) * std::cos(th));
                }
                for (int c = 0; c < nq; ++c) {
                    const int j = q_rows[static_cast<size_t>(c)];
                    const size_t sj = static_cast<size_t>(j);
                    const Real th = va[si] - va[sj];
                    if (i == j)
                        jac(r, np + c) = p_calc[si] / vm[si] + g(i, i) * vm[si] +
                                         vload_dv(i, vm[si]).first;
                    else
                        jac(r, np + c) = vm[si] * (g(i, j) * std::cos(th) +
                                                   b(i, j) * std::sin(th));
                }
            }
            for (int r = 0; r < nq; ++r) {
                const int i = q_rows[static_cast<size_t>(r)];
                const size_t si = static_cast<size_t>(i);
                for (int c = 0; c < np; ++c) {
                    const int j = p_rows[static_cast<size_t>(c)];
                    const size_t sj = static_cast<size_t>(j);
                    const Real th = va[si] - va[sj];
                    if (i == j)
                        jac(np + r, c) = p_calc[si] - g(i, i) * vm[si] * vm[si];
                    else
                        jac(np + r, c) = -vm[si] * vm[sj] *
                                         (g(i, j) * std::cos(th) + b(i, j) * std::sin(th));
                }
                for (int c = 0; c < nq; ++c) {
                    const int j = q_rows[static_cast<size_t>(c)];
                    const size_t sj = static_cast<size_t>(j);
                    const Real th = va[si] - va[sj];
                    if (i == j)
                        jac(np + r, np + c) = q_calc[si] / vm[si] - b(i, i) * vm[si] +
                                              vload_dv(i, vm[si]).second;
                    else
                        jac(np + r, np + c) = vm[si] * (g(i, j) * std::sin(th) -
                                                        b(i, j) * std::cos(th));
                }
            }

            Eigen::PartialPivLU<Eigen::MatrixXd> lu(jac);
            Eigen::VectorXd dx = lu.solve(mis);
            if (!dx.allFinite())
                throw ConvergenceError("power flow Jacobian is singular");
            for (int k = 0; k < np; ++k)
                va[static_cast<size_t>(p_rows[static_cast<size_t>(k)])] += dx(k);
            for (int k = 0; k < nq; ++k)
                vm[static_cast<size_t>(q_rows[static_cast<size_t>(k)])] += dx(np + k);
        }

    converged:
        if (!opts.enforce_q_limits) break;
        // Demote PV buses whose generator reactive output violates limits.
        calc_injections(p_calc, q_calc);
        for (const auto& gen : net.generators) {
            const int i = net.bus_index(gen.bus);
            const size_t si = static_cast<size_t>(i);
            if (type[si] != T::PV) continue;
            const Real q_out = q_calc[si] + net.buses[si].q_load + vload_pq(i, vm[si]).second;
            if (q_out > gen.q_max || q_out < gen.q_min) {
                type[si] = T::PQ;
                q_gen[si] = std::clamp(q_out, gen.q_min, gen.q_max);
                retyped = true;
            }
        }
        if (!retyped) break;
        if (outer > static_cast<int>(net.generators.size()))
            throw ConvergenceError("reactive-limit switching did not settle");
    }

    calc_injections(p_calc, q_calc);
    sol.v_mag = vm;
    sol.v_ang = va;
    sol.p_inj = p_calc;
    sol.q_inj = q_calc;
    std::vector<Complex> v(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
        v[static_cast<size_t>(i)] = std::polar(vm[static_cast<size_t>(i)], va[static_cast<size_t>(i)]);
    sol.branch_flows = detail::compute_branch_flows(net, v);
    return sol;
}

namespace detail {

inline std::string fmt_g(Real x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", x);
    return buf;
}

} // namespace detail

inline std::string bus_csv(const Network& net, const PowerFlowSolution& sol) {
    std::string out = "bus,v_mag_pu,v_ang_deg,p_inj_mw,q_inj_mvar\n";
    for (size_t i = 0; i < net.buses.size(); ++i) {
        out += std::to_string(net.buses[i].id) + ',' + detail::fmt_g(sol.v_mag[i]) + ',' +
               detail::fmt_g(rad2deg(sol.v_ang[i])) + ',' +
               detail::fmt_g(pu_to_mw(sol.p_inj[i], net.s_base)) + ',' +
               detail::fmt_g(pu_to_mw(sol.q_inj[i], net.s_base)) + '\n';
    }
    return out;
}

inline std::string branch_csv(const Network& net, const PowerFlowSolution& sol) {
    std::string out = "from,to,p_send,q_send,p_recv,q_recv\n";
    for (size_t k = 0; k < net.branches.size(); ++k) {
        const auto& f = sol.branch_flows[k];
        out += std::to_string(net.branches[k].from_bus) + ',' +
               std::to_string(net.branches[k].to_bus) + ',' +
               detail::fmt_g(pu_to_mw(f.p_send, net.s_base)) + ',' +
               detail::fmt_g(pu_to_mw(f.q_send, net.s_base)) + ',' +
               detail::fmt_g(pu_to_mw(f.p_recv, net.s_base)) + ',' +
               detail::fmt_g(pu_to_mw(f.q_recv, net.s_base)) + '\n';
    }
    return out;
}

} // namespace gridstab
