#pragma once

#include "gridstab/evload.hpp"
#include "gridstab/mbpss.hpp"
#include "gridstab/network.hpp"
#include "gridstab/powerflow.hpp"
#include "gridstab/pvfarm.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

namespace gridstab {

enum class EventKind { SwitchInEv, SwitchOutEv, LoadStep };

struct Event {
    Real time = 0.0;
    EventKind kind = EventKind::LoadStep;
    int bus = 0;
    Real dp = 0.0;  // pu consumed, LoadStep only
    Real dq = 0.0;
};

struct EventSchedule {
    std::vector<Event> events;

    void validate(Real t_end) const {
        Real prev = -1e300;
        for (const auto& e : events) {
            if (e.time < 0.0) throw ValidationError("event before t=0");
            if (e.time <= prev) throw ValidationError("event times must be strictly increasing");
            if (e.time >= t_end)
                throw ValidationError("event at t=" + std::to_string(e.time) +
                                      " is outside the simulation horizon");
            prev = e.time;
        }
    }
};

struct AgcParams {
    Real k_i = 0.3;  // pu power per Hz per second of error
    std::vector<Real> participation;  // per generator; empty means equal
};

enum class MachineModel { OneAxis, Classical };

struct SimControls {
    bool pss_on = true;
    bool agc_on = true;
    MachineModel model = MachineModel::OneAxis;
    MbPssParams pss = MbPssParams::simplified();
};

struct MachineState {
    Real delta = 0.0;    // rotor angle, rad
    Real domega = 0.0;   // speed deviation, pu
    Real eq_t = 1.0;     // transient emf (one-axis) or fixed emf (classical)
    Real efd = 1.0;      // field voltage
    Real p_sv = 0.0;     // governor servo output
    Real p_m = 0.0;      // mechanical power
    MbPssState pss{};
};

struct DynamicState {
    std::vector<MachineState> machines;
    std::vector<DynamicLoadLag> station_lags;  // one per EV station
    std::vector<Real> station_soc;
    Real agc_z = 0.0;  // integral of area frequency error, pu power
    Real t = 0.0;
};

/// Time series from one scenario run. Frequencies in Hz; traces are stored
/// at the solver step (decimation happens at CSV emission).
struct SimTrace {
    std::vector<Real> t;
    std::vector<std::vector<Real>> gen_freq_hz;  // [gen][step]
    std::vector<std::vector<Real>> gen_u_pss;
    std::vector<std::vector<Real>> gen_p_e;
    bool collapsed = false;
    std::string failure;
};

/// Multi-machine simulator: one-axis generators with governor, turbine,
/// exciter, optional multi-band stabilizer and secondary frequency control,
/// over an algebraic network with constant-admittance static loads. EV
/// stations and PV farms stay as per-step current injections.
///
/// Integration is fixed-step trapezoidal: each step does a predictor then
/// corrector passes, re-solving the network at the step end until the state
/// update settles.
class DynamicSimulator {
public:
    DynamicSimulator(const Network& net, const PowerFlowSolution& sol0,
                     std::vector<EvStation> stations, std::vector<PvFarm> farms,
                     const SimControls& controls, const AgcParams& agc)
        : net_(net), controls_(controls), agc_(agc), stations_(std::move(stations)),
          farms_(std::move(farms)) {
        net_.rebuild_index();
        n_ = static_cast<int>(net_.buses.size());
        build_machines();
        build_network_matrices(sol0);
        init_from_power_flow(sol0);
    }

    int num_machines() const { return static_cast<int>(machines_.size()); }
    const DynamicState& state() const { return state_; }
    const std::vector<Complex>& bus_voltages() const { return v_; }
    const std::vector<EvStation>& stations() const { return stations_; }

    Real gen_freq_hz(int i) const {
        return net_.f_sys * (1.0 + state_.machines[static_cast<size_t>(i)].domega);
    }

    Real gen_u_pss(int i) const {
        const auto& m = state_.machines[static_cast<size_t>(i)];
        return controls_.pss_on ? mbpss_eval(controls_.pss, m.pss, m.domega) : 0.0;
    }

    Real gen_p_e(int i) const { return p_e_[static_cast<size_t>(i)]; }

    /// Electrical power delivered by machines and farms minus EV demand,
    /// against network consumption (constant-Z loads plus losses). Should
    /// vanish at every consistently solved step.
    Real power_imbalance() const {
        Real injected = 0.0;
        for (int i = 0; i < num_machines(); ++i) injected += p_e_[static_cast<size_t>(i)];
        for (size_t s = 0; s < farms_.size(); ++s) injected += farm_p_[s];
        for (size_t s = 0; s < stations_.size(); ++s) injected -= station_p_[s];
        for (const auto& ls : load_steps_) injected -= ls.dp;
        Real consumed = 0.0;
        Eigen::VectorXcd vv(n_);
        for (int k = 0; k < n_; ++k) vv(k) = v_[static_cast<size_t>(k)];
        Eigen::VectorXcd iy = y_net_ * vv;
        for (int k = 0; k < n_; ++k) consumed += (vv(k) * std::conj(iy(k))).real();
        return injected - consumed;
    }

    void apply_event(const Event& e) {
        switch (e.kind) {
            case EventKind::SwitchInEv:
            case EventKind::SwitchOutEv: {
                bool found = false;
                for (size_t s = 0; s < stations_.size(); ++s) {
                    if (stations_[s].bus != e.bus) continue;
                    stations_[s].active = (e.kind == EventKind::SwitchInEv);
                    if (stations_[s].active)
                        state_.station_lags[s].reset(std::abs(v_[static_cast<size_t>(
                            net_.bus_index(e.bus))]));
                    found = true;
                }
                if (!found)
                    throw ValidationError("event references no EV station at bus " +
                                          std::to_string(e.bus));
                break;
            }
            case EventKind::LoadStep:
                load_steps_.push_back(e);
                break;
        }
        // Re-solve the algebraic network so the post-event trajectory starts
        // from a consistent point.
        v_ = solve_network(state_, state_.t, v_);
        update_outputs(state_, v_);
    }

    void step(Real dt) {
        if (dt <= 0.0) throw ValidationError("dt must be positive");
        const DynamicState& x0 = state_;
        const Deriv f0 = derivatives(x0, v_, x0.t);

        // Predictor, then trapezoidal corrector passes.
        DynamicState x1 = advance(x0, f0, f0, dt, v_);
        std::vector<Complex> v1 = v_;
        for (int pass = 0; pass < 20; ++pass) {
            v1 = solve_network(x1, x0.t + dt, v1);
            const Deriv f1 = derivatives(x1, v1, x0.t + dt);
            DynamicState x_new = advance(x0, f0, f1, dt, v1);
            const Real diff = state_diff(x_new, x1);
            x1 = std::move(x_new);
            if (diff < 1e-12) break;
        }
        v1 = solve_network(x1, x0.t + dt, v1);
        x1.t = x0.t + dt;
        state_ = std::move(x1);
        v_ = v1;
        update_outputs(state_, v_);
    }

    /// Redraw irradiance for farms whose resample period elapsed; farms with
    /// resample_s <= 0 hold their first sample for the whole run. Returns
    /// true when any injection changed (the network is re-solved then).
    bool resample_farms_due(Real t) {
        bool changed = false;
        for (size_t s = 0; s < farms_.size(); ++s) {
            if (farms_[s].resample_s <= 0.0) continue;
            while (t + 1e-12 >= next_resample_[s]) {
                const Real g = sample_irradiance(farms_[s], farm_rng_[s]);
                auto [p, q] = pv_injection(farms_[s], g);
                farm_g_[s] = g;
                farm_p_[s] = p;
                farm_q_[s] = q;
                next_resample_[s] += farms_[s].resample_s;
                changed = true;
            }
        }
        if (changed) {
            v_ = solve_network(state_, t, v_);
            update_outputs(state_, v_);
        }
        return changed;
    }

    Real farm_irradiance(size_t s) const { return farm_g_[s]; }
    Real farm_p(size_t s) const { return farm_p_[s]; }
    Real farm_q(size_t s) const { return farm_q_[s]; }
    Real station_p(size_t s) const { return station_p_[s]; }

private:
    struct Machine {
        int bus_pos = 0;
        Real h = 5.0, d = 0.0;
        Real x_d = 1.0, x_q = 0.8, xd_t = 0.3, td0_t = 6.0;
        GovernorParams gov{};
        ExciterParams exc{};
        Real droop_r_sys = 0.05;
        Real p_ref = 0.0;
        Real v_ref = 1.0;
        Real participation = 0.0;
    };

    struct MachDeriv {
        Real ddelta = 0.0, ddomega = 0.0, deq = 0.0, defd = 0.0, dpsv = 0.0, dpm = 0.0;
    };

    struct Deriv {
        std::vector<MachDeriv> mach;
        Real dagc = 0.0;
    };

    void build_machines() {
        const Real s_base = net_.s_base;
        size_t gi = 0;
        for (const auto& g : net_.generators) {
            const Real gamma = g.mva_base / s_base;
            Machine m;
            m.bus_pos = net_.bus_index(g.bus);
            const MachineParams& p = g.dynamic_params;
            m.h = p.h * gamma;
            m.d = p.d * gamma;
            m.x_d = p.x_d / gamma;
            m.x_q = p.x_q / gamma;
            m.xd_t = p.xd_t / gamma;
            m.td0_t = p.td0_t;
            m.gov = p.governor;
            m.exc = p.exciter;
            m.droop_r_sys = p.governor.droop_r / gamma;
            m.participation = agc_.participation.empty()
                                  ? 1.0 / static_cast<Real>(net_.generators.size())
                                  : agc_.participation[gi];
            machines_.push_back(m);
            ++gi;
        }
        if (controls_.model == MachineModel::Classical)
            for (auto& m : machines_) m.x_q = m.xd_t;
    }

    void build_network_matrices(const PowerFlowSolution& sol0) {
        const Ybus yb = build_ybus(net_);
        y_net_ = yb.y;
        // Static loads to constant admittance at the initial operating point.
        for (int k = 0; k < n_; ++k) {
            const Bus& b = net_.buses[static_cast<size_t>(k)];
            if (b.p_load == 0.0 && b.q_load == 0.0) continue;
            const Real v2 = sol0.v_mag[static_cast<size_t>(k)] * sol0.v_mag[static_cast<size_t>(k)];
            y_net_(k, k) += std::conj(Complex(b.p_load, b.q_load)) / v2;
        }
        y_aug_ = y_net_;
        for (const auto& m : machines_)
            y_aug_(m.bus_pos, m.bus_pos) += 1.0 / Complex(0.0, m.xd_t);
        lu_.compute(y_aug_);

        farm_rng_.clear();
        farm_g_.assign(farms_.size(), 0.0);
        farm_p_.assign(farms_.size(), 0.0);
        farm_q_.assign(farms_.size(), 0.0);
        for (auto& f : farms_) {
            farm_rng_.emplace_back(f.seed);
        }
        for (size_t s = 0; s < farms_.size(); ++s) {
            const Real g = sample_irradiance(farms_[s], farm_rng_[s]);
            auto [p, q] = pv_injection(farms_[s], g);
            farm_g_[s] = g;
            farm_p_[s] = p;
            farm_q_[s] = q;
        }
        next_resample_.clear();
        for (const auto& f : farms_)
            next_resample_.push_back(f.resample_s > 0.0 ? f.resample_s : 1e300);
        station_p_.assign(stations_.size(), 0.0);
        station_q_.assign(stations_.size(), 0.0);
    }

    /// Machine terminal current injection from its dq algebra.
    Complex machine_current(const Machine& m, const MachineState& s, Complex v_bus) const {
        const Real vm = std::abs(v_bus);
        const Real th = std::arg(v_bus);
        const Real v_d = vm * std::sin(s.delta - th);
        const Real v_q = vm * std::cos(s.delta - th);
        const Real i_q = v_d / m.x_q;
        const Real i_d = (s.eq_t - v_q) / m.xd_t;
        return Complex(i_d, i_q) * std::polar(1.0, s.delta - kPi / 2.0);
    }

    std::pair<Real, Real> station_pq(size_t s, const DynamicState& x, Real v, Real t) const {
        const EvStation& st = stations_[s];
        if (!st.active) return {0.0, 0.0};
        const Real tan_phi = std::tan(std::acos(st.pf_min));
        const Real p_rated = st.p_rated_pu(net_.s_base);
        switch (st.variant) {
            case EvVariant::ChargingModule: {
                const Real soc = x.station_soc[s];
                const Real p = (soc < st.soc_max) ? p_rated : 0.0;
                return {p, -reactive_capability(p, st.s_rated_pu(net_.s_base), st.pf_min)};
            }
            case EvVariant::DynamicPqControl: {
                const auto& lag = x.station_lags[s];
                const Real u = std::pow(v / lag.v0, lag.n_p);
                const LeadLag f{lag.t_p, lag.t_s};
                const Real p = p_rated * f.output(lag.lag_state, u);
                return {p, p * tan_phi};
            }
            default: {
                EvExponentialParams ep = st.exp_params;
                ep.p0 = p_rated;
                const Real p = ev_power_exponential(v, ep);
                return {p, p * tan_phi};
            }
        }
        (void)t;
    }

    std::vector<Complex> solve_network(const DynamicState& x, Real t,
                                       std::vector<Complex> v) const {
        for (int it = 0; it < 60; ++it) {
            Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(n_);
            for (size_t mi = 0; mi < machines_.size(); ++mi) {
                const Machine& m = machines_[mi];
                const Complex vb = v[static_cast<size_t>(m.bus_pos)];
                const Complex i_m = machine_current(m, x.machines[mi], vb);
                rhs(m.bus_pos) += i_m + vb / Complex(0.0, m.xd_t);
            }
            for (size_t s = 0; s < stations_.size(); ++s) {
                const int k = net_.bus_index(stations_[s].bus);
                const Complex vb = v[static_cast<size_t>(k)];
                if (std::abs(vb) < 1e-6)
                    throw SimulationError("voltage collapse at bus " +
                                          std::to_string(stations_[s].bus));
                auto [p, q] = station_pq(s, x, std::abs(vb), t);
                rhs(k) -= std::conj(Complex(p, q) / vb);
            }
            for (size_t s = 0; s < farms_.size(); ++s) {
                const int k = net_.bus_index(farms_[s].bus);
                const Complex vb = v[static_cast<size_t>(k)];
                rhs(k) += std::conj(Complex(farm_p_[s], farm_q_[s]) / vb);
            }
            for (const auto& ls : load_steps_) {
                const int k = net_.bus_index(ls.bus);
                const Complex vb = v[static_cast<size_t>(k)];
                rhs(k) -= std::conj(Complex(ls.dp, ls.dq) / vb);
            }
            Eigen::VectorXcd vn = lu_.solve(rhs);
            Real diff = 0.0;
            for (int k = 0; k < n_; ++k) {
                diff = std::max(diff, std::abs(vn(k) - v[static_cast<size_t>(k)]));
                v[static_cast<size_t>(k)] = vn(k);
            }
            if (!std::isfinite(diff))
                throw SimulationError("network solve diverged at t=" + std::to_string(t));
            if (diff < 1e-11) return v;
        }
        throw SimulationError("network solve did not converge at t=" + std::to_string(t));
    }

    Real coi_freq_error_hz(const DynamicState& x) const {
        Real num = 0.0, den = 0.0;
        for (size_t mi = 0; mi < machines_.size(); ++mi) {
            num += machines_[mi].h * x.machines[mi].domega;
            den += machines_[mi].h;
        }
        return net_.f_sys * num / den;
    }

    Deriv derivatives(const DynamicState& x, const std::vector<Complex>& v, Real t) const {
        Deriv d;
        d.mach.resize(machines_.size());
        const Real omega_s = 2.0 * kPi * net_.f_sys;
        for (size_t mi = 0; mi < machines_.size(); ++mi) {
            const Machine& m = machines_[mi];
            const MachineState& s = x.machines[mi];
            const Complex vb = v[static_cast<size_t>(m.bus_pos)];
            const Real vm = std::abs(vb);
            const Real th = std::arg(vb);
            const Real v_d = vm * std::sin(s.delta - th);
            const Real v_q = vm * std::cos(s.delta - th);
            const Real i_q = v_d / m.x_q;
            const Real i_d = (s.eq_t - v_q) / m.xd_t;
            const Real p_e = v_d * i_d + v_q * i_q;

            MachDeriv& md = d.mach[mi];
            md.ddelta = omega_s * s.domega;
            md.ddomega = (s.p_m - p_e - m.d * s.domega) / (2.0 * m.h);
            if (controls_.model == MachineModel::OneAxis) {
                md.deq = (s.efd - s.eq_t - (m.x_d - m.xd_t) * i_d) / m.td0_t;
                const Real u_pss =
                    controls_.pss_on ? mbpss_eval(controls_.pss, s.pss, s.domega) : 0.0;
                Real defd = (m.exc.k_a * (m.v_ref - vm + u_pss) - s.efd) / m.exc.t_a;
                if ((s.efd >= m.exc.efd_max && defd > 0.0) ||
                    (s.efd <= m.exc.efd_min && defd < 0.0))
                    defd = 0.0;  // anti-windup at the field limits
                md.defd = defd;
            }
            const Real agc_share = controls_.agc_on ? m.participation * x.agc_z : 0.0;
            md.dpsv = (m.p_ref + agc_share - s.domega / m.droop_r_sys - s.p_sv) / m.gov.t_g;
            md.dpm = (s.p_sv - s.p_m) / m.gov.t_t;
        }
        d.dagc = controls_.agc_on ? -agc_.k_i * coi_freq_error_hz(x) : 0.0;
        (void)t;
        return d;
    }

    /// Trapezoidal update of all differential states; filter and lag states
    /// advance with their own trapezoidal forms using endpoint inputs.
    DynamicState advance(const DynamicState& x0, const Deriv& f0, const Deriv& f1,
                         Real dt, const std::vector<Complex>& v_end) const {
        DynamicState x1 = x0;
        for (size_t mi = 0; mi < machines_.size(); ++mi) {
            const MachineState& s0 = x0.machines[mi];
            MachineState& s1 = x1.machines[mi];
            const MachDeriv& a = f0.mach[mi];
            const MachDeriv& b = f1.mach[mi];
            s1.delta = s0.delta + dt / 2.0 * (a.ddelta + b.ddelta);
            s1.domega = s0.domega + dt / 2.0 * (a.ddomega + b.ddomega);
            if (controls_.model == MachineModel::OneAxis) {
                s1.eq_t = s0.eq_t + dt / 2.0 * (a.deq + b.deq);
                const Machine& m = machines_[mi];
                s1.efd = std::clamp(s0.efd + dt / 2.0 * (a.defd + b.defd), m.exc.efd_min,
                                    m.exc.efd_max);
            }
            s1.p_sv = s0.p_sv + dt / 2.0 * (a.dpsv + b.dpsv);
            s1.p_m = s0.p_m + dt / 2.0 * (a.dpm + b.dpm);
            if (controls_.pss_on)
                s1.pss = mbpss_advance(controls_.pss, s0.pss, s0.domega, s1.domega, dt);
        }
        x1.agc_z = x0.agc_z + dt / 2.0 * (f0.dagc + f1.dagc);

        // EV auxiliary states: the PQ-control lag filters on bus voltage and
        // the battery energy integration.
        for (size_t s = 0; s < stations_.size(); ++s) {
            const EvStation& st = stations_[s];
            if (!st.active) continue;
            if (st.variant == EvVariant::DynamicPqControl) {
                const int k = net_.bus_index(st.bus);
                const Real v1m = std::abs(v_end[static_cast<size_t>(k)]);
                const DynamicLoadLag& lag0 = x0.station_lags[s];
                const Real u1 = std::pow(v1m / lag0.v0, lag0.n_p);
                const LeadLag f{lag0.t_p, lag0.t_s};
                DynamicLoadLag lag1 = lag0;
                lag1.lag_state = f.advance(lag0.lag_state, lag0.prev_input, u1, dt);
                lag1.prev_input = u1;
                x1.station_lags[s] = lag1;
            }
            if (st.variant == EvVariant::ChargingModule) {
                EvStation tmp = st;
                tmp.soc = x0.station_soc[s];
                const Real p_kw = station_p_[s] * net_.s_base * 1000.0;
                x1.station_soc[s] = soc_update(tmp, p_kw, dt).station.soc;
            }
        }
        return x1;
    }

    static Real state_diff(const DynamicState& a, const DynamicState& b) {
        Real d = 0.0;
        for (size_t i = 0; i < a.machines.size(); ++i) {
            const auto& ma = a.machines[i];
            const auto& mb = b.machines[i];
            d = std::max({d, std::abs(ma.delta - mb.delta), std::abs(ma.domega - mb.domega),
                          std::abs(ma.eq_t - mb.eq_t), std::abs(ma.efd - mb.efd),
                          std::abs(ma.p_sv - mb.p_sv), std::abs(ma.p_m - mb.p_m)});
        }
        d = std::max(d, std::abs(a.agc_z - b.agc_z));
        return d;
    }

    void update_outputs(const DynamicState& x, const std::vector<Complex>& v) {
        p_e_.assign(machines_.size(), 0.0);
        for (size_t mi = 0; mi < machines_.size(); ++mi) {
            const Machine& m = machines_[mi];
            const Complex vb = v[static_cast<size_t>(m.bus_pos)];
            p_e_[mi] = (vb * std::conj(machine_current(m, x.machines[mi], vb))).real();
        }
        for (size_t s = 0; s < stations_.size(); ++s) {
            const int k = net_.bus_index(stations_[s].bus);
            auto [p, q] = station_pq(s, x, std::abs(v[static_cast<size_t>(k)]), x.t);
            station_p_[s] = p;
            station_q_[s] = q;
        }
    }

    /// States and references from a converged power flow, then one network
    /// solve to make mechanical powers and setpoints exactly consistent with
    /// the simulator's own algebraic solution.
    void init_from_power_flow(const PowerFlowSolution& sol0) {
        state_.machines.resize(machines_.size());
        state_.station_lags.resize(stations_.size());
        state_.station_soc.resize(stations_.size());
        v_.resize(static_cast<size_t>(n_));
        for (int k = 0; k < n_; ++k) v_[static_cast<size_t>(k)] = sol0.voltage(k);

        for (size_t s = 0; s < stations_.size(); ++s) {
            const int k = net_.bus_index(stations_[s].bus);
            state_.station_lags[s] = stations_[s].lag;
            state_.station_lags[s].reset(std::abs(v_[static_cast<size_t>(k)]));
            state_.station_soc[s] = stations_[s].soc;
        }

        // Generator injections from the power flow, with static bus load
        // (served by the constant-Z conversion) removed.
        for (size_t mi = 0; mi < machines_.size(); ++mi) {
            const Machine& m = machines_[mi];
            const int k = m.bus_pos;
            const Bus& b = net_.buses[static_cast<size_t>(k)];
            const Complex vb = v_[static_cast<size_t>(k)];
            Complex s_gen(sol0.p_inj[static_cast<size_t>(k)] + b.p_load,
                          sol0.q_inj[static_cast<size_t>(k)] + b.q_load);
            // Injections from attached stations/farms at a machine bus would
            // double count; the bundled cases attach them on leaf buses only.
            const Complex i_g = std::conj(s_gen / vb);
            MachineState& s = state_.machines[mi];
            s.delta = std::arg(vb + Complex(0.0, m.x_q) * i_g);
            const Complex rot = std::polar(1.0, -(s.delta - kPi / 2.0));
            const Complex v_dq = vb * rot;
            const Complex i_dq = i_g * rot;
            const Real v_q = v_dq.imag();
            const Real i_d = i_dq.real();
            s.domega = 0.0;
            s.eq_t = v_q + m.xd_t * i_d;
        }

        // Relax the algebraic solution to the simulator's own fixed point,
        // then freeze the equilibrium setpoints against it.
        v_ = solve_network(state_, 0.0, v_);
        for (size_t mi = 0; mi < machines_.size(); ++mi) {
            const Machine& m = machines_[mi];
            MachineState& s = state_.machines[mi];
            const Complex vb = v_[static_cast<size_t>(m.bus_pos)];
            const Real vm = std::abs(vb);
            const Real th = std::arg(vb);
            const Real v_d = vm * std::sin(s.delta - th);
            const Real v_q = vm * std::cos(s.delta - th);
            const Real i_q = v_d / m.x_q;
            const Real i_d = (s.eq_t - v_q) / m.xd_t;
            const Real p_e = v_d * i_d + v_q * i_q;
            s.p_m = p_e;
            s.p_sv = p_e;
            s.efd = s.eq_t + (m.x_d - m.xd_t) * i_d;
            machines_[mi].p_ref = p_e;
            machines_[mi].v_ref = vm + s.efd / m.exc.k_a;
            if (s.efd > m.exc.efd_max || s.efd < m.exc.efd_min)
                throw SimulationError("initial field voltage outside limits at machine " +
                                      std::to_string(mi));
        }
        state_.agc_z = 0.0;
        state_.t = 0.0;
        update_outputs(state_, v_);
    }

    Network net_;
    SimControls controls_;
    AgcParams agc_;
    std::vector<EvStation> stations_;
    std::vector<PvFarm> farms_;
    std::vector<UniformRng> farm_rng_;
    std::vector<Real> farm_g_, farm_p_, farm_q_;
    std::vector<Real> station_p_, station_q_;
    std::vector<Event> load_steps_;
    std::vector<Machine> machines_;
    int n_ = 0;
    std::vector<Real> next_resample_;
    Eigen::MatrixXcd y_net_;  // Ybus + constant-Z loads
    Eigen::MatrixXcd y_aug_;  // + machine internal admittances
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu_;
    DynamicState state_;
    std::vector<Complex> v_;
    std::vector<Real> p_e_;
};

struct RunScenarioOptions {
    Real dt = 1e-3;
    Real t_end = 30.0;
    SimControls controls{};
    AgcParams agc{};
    PowerFlowOptions pf{};
};

/// Steady-state loads for the stations active at t=0, for the initial
/// power flow.
inline std::vector<VoltageLoad> initial_station_loads(const std::vector<EvStation>& stations,
                                                      Real s_base) {
    std::vector<VoltageLoad> loads;
    for (const auto& st : stations) {
        if (!st.active) continue;
        EvStation copy = st;
        loads.push_back({st.bus, [copy, s_base](Real v) {
                             return ev_steady_injection(copy, v, s_base);
                         }});
    }
    return loads;
}

/// Run one scenario: initial power flow with the t=0 injections, consistent
/// initialization, then fixed-step integration with the event schedule.
/// A mid-run network failure ends the run early with the partial trace kept.
inline SimTrace run_scenario(const Network& net, std::vector<EvStation> stations,
                             std::vector<PvFarm> farms, const EventSchedule& events,
                             const RunScenarioOptions& opts) {
    events.validate(opts.t_end);

    // Farms inject their t=0 sample during the power flow; the simulator
    // draws the same value from the same seed.
    std::vector<VoltageLoad> loads = initial_station_loads(stations, net.s_base);
    for (const auto& f : farms) {
        UniformRng rng(f.seed);
        const Real g = sample_irradiance(f, rng);
        auto [p, q] = pv_injection(f, g);
        loads.push_back({f.bus, [p, q](Real) { return std::pair<Real, Real>(-p, -q); }});
    }
    const PowerFlowSolution sol0 = solve_power_flow(net, opts.pf, loads);

    DynamicSimulator sim(net, sol0, std::move(stations), std::move(farms), opts.controls,
                         opts.agc);

    SimTrace trace;
    const int ng = sim.num_machines();
    trace.gen_freq_hz.resize(static_cast<size_t>(ng));
    trace.gen_u_pss.resize(static_cast<size_t>(ng));
    trace.gen_p_e.resize(static_cast<size_t>(ng));

    auto record = [&]() {
        trace.t.push_back(sim.state().t);
        for (int i = 0; i < ng; ++i) {
            trace.gen_freq_hz[static_cast<size_t>(i)].push_back(sim.gen_freq_hz(i));
            trace.gen_u_pss[static_cast<size_t>(i)].push_back(sim.gen_u_pss(i));
            trace.gen_p_e[static_cast<size_t>(i)].push_back(sim.gen_p_e(i));
        }
    };

    const long n_steps = static_cast<long>(std::llround(opts.t_end / opts.dt));
    size_t next_event = 0;
    record();
    try {
        for (long k = 0; k < n_steps; ++k) {
            const Real t_now = static_cast<Real>(k) * opts.dt;
            while (next_event < events.events.size() &&
                   events.events[next_event].time <= t_now + opts.dt * 0.5) {
                sim.apply_event(events.events[next_event]);
                ++next_event;
            }
            sim.step(opts.dt);
            record();
        }
    } catch (const SimulationError& e) {
        trace.collapsed = true;
        trace.failure = e.what();
    }
    return trace;
}

} // namespace gridstab
