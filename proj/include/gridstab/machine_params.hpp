#pragma once

#include "gridstab/common.hpp"

namespace gridstab {

/// Speed-droop governor plus single-lag steam turbine.
struct GovernorParams {
    Real droop_r = 0.05;   // pu speed per pu power, machine base
    Real t_g = 0.2;        // governor servo time constant, s
    Real t_t = 0.5;        // turbine time constant, s
};

/// Single-time-constant voltage regulator with field limits.
struct ExciterParams {
    Real k_a = 200.0;
    Real t_a = 0.02;       // s
    Real efd_min = 0.0;    // pu field voltage limits
    Real efd_max = 5.0;
};

/// Synchronous-machine data for the one-axis transient model.
/// All impedances and H are on the machine MVA base.
struct MachineParams {
    Real h = 5.0;          // inertia constant, s
    Real d = 2.0;          // damping torque coefficient, pu/pu speed
    Real x_d = 1.0;        // d-axis synchronous reactance, pu
    Real x_q = 0.8;        // q-axis synchronous reactance, pu
    Real xd_t = 0.3;       // d-axis transient reactance, pu
    Real td0_t = 6.0;      // open-circuit transient time constant, s
    GovernorParams governor{};
    ExciterParams exciter{};
};

} // namespace gridstab
