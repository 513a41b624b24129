#pragma once

#include "gridstab/common.hpp"

#include <cstdint>
#include <random>
#include <utility>

namespace gridstab {

/// Deterministic uniform draws in [0,1) with 53-bit resolution. The
/// generator identity ("mt19937_64") goes into run metadata so sample
/// streams are reproducible across platforms.
struct UniformRng {
    std::mt19937_64 engine;

    explicit UniformRng(std::uint64_t seed = 0) : engine(seed) {}

    Real next() { return static_cast<Real>(engine() >> 11) * 0x1.0p-53; }

    static constexpr const char* algorithm() { return "mt19937_64"; }
};

struct PvFarm {
    int bus = 0;
    Real p_b = 0.0;          // pu rated power on system base
    Real g_rated = 1000.0;   // W/m^2
    std::uint64_t seed = 0;
    Real spur_km = 1.0;
    bool two_draw = false;
    Real resample_s = 1.0;   // 0 holds the first sample for a whole run
};

/// Piecewise irradiance map: a draw above the 0.6 gate yields
/// 600 + u*(g_rated - 500), otherwise zero. With the single-draw form the
/// gate draw doubles as the magnitude, so nonzero samples lie in
/// (600 + 0.6*(g_rated-500), g_rated + 100].
inline Real irradiance_from_u(Real u, Real g_rated = 1000.0) {
    return u > 0.6 ? 600.0 + u * (g_rated - 500.0) : 0.0;
}

inline Real sample_irradiance(const PvFarm& farm, UniformRng& rng) {
    const Real gate = rng.next();
    if (!farm.two_draw) return irradiance_from_u(gate, farm.g_rated);
    if (gate <= 0.6) return 0.0;
    return 600.0 + rng.next() * (farm.g_rated - 500.0);
}

/// Active/reactive injection at a given irradiance; Q is pinned to 0.2*P.
/// Output is not clamped at rated power: an above-rated draw yields
/// above-rated output.
inline std::pair<Real, Real> pv_injection(const PvFarm& farm, Real g_actual) {
    if (g_actual < 0.0) throw ValidationError("irradiance must be >= 0");
    const Real p = farm.p_b * g_actual / farm.g_rated;
    return {p, 0.2 * p};
}

} // namespace gridstab
