#pragma once

#include "gridstab/common.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace gridstab {

/// Minimum frequency after the disturbance time.
inline Real frequency_nadir(const std::vector<Real>& t, const std::vector<Real>& f,
                            Real t_dist) {
    if (t.size() != f.size()) throw ValidationError("trace arrays differ in length");
    Real nadir = 0.0;
    bool any = false;
    for (size_t k = 0; k < t.size(); ++k) {
        if (t[k] < t_dist) continue;
        nadir = any ? std::min(nadir, f[k]) : f[k];
        any = true;
    }
    if (!any) throw ValidationError("trace has no samples after the disturbance");
    return nadir;
}

/// Signed maximum-magnitude sliding-window slope after t_dist. Negative for
/// frequency drops.
inline Real rocof(const std::vector<Real>& t, const std::vector<Real>& f, Real t_dist,
                  Real window_s = 0.5) {
    if (window_s <= 0.0) throw ValidationError("rocof window must be positive");
    if (t.size() != f.size() || t.size() < 2)
        throw ValidationError("trace too short for rocof");
    const Real dt_med = (t.back() - t.front()) / static_cast<Real>(t.size() - 1);
    if (dt_med > window_s / 5.0)
        throw ValidationError("trace resolution too coarse for the rocof window");
    Real best = 0.0;
    size_t j = 0;
    for (size_t k = 0; k < t.size(); ++k) {
        if (t[k] < t_dist) continue;
        if (j < k) j = k;
        while (j + 1 < t.size() && t[j] - t[k] < window_s) ++j;
        if (t[j] - t[k] <= 0.0) break;
        const Real slope = (f[j] - f[k]) / (t[j] - t[k]);
        if (std::abs(slope) > std::abs(best)) best = slope;
    }
    return best;
}

/// Earliest absolute time after which frequency stays within +/- band of
/// its final steady value through the end of the trace. The steady value is
/// the mean of the final two seconds; if that tail still moves more than
/// band/10, the trace has not settled and nullopt is returned.
inline std::optional<Real> settling_time(const std::vector<Real>& t,
                                         const std::vector<Real>& f, Real t_dist,
                                         Real band_hz = 0.02) {
    if (band_hz <= 0.0) throw ValidationError("settling band must be positive");
    if (t.size() != f.size() || t.empty()) throw ValidationError("empty trace");
    const Real t_tail = t.back() - 2.0;
    Real sum = 0.0;
    size_t n_tail = 0;
    for (size_t k = 0; k < t.size(); ++k) {
        if (t[k] < t_tail) continue;
        sum += f[k];
        ++n_tail;
    }
    const Real steady = sum / static_cast<Real>(n_tail);
    for (size_t k = 0; k < t.size(); ++k) {
        if (t[k] < t_tail) continue;
        if (std::abs(f[k] - steady) > band_hz / 10.0) return std::nullopt;
    }
    // Walk back from the end to the last excursion outside the band.
    size_t last_out = t.size();  // sentinel: none
    for (size_t k = t.size(); k-- > 0;) {
        if (std::abs(f[k] - steady) > band_hz) {
            last_out = k;
            break;
        }
    }
    if (last_out == t.size()) return std::max(t.front(), t_dist);
    if (last_out + 1 >= t.size()) return std::nullopt;
    return std::max(t[last_out + 1], t_dist);
}

struct FrequencyMetrics {
    std::string generator;
    Real f_nadir = 0.0;
    Real rocof_max = 0.0;           // signed Hz/s
    std::optional<Real> settle_time;  // absolute s; nullopt when unsettled
    Real f_steady = 0.0;
};

inline FrequencyMetrics compute_frequency_metrics(const std::string& name,
                                                  const std::vector<Real>& t,
                                                  const std::vector<Real>& f, Real t_dist,
                                                  Real rocof_window_s = 0.5,
                                                  Real band_hz = 0.02) {
    FrequencyMetrics m;
    m.generator = name;
    m.f_nadir = frequency_nadir(t, f, t_dist);
    m.rocof_max = rocof(t, f, t_dist, rocof_window_s);
    m.settle_time = settling_time(t, f, t_dist, band_hz);
    Real sum = 0.0;
    size_t n = 0;
    for (size_t k = 0; k < t.size(); ++k) {
        if (t[k] < t.back() - 2.0) continue;
        sum += f[k];
        ++n;
    }
    m.f_steady = sum / static_cast<Real>(n);
    return m;
}

struct ConstraintCheck {
    std::string name;
    Real bound_lo = 0.0;
    Real bound_hi = 0.0;
    Real observed = 0.0;
    bool pass = false;
};

struct ConstraintReport {
    std::vector<ConstraintCheck> checks;
    bool all_pass() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }
};

struct LineIndexPair {
    std::string line;
    Real fvsi = 0.0;
    Real nlsi = 0.0;
};

/// System constraint screen: both line indices below unity, steady
/// frequency inside [59.5, 60.1] Hz, |ROCOF| below 1 Hz/s.
inline ConstraintReport check_system_constraints(
    const std::vector<FrequencyMetrics>& metrics, const std::vector<LineIndexPair>& lines) {
    ConstraintReport rep;
    for (const auto& l : lines) {
        rep.checks.push_back({"fvsi<1 line " + l.line, 0.0, 1.0, l.fvsi, l.fvsi < 1.0});
        rep.checks.push_back({"nlsi<1 line " + l.line, 0.0, 1.0, l.nlsi, l.nlsi < 1.0});
    }
    for (const auto& m : metrics) {
        rep.checks.push_back({"59.5<=f_steady<=60.1 " + m.generator, 59.5, 60.1, m.f_steady,
                              m.f_steady >= 59.5 && m.f_steady <= 60.1});
        rep.checks.push_back({"|rocof|<1 " + m.generator, -1.0, 1.0, m.rocof_max,
                              std::abs(m.rocof_max) < 1.0});
    }
    return rep;
}

} // namespace gridstab
