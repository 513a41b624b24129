#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

namespace gridstab {

using Real = double;
using Complex = std::complex<Real>;

inline constexpr Real kPi = 3.14159265358979323846;

inline Real deg2rad(Real d) { return d * kPi / 180.0; }
inline Real rad2deg(Real r) { return r * 180.0 / kPi; }

/// Malformed input file or config.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Structurally invalid data (failed invariant), names the offending element.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Iterative solver failed to converge.
class ConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Failure during a time-domain run (e.g. algebraic network collapse).
class SimulationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace gridstab
