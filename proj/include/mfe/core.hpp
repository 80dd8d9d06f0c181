#pragma once

// Shared scalar/vector types and the error hierarchy used across the library.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace mfe {

inline constexpr const char* kVersion = "0.1.0";

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Base class for everything this library throws on bad input or failed runs.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid or unusable configuration (bad parameter records, missing names, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Structural problems in a mesh: dangling ids, duplicate nodes, bad connectivity.
class MeshError : public Error {
public:
    using Error::Error;
};

// Constitutive evaluation left the admissible range (J <= 0, non-finite energy).
class NumericRangeError : public Error {
public:
    using Error::Error;
};

// A cohesive law whose parameters admit no valid softening branch.
class CohesiveLawError : public Error {
public:
    using Error::Error;
};

// Time integration failure: inversion, NaN state, broken energy balance.
class SolverError : public Error {
public:
    using Error::Error;
};

// Calibration setup or execution failure.
class CalibrationError : public Error {
public:
    using Error::Error;
};

inline bool nearly_equal(double a, double b, double rel, double abs_tol = 0.0) {
    const double scale = std::max(std::abs(a), std::abs(b));
    return std::abs(a - b) <= std::max(abs_tol, rel * scale);
}

// Quintic ramp: 0 at t0, 1 at t1, with zero first and second derivative at
// both ends. Clamped outside [t0, t1].
inline double smooth_step(double t, double t0, double t1) {
    if (!(t1 > t0))
        throw ConfigError("smooth_step: t1 must exceed t0");
    const double s = (t - t0) / (t1 - t0);
    if (s <= 0.0) return 0.0;
    if (s >= 1.0) return 1.0;
    return s * s * s * (10.0 + s * (-15.0 + 6.0 * s));
}

// Time derivative of smooth_step with respect to t.
inline double smooth_step_rate(double t, double t0, double t1) {
    if (!(t1 > t0))
        throw ConfigError("smooth_step_rate: t1 must exceed t0");
    const double s = (t - t0) / (t1 - t0);
    if (s <= 0.0 || s >= 1.0) return 0.0;
    return 30.0 * s * s * (1.0 + s * (-2.0 + s)) / (t1 - t0);
}

} // namespace mfe
