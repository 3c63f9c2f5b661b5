#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace rislocate {

using cplx = std::complex<double>;

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
using CVecX = Eigen::VectorXcd;
using CMatX = Eigen::MatrixXcd;

inline constexpr double kSpeedOfLight = 299792458.0;
inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr cplx kJ{0.0, 1.0};

/// Wraps an angle to (-pi, pi]. An input of exactly -pi maps to +pi.
inline double wrap_angle(double a) {
    double w = std::remainder(a, kTwoPi);
    if (w <= -kPi) w += kTwoPi;
    return w;
}

/// Invalid or physically degenerate geometry (coincident points, bad rotation).
class GeometryError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Inconsistent configuration (dimensions, factorization of G, ...).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A decomposition or search collapsed (rank loss, flat objective).
class DegeneracyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The estimation problem is underdetermined for the given data.
class InfeasibleError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace rislocate
