#pragma once

#include "rislocate/types.hpp"

#include <vector>

namespace rislocate {

/// Kinematic and clock state of the user at the first snapshot.
///
/// Clock terms are stored in range units: the bias in meters and the drift in
/// meters per second, so every measurement equation stays unit-homogeneous.
struct UEState {
    Vec3 p = Vec3::Zero();
    Vec3 v = Vec3::Zero();
    double clock_bias_m = 0.0;
    double clock_drift_mps = 0.0;

    /// Full state [p; v; B; D].
    Eigen::Matrix<double, 8, 1> xi() const;
    /// Clock-free state [p; v].
    Eigen::Matrix<double, 6, 1> theta() const;
    static UEState from_xi(const Eigen::Ref<const VecX>& xi);

    bool finite() const;
};

double clock_bias_from_ns(double ns);
double clock_drift_from_ppm(double ppm);

/// Fixed base station and RIS geometry.
struct AnchorSet {
    Vec3 q1 = Vec3::Zero();  ///< BS position
    Vec3 q2 = Vec3::Zero();  ///< RIS position
    Mat3 R = Mat3::Identity();
    Vec2 phi_A = Vec2::Zero();  ///< RIS AOA pair (az, el), derived from q1, q2, R

    /// Builds the anchor set and derives phi_A from e(phi_A) = R^T (q1 - q2) / |q1 - q2|.
    static AnchorSet make(const Vec3& bs, const Vec3& ris, const Mat3& rotation);

    double d0() const { return (q1 - q2).norm(); }
    /// Throws GeometryError when R is not a proper rotation or the anchors coincide.
    void validate() const;
};

/// Rotation from intrinsic Z-Y-X Euler angles (yaw, pitch, roll), radians.
Mat3 rotation_zyx(double yaw, double pitch, double roll);

/// Strictly increasing snapshot times, re-referenced so that t_1 = 0.
class EpochSchedule {
public:
    EpochSchedule() = default;
    explicit EpochSchedule(std::vector<double> times);
    static EpochSchedule uniform(int count, double interval_s);

    int size() const { return static_cast<int>(t_.size()); }
    /// Offset t_n - t_1 of (0-based) epoch n. Throws std::out_of_range.
    double offset(int n) const;
    const std::vector<double>& times() const { return t_; }

private:
    std::vector<double> t_;
};

/// Channel parameters of one snapshot.
struct EpochParams {
    double d1 = 0.0;  ///< direct-link pseudorange, m
    double d2 = 0.0;  ///< RIS-UE pseudorange (BS-RIS distance removed), m
    double r1 = 0.0;  ///< direct-link pseudorange rate, m/s
    double r2 = 0.0;  ///< cascaded-link pseudorange rate, m/s
    double phi_az = 0.0;
    double phi_el = 0.0;

    Eigen::Matrix<double, 6, 1> vec() const;
    static EpochParams from_vec(const Eigen::Ref<const VecX>& x);
};

using ChannelParams = std::vector<EpochParams>;

VecX stack_params(const ChannelParams& params);
ChannelParams unstack_params(const Eigen::Ref<const VecX>& eta);

struct EpochState {
    Vec3 p;
    double bias_m;
};

/// Linear state transition to (0-based) epoch n.
EpochState propagate_state(const UEState& ue, const EpochSchedule& sched, int n);

struct UnitFrame {
    Vec3 e;
    Vec3 f;
    Vec3 g;
};

Vec3 direction(const Vec2& phi);
UnitFrame unit_frame(const Vec2& phi);
/// Partial derivatives of e(phi) with respect to azimuth and elevation.
Vec3 direction_daz(const Vec2& phi);
Vec3 direction_del(const Vec2& phi);

/// (az, el) of a unit vector; az in (-pi, pi], el = asin(e_z).
Vec2 angles_of(const Vec3& unit);

/// Ranges shorter than this are treated as coincident points.
inline constexpr double kMinRange = 1e-6;

EpochParams true_epoch_params(const UEState& ue, const AnchorSet& anchors,
                              const EpochSchedule& sched, int n);
ChannelParams true_channel_params(const UEState& ue, const AnchorSet& anchors,
                                  const EpochSchedule& sched);

}  // namespace rislocate
