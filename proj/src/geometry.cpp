#include "rislocate/geometry.hpp"

#include <algorithm>
#include <stdexcept>

namespace rislocate {

Eigen::Matrix<double, 8, 1> UEState::xi() const {
    Eigen::Matrix<double, 8, 1> x;
    x << p, v, clock_bias_m, clock_drift_mps;
    return x;
}

Eigen::Matrix<double, 6, 1> UEState::theta() const {
    Eigen::Matrix<double, 6, 1> x;
    x << p, v;
    return x;
}

UEState UEState::from_xi(const Eigen::Ref<const VecX>& xi) {
    if (xi.size() != 8 && xi.size() != 6) throw std::invalid_argument("state vector must have 6 or 8 entries");
    UEState s;
    s.p = xi.segment<3>(0);
    s.v = xi.segment<3>(3);
    if (xi.size() == 8) {
        s.clock_bias_m = xi(6);
        s.clock_drift_mps = xi(7);
    }
    return s;
}

bool UEState::finite() const {
    return p.allFinite() && v.allFinite() && std::isfinite(clock_bias_m) && std::isfinite(clock_drift_mps);
}

double clock_bias_from_ns(double ns) { return ns * 1e-9 * kSpeedOfLight; }
double clock_drift_from_ppm(double ppm) { return ppm * 1e-6 * kSpeedOfLight; }

AnchorSet AnchorSet::make(const Vec3& bs, const Vec3& ris, const Mat3& rotation) {
    AnchorSet a;
    a.q1 = bs;
    a.q2 = ris;
    a.R = rotation;
    a.validate();
    a.phi_A = angles_of(rotation.transpose() * (bs - ris) / (bs - ris).norm());
    return a;
}

void AnchorSet::validate() const {
    if (!q1.allFinite() || !q2.allFinite() || !R.allFinite()) throw GeometryError("non-finite anchor geometry");
    if ((R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-12 || std::abs(R.determinant() - 1.0) > 1e-12)
        throw GeometryError("RIS orientation is not a proper rotation");
    if ((q1 - q2).norm() < kMinRange) throw GeometryError("BS and RIS positions coincide");
}

Mat3 rotation_zyx(double yaw, double pitch, double roll) {
    return (Eigen::AngleAxisd(yaw, Vec3::UnitZ()) * Eigen::AngleAxisd(pitch, Vec3::UnitY()) *
            Eigen::AngleAxisd(roll, Vec3::UnitX()))
        .toRotationMatrix();
}

EpochSchedule::EpochSchedule(std::vector<double> times) : t_(std::move(times)) {
    if (t_.empty()) throw std::invalid_argument("schedule needs at least one epoch");
    for (size_t i = 1; i < t_.size(); ++i)
        if (!(t_[i] > t_[i - 1])) throw std::invalid_argument("snapshot times must be strictly increasing");
}

EpochSchedule EpochSchedule::uniform(int count, double interval_s) {
    if (count < 1 || !(interval_s > 0.0)) throw std::invalid_argument("uniform schedule needs count >= 1 and interval > 0");
    std::vector<double> t(count);
    for (int n = 0; n < count; ++n) t[n] = interval_s * n;
    return EpochSchedule(std::move(t));
}

double EpochSchedule::offset(int n) const {
    if (n < 0 || n >= size()) throw std::out_of_range("epoch index out of range");
    return t_[n] - t_[0];
}

Eigen::Matrix<double, 6, 1> EpochParams::vec() const {
    Eigen::Matrix<double, 6, 1> x;
    x << d1, d2, r1, r2, phi_az, phi_el;
    return x;
}

EpochParams EpochParams::from_vec(const Eigen::Ref<const VecX>& x) {
    if (x.size() != 6) throw std::invalid_argument("epoch parameter vector must have 6 entries");
    return {x(0), x(1), x(2), x(3), x(4), x(5)};
}

VecX stack_params(const ChannelParams& params) {
    VecX eta(6 * params.size());
    for (size_t n = 0; n < params.size(); ++n) eta.segment<6>(6 * n) = params[n].vec();
    return eta;
}

ChannelParams unstack_params(const Eigen::Ref<const VecX>& eta) {
    if (eta.size() % 6 != 0) throw std::invalid_argument("stacked parameters must be a multiple of 6");
    ChannelParams out(eta.size() / 6);
    for (size_t n = 0; n < out.size(); ++n) out[n] = EpochParams::from_vec(eta.segment<6>(6 * n));
    return out;
}

EpochState propagate_state(const UEState& ue, const EpochSchedule& sched, int n) {
    const double t = sched.offset(n);
    return {ue.p + t * ue.v, ue.clock_bias_m + t * ue.clock_drift_mps};
}

Vec3 direction(const Vec2& phi) {
    const double ca = std::cos(phi(0)), sa = std::sin(phi(0));
    const double ce = std::cos(phi(1)), se = std::sin(phi(1));
    return {ca * ce, sa * ce, se};
}

UnitFrame unit_frame(const Vec2& phi) {
    const double ca = std::cos(phi(0)), sa = std::sin(phi(0));
    const double ce = std::cos(phi(1)), se = std::sin(phi(1));
    return {Vec3(ca * ce, sa * ce, se), Vec3(-sa, ca, 0.0), Vec3(-ca * se, -sa * se, ce)};
}

Vec3 direction_daz(const Vec2& phi) {
    const double ce = std::cos(phi(1));
    return {-std::sin(phi(0)) * ce, std::cos(phi(0)) * ce, 0.0};
}

Vec3 direction_del(const Vec2& phi) {
    const double se = std::sin(phi(1));
    return {-std::cos(phi(0)) * se, -std::sin(phi(0)) * se, std::cos(phi(1))};
}

Vec2 angles_of(const Vec3& unit) {
    double az = std::atan2(unit(1), unit(0));
    if (az <= -kPi) az = kPi;
    return {az, std::asin(std::clamp(unit(2), -1.0, 1.0))};
}

EpochParams true_epoch_params(const UEState& ue, const AnchorSet& anchors, const EpochSchedule& sched, int n) {
    const EpochState s = propagate_state(ue, sched, n);
    const Vec3 b1 = anchors.q1 - s.p;
    const Vec3 b2 = anchors.q2 - s.p;
    const double n1 = b1.norm(), n2 = b2.norm();
    if (n1 < kMinRange || n2 < kMinRange) throw GeometryError("UE coincides with an anchor");
    const double drift = ue.clock_drift_mps;
    EpochParams ep;
    ep.d1 = n1 + s.bias_m;
    ep.d2 = n2 + s.bias_m;
    ep.r1 = ue.v.dot(b1) / n1 + drift;
    ep.r2 = ue.v.dot(b2) / n2 + drift;
    const Vec2 phi = angles_of(anchors.R.transpose() * b2 / n2);
    ep.phi_az = phi(0);
    ep.phi_el = phi(1);
    return ep;
}

ChannelParams true_channel_params(const UEState& ue, const AnchorSet& anchors, const EpochSchedule& sched) {
    ChannelParams out(sched.size());
    for (int n = 0; n < sched.size(); ++n) out[n] = true_epoch_params(ue, anchors, sched, n);
    return out;
}

}  // namespace rislocate
