#pragma once

#include "rislocate/geometry.hpp"

#include <vector>

namespace rislocate {

/// Channel-parameter estimates of all epochs with their error covariance.
struct MeasurementSet {
    VecX eta_hat;    ///< 6N, per epoch (d1, d2, r1, r2, az, el)
    MatX sigma_eta;  ///< 6N x 6N, block diagonal

    int epochs() const { return int(eta_hat.size() / 6); }
    /// Throws ConfigError on size mismatch, asymmetry or a covariance that is not PD.
    void validate() const;
    static MeasurementSet from_params(const ChannelParams& params, const MatX& sigma_eta);
};

/// Per epoch (d12, r12, az, el) and their covariance.
struct DifferentialMeasurements {
    VecX eta_d;
    MatX sigma_d;
};

DifferentialMeasurements differentials(const MeasurementSet& m);

/// rho_hat = Phi_hat theta + eps, rows per epoch (squared difference, rate, f, g).
struct DiffSystem {
    VecX rho_hat;
    MatX Phi_hat;
    MatX sigma_d;
    MatX J_err;  ///< identity until a state estimate is available
    VecX eta_d;
};

DiffSystem build_linear_system(const MeasurementSet& m, const AnchorSet& anchors, const EpochSchedule& sched);

/// First-order map from differential errors to the linear-system errors, evaluated at the
/// state theta = (p, v) and the measured differentials.
MatX error_jacobian(const Eigen::Matrix<double, 6, 1>& theta, const VecX& eta_d, const AnchorSet& anchors,
                    const EpochSchedule& sched);

enum class StateStage { Coarse, Refined };

struct StateFlags {
    bool weight_floored = false;  ///< a weight matrix needed an eigenvalue floor
    bool diverged = false;        ///< refinement diverged; the coarse estimate was returned
};

struct StateEstimate {
    Eigen::Matrix<double, 6, 1> theta = Eigen::Matrix<double, 6, 1>::Zero();
    Eigen::Matrix<double, 8, 1> xi = Eigen::Matrix<double, 8, 1>::Zero();
    MatX covariance;  ///< 6 x 6 for the coarse stage, 8 x 8 after refinement
    StateStage stage = StateStage::Coarse;
    int iterations = 0;
    StateFlags flags;

    UEState ue() const { return UEState::from_xi(xi); }
};

struct WlsOptions {
    int max_iter = 10;
    double tol = 1e-6;
};

/// Iterated WLS on the differential system. Throws InfeasibleError when Phi_hat has rank below 6.
StateEstimate wls_coarse(const DiffSystem& sys, const AnchorSet& anchors, const EpochSchedule& sched,
                         const WlsOptions& opt = {});
/// Same, with the weight scaled by a positive constant (the estimate does not change).
StateEstimate wls_coarse_scaled(const DiffSystem& sys, const AnchorSet& anchors, const EpochSchedule& sched,
                                double weight_scale, const WlsOptions& opt = {});

/// Weighted LS fit of (B, D) to the range and rate residuals left by theta.
Vec2 clock_init(const Eigen::Matrix<double, 6, 1>& theta, const MeasurementSet& m, const AnchorSet& anchors,
                const EpochSchedule& sched);

struct GaussNewtonOptions {
    int max_iter = 20;
    double tol = 1e-8;
    int max_halvings = 30;
};

/// Stacked noise-free channel parameters h(xi).
VecX measurement_function(const Eigen::Matrix<double, 8, 1>& xi, const AnchorSet& anchors, const EpochSchedule& sched);

/// WLS iterations on the per-epoch model starting from init_xi. Angle residuals are wrapped.
StateEstimate gauss_newton_refine(const MeasurementSet& m, const Eigen::Matrix<double, 8, 1>& init_xi,
                                  const AnchorSet& anchors, const EpochSchedule& sched,
                                  const GaussNewtonOptions& opt = {});

struct StateEstimatePair {
    StateEstimate coarse;
    StateEstimate refined;
};

/// Linear coarse stage, clock initialization, then refinement.
StateEstimatePair solve_state(const MeasurementSet& m, const AnchorSet& anchors, const EpochSchedule& sched,
                              const WlsOptions& wopt = {}, const GaussNewtonOptions& gopt = {});

}  // namespace rislocate
