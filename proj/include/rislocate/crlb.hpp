#pragma once

#include "rislocate/signal.hpp"

#include <vector>

namespace rislocate {

// ---------------------------------------------------------------------------
// Channel domain

/// Number of real parameters per epoch in the channel model: six geometric plus two complex gains.
inline constexpr int kChannelParams = 10;

/// Complex derivatives of vec(Y) (column-major, K*G rows) with respect to
/// (d1, d2, r1, r2, az, el, Re aL, Im aL, Re aR2, Im aR2).
CMatX jacobian_channel(const SystemModel& sys, const EpochParams& ep, cplx alpha_L, cplx alpha_R2);

/// [Re J; Im J].
MatX real_stack(const CMatX& J);

/// Inverse after symmetric diagonal scaling; falls back to a pseudo-inverse when the
/// scaled matrix is numerically singular and reports that through `singular`.
MatX equilibrated_inverse(const MatX& A, bool* singular = nullptr, double rcond = 1e-13);

struct ChannelFim {
    MatX full;   ///< 10 x 10
    MatX equiv;  ///< 6 x 6 after eliminating the gains
    bool nuisance_singular = false;
};

/// FIM of one epoch for circular Gaussian noise of variance sigma_n2 per entry.
ChannelFim fim_channel(const CMatX& J, double sigma_n2);

struct ChannelCrlb {
    ChannelFim fim;
    MatX cov;   ///< inverse of the equivalent FIM
    VecX crlb;  ///< its diagonal
    bool singular = false;
};

ChannelCrlb channel_crlb(const SystemModel& sys, const EpochParams& ep, cplx alpha_L, cplx alpha_R2, double sigma_n2);

// ---------------------------------------------------------------------------
// State domain

/// d eta / d xi for all epochs, 6N x 8, rows (d1, d2, r1, r2, az, el) per epoch.
MatX jacobian_state(const UEState& ue, const AnchorSet& anchors, const EpochSchedule& sched);
/// Differential model (d12, r12, az, el) per epoch with respect to (p, v), 4N x 6.
MatX jacobian_dmm(const UEState& ue, const AnchorSet& anchors, const EpochSchedule& sched);
/// Direct link only, (d1, r1) per epoch with respect to xi, 2N x 8.
MatX jacobian_direct_only(const UEState& ue, const AnchorSet& anchors, const EpochSchedule& sched);

/// Linear map from stacked channel errors (6N) to differential errors (4N).
MatX dmm_transform(int N);

struct StateBound {
    MatX fim;
    MatX cov;
    VecX crlb;
    double peb = 0.0;  ///< sum of the position variances, m^2
    double veb = 0.0;  ///< sum of the velocity variances, (m/s)^2
    bool singular = false;
};

/// Bound from a parameter Jacobian and measurement information: Jt Omega J.
StateBound fim_state(const MatX& J, const MatX& omega_eta);
/// Bound from the differential model with differential covariance Sigma_d.
StateBound fim_dmm(const MatX& Jd, const MatX& sigma_d);

/// Block-diagonal assembly of per-epoch matrices.
MatX block_diagonal(const std::vector<MatX>& blocks);

/// All bounds for one scenario.
struct ScenarioBound {
    std::vector<ChannelCrlb> epochs;
    MatX omega_eta;  ///< 6N x 6N
    MatX sigma_eta;  ///< its inverse, block by block
    MatX sigma_d;    ///< 4N x 4N
    StateBound omm;  ///< 8 x 8 in xi
    StateBound dmm;  ///< 6 x 6 in theta
};

ScenarioBound scenario_bound(const UEState& ue, const SystemModel& sys, const EpochSchedule& sched,
                             const PathGains& gains, const std::vector<double>& sigma_n2);

// ---------------------------------------------------------------------------
// Observability

/// Rank from singular values with threshold rel_tol * sigma_max.
int numerical_rank(const MatX& A, double rel_tol = 1e-8);

struct RankReport {
    int rank_direct_only = 0;  ///< rank of the BS-only Jacobian
    int rank_full = 0;         ///< rank with RIS rows
    VecX sv_direct_only;
    VecX sv_full;
};

RankReport rank_analysis(const UEState& ue, const AnchorSet& anchors, const EpochSchedule& sched);

}  // namespace rislocate
