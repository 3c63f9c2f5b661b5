#pragma once

#include "rislocate/geometry.hpp"

#include <limits>
#include <random>
#include <vector>

namespace rislocate {

/// Pilot grid of one frame. Pilots sit on the first K subcarriers and the first G symbols.
struct OfdmConfig {
    int K = 32;
    int G1 = 4;
    int G2 = 4;
    double delta_f = 1.2e6;
    double delta_t = 1.0 / 1.2e6;
    double fc = 28e9;
    cplx pilot{1.0, 0.0};

    int G() const { return G1 * G2; }
    double lambda() const { return kSpeedOfLight / fc; }
    /// Largest pseudorange that does not alias in the subcarrier phase.
    double max_range() const { return kSpeedOfLight / delta_f; }
    /// Largest |pseudorange rate| that does not alias in the mode-2 symbol phase.
    double max_rate() const { return lambda() / (2.0 * delta_t * G2); }
    /// Throws ConfigError on nonpositive sizes or G1, G2 < 2.
    void validate() const;

    /// Spacing bandwidth/K_total and symbol duration 1/spacing (no cyclic prefix).
    static OfdmConfig from_bandwidth(double bandwidth_hz, int k_total, int K, int G1, int G2, double fc_hz);
};

struct RisConfig {
    int Mx = 8;
    int My = 8;
    double delta_s = 0.0;  ///< element spacing, m
    double eta = 1.0;      ///< amplitude gain applied to every element
    bool active = true;

    int M() const { return Mx * My; }
    void validate() const;
};

struct NoiseLevels {
    double sigma_U = 0.0;
    double sigma_R = 0.0;
};

/// Per-epoch complex path gains; alpha_R1 (BS-RIS) is known and common to all epochs.
struct PathGains {
    std::vector<cplx> alpha_L;
    std::vector<cplx> alpha_R2;
    cplx alpha_R1{0.0, 0.0};
};

/// Everything about the radio setup that an estimator is allowed to know.
struct SystemModel {
    AnchorSet anchors;
    OfdmConfig ofdm;
    RisConfig ris;
    cplx alpha_R1{1.0, 0.0};
    /// Sign of the RIS departure elevation; a planar panel cannot observe it.
    int el_sign = 1;
    CMatX psi_x;    ///< Mx x G1
    CMatX psi_y;    ///< My x G2
    CMatX profile;  ///< G x M, equals eta * kron(psi_x^H, psi_y^H)
    Eigen::MatrixXd positions;  ///< M x 3 element coordinates in the panel frame

    static SystemModel make(const AnchorSet& anchors, const OfdmConfig& ofdm, const RisConfig& ris, cplx alpha_R1);
    void validate() const;

    double d0() const { return anchors.d0(); }
    double lambda() const { return ofdm.lambda(); }
    int K() const { return ofdm.K; }
    int G() const { return ofdm.G(); }
    int M() const { return ris.M(); }
};

/// [Psi]_{m,g} = exp(j m 2 pi g / cols), 0-based indices.
CMatX psi_matrix(int rows, int cols);
/// Scaled Kronecker profile eta * (Psi_x^H kron Psi_y^H); G x M.
CMatX design_ris_profile(const RisConfig& ris, const OfdmConfig& ofdm);
/// Element positions; row My*mx + my is (mx*ds, my*ds, 0).
Eigen::MatrixXd ris_positions(int Mx, int My, double delta_s);

/// a^(L)(omega) = [1, e^{j omega}, ..., e^{j (L-1) omega}].
CVecX vandermonde(int L, double omega);
/// a_R(phi) for the panel positions.
CVecX array_response(const Eigen::MatrixXd& positions, double lambda, const Vec2& phi);

/// Angular frequencies of the six channel parameters under a given system.
struct AngularFrequencies {
    double omega_d1 = 0.0;
    double omega_d2 = 0.0;
    double omega_r1 = 0.0;
    double omega_r2 = 0.0;
    double omega_phi_x = 0.0;
    double omega_phi_y = 0.0;
};

/// psi = e_xy(phi_A) + e_xy(phi).
Vec2 psi_xy(const AnchorSet& anchors, const Vec2& phi);
AngularFrequencies frequencies_of(const SystemModel& sys, const EpochParams& ep);

/// RIS factor rho^(g) = (Upsilon * (a_R(phi_A) .* a_R(phi)))_g.
CVecX ris_factor(const SystemModel& sys, const Vec2& phi);

/// Throws ConfigError when a delay (d1 or d0 + d2) leaves [0, c/df) or a rate leaves the
/// Doppler window (-max_rate, max_rate).
void check_unambiguous(const SystemModel& sys, const ChannelParams& params);

struct NoiselessSnapshot {
    CMatX Y_L;
    CMatX Y_R;
    CMatX total() const { return Y_L + Y_R; }
};

/// Noise-free K x G pilot observation for one epoch.
NoiselessSnapshot noiseless_snapshot(const SystemModel& sys, const EpochParams& ep, cplx alpha_L, cplx alpha_R2);

struct ReceivedSnapshot {
    CMatX Y;
    CMatX signal;  ///< noise-free part, kept for SNR and NMSE bookkeeping
    double sigma_n2 = 0.0;
    int epoch = 0;
};

/// sigma_U^2 plus the amplified RIS noise M eta^2 |alpha_R2|^2 sigma_R^2 when the panel is active.
double total_noise_variance(const SystemModel& sys, const NoiseLevels& noise, cplx alpha_R2);

/// Draws one noisy snapshot. The RIS noise term is a sum of M independent circular
/// Gaussians through unit-modulus weights, so it is drawn directly as its exact
/// scalar distribution.
ReceivedSnapshot synthesize_snapshot(const SystemModel& sys, const EpochParams& ep, cplx alpha_L, cplx alpha_R2,
                                     const NoiseLevels& noise, int epoch, std::mt19937_64& rng);
ReceivedSnapshot synthesize_snapshot(const UEState& ue, const SystemModel& sys, const EpochSchedule& sched, int n,
                                     const PathGains& gains, const NoiseLevels& noise, std::uint64_t noise_seed);

/// Circular complex Gaussian with the given per-entry variance.
cplx complex_normal(std::mt19937_64& rng, double variance);

/// SNR over all snapshots in dB; +inf when there is no noise energy.
double snr_db(const std::vector<ReceivedSnapshot>& run);

/// Free-space gains lambda/(4 pi d) with uniform phases per epoch.
PathGains draw_path_gains(const UEState& ue, const AnchorSet& anchors, const EpochSchedule& sched, double lambda,
                          std::mt19937_64& rng);
double free_space_amplitude(double lambda, double distance);

/// sigma_U that makes the expected SNR over the given noise-free snapshots equal to snr_db,
/// with sigma_R = ratio * sigma_U.
double calibrate_sigma_u(const SystemModel& sys, const std::vector<CMatX>& signals,
                         const std::vector<cplx>& alpha_R2, double snr_db, double sigma_ratio);

/// Amplitude gain that spends the RIS power budget on signal plus panel noise:
/// eta^2 = P_R / (M (P_T |alpha_R1|^2 + sigma_R^2)); powers per subcarrier, linear.
double amplification_from_budget(double p_ris, double p_tx, cplx alpha_R1, double sigma_R2, int M);

}  // namespace rislocate
