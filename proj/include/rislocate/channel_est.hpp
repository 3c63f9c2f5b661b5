#pragma once

#include "rislocate/signal.hpp"
#include "rislocate/tensor.hpp"

#include <functional>
#include <vector>

namespace rislocate {

// ---------------------------------------------------------------------------
// One-dimensional correlation maximization

/// Writes the atom a(omega) and its derivative da/domega.
using AtomFn = std::function<void(double omega, CVecX& a, CVecX& da)>;

struct PeakResult {
    double omega = 0.0;
    double peak = 0.0;  ///< normalized correlation in [0, 1]
};

/// |u^H a| / (|u| |a|).
double normalized_correlation(const CVecX& u, const CVecX& a);

/// Maximizes the normalized correlation over (lo, hi]: uniform grid of `grid` points,
/// then a bracketed root solve of the derivative around the best node. The returned
/// frequency is folded back into (lo, hi] by the interval width.
PeakResult maximize_correlation(const CVecX& u, const AtomFn& atom, double lo, double hi, int grid);

/// Grid size giving 4x oversampling of the natural resolution 2 pi / L over an interval.
int oversampled_grid(int L, double width);

/// Atom a(omega) = diag(w) * [1, e^{j s omega}, ...]; weights of all ones give a plain Vandermonde atom.
AtomFn weighted_vandermonde_atom(const CVecX& weights, double scale = 1.0);

enum class SearchBackend { Grid, PolynomialRoots };

/// Maximizes |u^H diag(w) v(z)| over the unit circle by rooting the derivative polynomial.
/// Returns the generator angle in (-pi, pi].
PeakResult maximize_by_rooting(const CVecX& u, const CVecX& weights);

/// Correlation maximizer for atoms diag(w) a^(L)(s*omega) over the interval (lo, hi],
/// dispatching to the requested backend.
PeakResult maximize_weighted(const CVecX& u, const CVecX& weights, double scale, double lo, double hi,
                             SearchBackend backend);

// ---------------------------------------------------------------------------
// Stage I

/// Normalized correlation below this marks a factor column as unreliable.
inline constexpr double kUnreliablePeak = 0.2;

struct ChannelFlags {
    bool unreliable_factor = false;
    bool doppler_edge = false;       ///< a Doppler estimate sits at the ambiguity boundary
    bool el_out_of_domain = false;   ///< |e_xy| > 1 was clamped
    bool als_regularized = false;
    bool mle_regularized = false;
    bool mle_failed = false;
    bool degenerate = false;

    bool failed() const { return degenerate || mle_failed; }
};

struct DelayEstimate {
    double omega_d1 = 0.0;
    double omega_d2 = 0.0;
    int direct_col = 0;  ///< column of U1 assigned to the direct link
    double peak_direct = 0.0;
    double peak_cascaded = 0.0;
    bool unreliable = false;
};

/// Delay frequencies of both U1 columns in (-2 pi, 0]; the column with the shorter
/// implied distance is the direct link.
DelayEstimate estimate_delay_freqs(const CMatX& U1, SearchBackend backend = SearchBackend::Grid);

/// Direct-link Doppler from its mode-2 column; omega in (-pi/G2, pi/G2].
PeakResult estimate_omega_r1(const CVecX& u21, int G2, SearchBackend backend = SearchBackend::Grid);
/// Same quantity from the mode-3 column (used only for comparison).
PeakResult estimate_omega_r1_mode3(const CVecX& u31, int G2);

/// True when G2*omega lies within pi/(4 G1) of the Doppler ambiguity boundary.
bool doppler_near_edge(double omega, int G1, int G2);

/// Transformed-space ESPRIT: x-frequency of the cascaded mode-2 column given a Doppler candidate.
/// Throws ConfigError when G1 < 2 or too few rows survive the nuisance projection.
double ts_esprit_aod_x(const CVecX& u22, double omega_r2, const SystemModel& sys);

/// Doppler of the cascaded link by 1D search over (-pi/G2, pi/G2] with the x-frequency from
/// TS-ESPRIT plugged in; 512-point grid and a Brent polish to 1e-8.
PeakResult estimate_omega_r2(const CVecX& u22, const SystemModel& sys);
/// Polished local maxima of the same search, strongest first, at most max_candidates.
std::vector<PeakResult> omega_r2_candidates(const CVecX& u22, const SystemModel& sys, int max_candidates);
/// Objective of that search at one candidate.
double omega_r2_objective(const CVecX& u22, double omega_r2, const SystemModel& sys);

struct AodEstimate {
    PeakResult x;
    PeakResult y;
};

AodEstimate estimate_aods(const CVecX& u22, const CVecX& u32, double omega_r2, const SystemModel& sys);

struct JadeEstimate {
    double omega_r2 = 0.0;
    double omega_phi_x = 0.0;
    double omega_phi_y = 0.0;
    double peak_r2 = 0.0;
    double peak_x = 0.0;
    double peak_y = 0.0;
};

/// One round of alternating refinement: Doppler with the x-steering held fixed, then both AODs.
JadeEstimate refine_once(const CVecX& u22, const CVecX& u32, double omega_phi_x, const SystemModel& sys);

/// Maps angular frequencies to channel parameters. The elevation magnitude comes from
/// |e_xy| and its sign from the configured hemisphere.
EpochParams params_from_frequencies(const AngularFrequencies& af, const SystemModel& sys, bool* out_of_domain = nullptr);

// ---------------------------------------------------------------------------
// Full per-snapshot estimator

enum class Stage { Coarse, Refined };

struct ChannelEstimate {
    EpochParams params;
    cplx alpha_L{0.0, 0.0};
    cplx alpha_R2{0.0, 0.0};
    Stage stage = Stage::Coarse;
    ChannelFlags flags;
    AngularFrequencies freqs;
    int als_iterations = 0;
    int mle_iterations = 0;
    double objective = 0.0;  ///< concentrated LS objective at params
};

struct CoarseOptions {
    AlsOptions als;
    SearchBackend backend = SearchBackend::Grid;
    bool refine_round = true;
    int doppler_candidates = 4;  ///< cascaded Doppler peaks scored against the snapshot
};

struct MleOptions {
    int max_iter = 100;
    double grad_tol = 1e-9;  ///< on the gradient of the normalized objective, relative to its value
    double max_condition = 1e12;
};

/// Concentrated LS objective |y - Xi (Xi^H Xi)^-1 Xi^H y|^2 and the gains that attain it.
struct ConcentratedFit {
    double objective = 0.0;
    cplx alpha_L{0.0, 0.0};
    cplx alpha_R2{0.0, 0.0};
    bool regularized = false;
};
ConcentratedFit concentrated_fit(const CMatX& Y, const EpochParams& ep, const SystemModel& sys,
                                 double max_condition = 1e12);

ChannelEstimate coarse_estimate(const CMatX& Y, const SystemModel& sys, const CoarseOptions& opt = {});
ChannelEstimate mle_refine(const CMatX& Y, const ChannelEstimate& coarse, const SystemModel& sys,
                           const MleOptions& opt = {});

struct ChannelEstimatePair {
    ChannelEstimate coarse;
    ChannelEstimate refined;
};

/// Stage I then Stage II on one snapshot. A degenerate decomposition yields a failed pair.
ChannelEstimatePair estimate_channel(const CMatX& Y, const SystemModel& sys, const CoarseOptions& copt = {},
                                     const MleOptions& mopt = {});

/// Noise-free channel matrix H = Y / x for given parameters and gains.
CMatX channel_matrix(const SystemModel& sys, const EpochParams& ep, cplx alpha_L, cplx alpha_R2);

}  // namespace rislocate
