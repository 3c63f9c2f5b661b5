#pragma once

#include "rislocate/channel_est.hpp"
#include "rislocate/crlb.hpp"
#include "rislocate/harness/config.hpp"
#include "rislocate/jpve.hpp"

#include <array>
#include <cstdint>
#include <random>
#include <vector>

namespace rislocate::harness {

inline constexpr std::array<const char*, 6> kChannelNames = {"d1", "d2", "r1", "r2", "phi_az", "phi_el"};
inline constexpr std::array<const char*, 8> kStateNames = {"px", "py", "pz", "vx", "vy", "vz", "B", "D"};

/// A configuration turned into model objects, ready for trials.
struct Scenario {
    SystemModel sys;
    UEState ue;
    EpochSchedule sched;
    ChannelParams truth;
    NoiseModel noise = NoiseModel::Snr;
    double snr_db = 15.0;
    double sigma_ratio = 1.0;
    NoiseLevels thermal;  ///< fixed levels under the thermal model
    /// When set, replaces the per-trial noise with fixed levels (used for nested schedules).
    bool fixed_noise = false;
    NoiseLevels fixed;
    MeasurementSource source = MeasurementSource::Pipeline;
    CoarseOptions coarse;
};

/// Linear power in mW from dBm.
double dbm_to_mw(double dbm);

/// Builds the system, truth and noise model. Throws ConfigError for invalid or ambiguous setups.
Scenario resolve(const ExperimentConfig& cfg);

/// Independent generator for one (trial, stream) pair under a run seed.
std::mt19937_64 trial_rng(std::uint64_t seed, int trial, int stream);

/// Noise levels of one trial given its gains and noise-free snapshots.
NoiseLevels trial_noise(const Scenario& sc, const PathGains& gains, const std::vector<CMatX>& signals);

/// NMSE of one channel matrix estimate; throws DegeneracyError on a zero-norm truth.
double nmse(const CMatX& H_hat, const CMatX& H);

struct EpochOutcome {
    EpochParams coarse;
    EpochParams refined;
    double nmse_coarse = 0.0;
    double nmse_refined = 0.0;
    VecX crlb;  ///< 6 channel variances at the truth
    bool failed = false;
};

struct TrialResult {
    std::vector<EpochOutcome> epochs;
    Eigen::Matrix<double, 6, 1> theta_coarse = Eigen::Matrix<double, 6, 1>::Zero();
    Eigen::Matrix<double, 8, 1> xi_refined = Eigen::Matrix<double, 8, 1>::Zero();
    VecX omm_crlb;  ///< 8 state variances
    VecX dmm_crlb;  ///< 6 state variances
    bool channel_failed = false;
    bool state_failed = false;
    bool failed() const { return channel_failed || state_failed; }
};

/// One Monte-Carlo trial: synthesize, estimate the channel, solve the state, and record
/// errors next to the truth bounds. Estimator failures are flagged, never thrown.
TrialResult run_trial(const Scenario& sc, std::uint64_t seed, int trial);

struct MetricsRow {
    double sweep_value = 0.0;
    int trials = 0;
    int failures = 0;
    std::array<double, 6> channel_rmse_coarse{};
    std::array<double, 6> channel_rmse_refined{};
    std::array<double, 6> channel_crlb{};  ///< root of the mean bound variance
    double nmse_coarse = 0.0;
    double nmse_refined = 0.0;
    std::array<double, 6> state_rmse_coarse{};
    std::array<double, 8> state_rmse_refined{};
    std::array<double, 8> omm_crlb{};
    std::array<double, 6> dmm_crlb{};
    double peb = 0.0;  ///< root of the OMM position-variance trace
    double veb = 0.0;
    double position_rmse_refined = 0.0;
    double velocity_rmse_refined = 0.0;

    double failure_rate() const { return trials ? double(failures) / trials : 0.0; }
};

/// Reduces trials in index order. Failed trials count only toward `failures`.
MetricsRow aggregate(const std::vector<TrialResult>& results, const Scenario& sc, double sweep_value);

/// Config with one sweep value applied.
ExperimentConfig at_sweep_value(const ExperimentConfig& cfg, double value);

struct SweepTable {
    SweepAxis axis = SweepAxis::None;
    std::vector<MetricsRow> rows;
};

/// Monte-Carlo over every sweep value (or the base config when there is no axis) on
/// cfg.threads workers. Trials of different sweep values share their random streams, so
/// neighbouring rows are paired.
SweepTable run_sweep(const ExperimentConfig& cfg);

struct BoundRow {
    double sweep_value = 0.0;
    std::string mode;  ///< "active" or "passive"
    std::array<double, 6> channel_crlb{};  ///< averaged over epochs
    std::array<double, 8> omm_crlb{};
    std::array<double, 6> dmm_crlb{};
    double peb = 0.0;
    double veb = 0.0;
};

/// Truth bounds for a scenario with gains drawn from the run seed.
BoundRow scenario_bounds(const Scenario& sc, std::uint64_t seed);

/// Bounds for every sweep value. For a snapshot-count axis the schedules are nested and the
/// noise is held at the level calibrated on the longest schedule.
std::vector<BoundRow> bound_sweep(const ExperimentConfig& cfg);

/// Active and passive panels at each P_add (dBm) under matched total power.
std::vector<BoundRow> compare_ris_modes(const ExperimentConfig& cfg, const std::vector<double>& p_add_dbm);

}  // namespace rislocate::harness
