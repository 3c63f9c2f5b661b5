#include "rislocate/harness/config.hpp"
#include "rislocate/harness/experiment.hpp"
#include "rislocate/harness/output.hpp"
#include "rislocate/harness/trial_runner.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <sstream>

using namespace rislocate;
using namespace rislocate::harness;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitFailureRate = 3;

struct Flag {
    const char* name;
    const char* section;
    const char* key;
    const char* help;
};

// Every ExperimentConfig field has a flag; values use the config-file syntax.
const Flag kFlags[] = {
    {"--bs", "scenario", "bs", "BS position x,y,z (m)"},
    {"--ris", "scenario", "ris", "RIS position x,y,z (m)"},
    {"--ris-rotation-deg", "scenario", "ris_rotation_deg", "RIS yaw,pitch,roll (deg)"},
    {"--ue-position", "scenario", "ue_position", "UE position at the first snapshot x,y,z (m)"},
    {"--ue-velocity", "scenario", "ue_velocity", "UE velocity x,y,z (m/s)"},
    {"--clock-bias-ns", "scenario", "clock_bias_ns", "clock bias (ns)"},
    {"--clock-drift-ppm", "scenario", "clock_drift_ppm", "clock drift (ppm)"},
    {"--snapshots", "scenario", "snapshots", "number of snapshots N"},
    {"--interval-s", "scenario", "interval_s", "snapshot spacing (s)"},
    {"--el-sign", "scenario", "el_sign", "hemisphere of the UE seen from the panel, 1 or -1"},
    {"--bandwidth-hz", "ofdm", "bandwidth_hz", "system bandwidth (Hz)"},
    {"--total-subcarriers", "ofdm", "total_subcarriers", "subcarriers across the bandwidth"},
    {"--pilot-subcarriers", "ofdm", "pilot_subcarriers", "pilot subcarriers K"},
    {"--g1", "ofdm", "g1", "symbols per mode-2 block"},
    {"--g2", "ofdm", "g2", "mode-2 blocks"},
    {"--carrier-hz", "ofdm", "carrier_hz", "carrier frequency (Hz)"},
    {"--mx", "ris", "mx", "panel columns"},
    {"--my", "ris", "my", "panel rows"},
    {"--spacing-wavelengths", "ris", "spacing_wavelengths", "element spacing in wavelengths"},
    {"--mode", "ris", "mode", "active or passive"},
    {"--eta", "ris", "eta", "amplitude gain, or 'budget'"},
    {"--noise", "noise", "model", "none, snr or thermal"},
    {"--snr-db", "noise", "snr_db", "target SNR (dB)"},
    {"--sigma-ratio", "noise", "sigma_ratio", "RIS to receiver noise std ratio"},
    {"--tx-power-dbm", "noise", "tx_power_dbm", "BS transmit power (dBm)"},
    {"--ris-power-dbm", "noise", "ris_power_dbm", "RIS amplifier power (dBm)"},
    {"--noise-psd-dbm-hz", "noise", "noise_psd_dbm_hz", "noise density (dBm/Hz)"},
    {"--noise-figure-db", "noise", "noise_figure_db", "receiver noise figure (dB)"},
    {"--backend", "estimator", "backend", "grid or roots"},
    {"--refine-round", "estimator", "refine_round", "true or false"},
    {"--measurements", "estimator", "measurements", "pipeline or gaussian"},
    {"--axis", "sweep", "axis", "none, snr_db, snapshots, pilot_subcarriers, pilot_symbols, p_add_dbm"},
    {"--values", "sweep", "values", "comma-separated sweep values"},
    {"--trials", "run", "trials", "Monte-Carlo trials per sweep value"},
    {"--seed", "run", "seed", "run seed"},
    {"--threads", "run", "threads", "worker threads, 0 for the OpenMP default"},
    {"--output", "run", "output", "output CSV path"},
    {"--failure-threshold", "run", "failure_threshold", "failure rate that triggers exit code 3"},
};

std::string manifest_path(const std::string& csv) { return csv + ".manifest.json"; }

void emit(const ExperimentConfig& cfg, const std::string& verb, const std::string& csv) {
    write_file(cfg.output, csv);
    std::ostringstream m;
    write_manifest(m, cfg, verb, cfg.output, cfg.threads);
    write_file(manifest_path(cfg.output), m.str());
}

int failure_exit(double rate, const ExperimentConfig& cfg) {
    if (rate > cfg.failure_threshold) {
        std::fprintf(stderr, "estimation failure rate %.4f exceeds run.failure_threshold %.4f\n", rate,
                     cfg.failure_threshold);
        return kExitFailureRate;
    }
    return 0;
}

int cmd_monte_carlo(ExperimentConfig cfg, const std::string& verb) {
    if (verb == "simulate") {
        cfg.axis = SweepAxis::None;
        cfg.values.clear();
    }
    const SweepTable t = run_sweep(cfg);
    std::ostringstream os;
    write_metrics_csv(os, t, cfg.active ? "active" : "passive");
    emit(cfg, verb, os.str());
    double worst = 0.0;
    for (const MetricsRow& r : t.rows) worst = std::max(worst, r.failure_rate());
    return failure_exit(worst, cfg);
}

int cmd_estimate(const ExperimentConfig& cfg) {
    const Scenario sc = resolve(cfg);
    const auto results = run_trials_parallel(sc, cfg.seed, cfg.trials, cfg.threads);
    std::ostringstream os;
    write_channel_estimates_csv(os, results);
    emit(cfg, "estimate", os.str());
    int failed = 0;
    for (const TrialResult& r : results) failed += r.channel_failed ? 1 : 0;
    return failure_exit(double(failed) / cfg.trials, cfg);
}

int cmd_solve(ExperimentConfig cfg, const std::string& input, const std::string& covariance) {
    MeasurementSet m{read_measurement_csv(input), read_matrix_file(covariance)};
    cfg.snapshots = m.epochs();
    const Scenario sc = resolve(cfg);
    m.validate();
    std::ostringstream os;
    try {
        const StateEstimatePair est = solve_state(m, sc.sys.anchors, sc.sched);
        write_state_csv(os, est);
        emit(cfg, "solve", os.str());
        return failure_exit(est.refined.flags.diverged ? 1.0 : 0.0, cfg);
    } catch (const InfeasibleError& e) {
        std::fprintf(stderr, "solve failed: %s\n", e.what());
        return failure_exit(1.0, cfg);
    }
}

int cmd_crlb(const ExperimentConfig& cfg) {
    std::ostringstream os;
    if (cfg.axis == SweepAxis::PAddDbm) write_bounds_csv(os, cfg.axis, compare_ris_modes(cfg, cfg.values));
    else write_bounds_csv(os, cfg.axis, bound_sweep(cfg));
    emit(cfg, "crlb", os.str());
    return 0;
}

int cmd_rank(const ExperimentConfig& cfg, int scenarios, int max_n) {
    std::ostringstream os;
    write_rank_csv(os, rank_suite_parallel(cfg.seed, scenarios, max_n, cfg.threads));
    emit(cfg, "rank-check", os.str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Joint position and velocity estimation with one BS and one RIS"};
    app.require_subcommand(1, 1);
    app.fallthrough();

    std::string config_path;
    app.add_option("-c,--config", config_path, "config file; its entries override flags")->check(CLI::ExistingFile);
    std::vector<std::string> flag_values(std::size(kFlags));
    for (std::size_t i = 0; i < std::size(kFlags); ++i) app.add_option(kFlags[i].name, flag_values[i], kFlags[i].help);

    auto* simulate = app.add_subcommand("simulate", "Monte-Carlo at the base config");
    auto* estimate = app.add_subcommand("estimate", "per-trial channel estimates");
    auto* solve = app.add_subcommand("solve", "state from a measurement CSV and covariance file");
    auto* crlb = app.add_subcommand("crlb", "bounds only, optionally swept");
    auto* sweep = app.add_subcommand("sweep", "Monte-Carlo over sweep.axis");
    auto* rank = app.add_subcommand("rank-check", "Jacobian rank suite");

    std::string input, covariance;
    solve->add_option("--input", input, "epoch,d1,d2,r1,r2,phi_az,phi_el rows")->required()->check(CLI::ExistingFile);
    solve->add_option("--covariance", covariance, "6N x 6N covariance")->required()->check(CLI::ExistingFile);
    int scenarios = 1000, max_n = 8;
    rank->add_option("--scenarios", scenarios, "random scenarios per N")->check(CLI::PositiveNumber);
    rank->add_option("--max-n", max_n, "largest snapshot count")->check(CLI::Range(1, 64));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        std::vector<ConfigEntry> overrides;
        for (std::size_t i = 0; i < std::size(kFlags); ++i)
            if (app.count(kFlags[i].name) > 0)
                overrides.push_back({kFlags[i].section, kFlags[i].key, flag_values[i], kFlags[i].name});
        const ExperimentConfig cfg = load_config(config_path, overrides);

        if (*simulate) return cmd_monte_carlo(cfg, "simulate");
        if (*sweep) return cmd_monte_carlo(cfg, "sweep");
        if (*estimate) return cmd_estimate(cfg);
        if (*solve) return cmd_solve(cfg, input, covariance);
        if (*crlb) return cmd_crlb(cfg);
        if (*rank) return cmd_rank(cfg, scenarios, max_n);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error:\n%s\n", e.what());
        return kExitConfig;
    } catch (const GeometryError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
