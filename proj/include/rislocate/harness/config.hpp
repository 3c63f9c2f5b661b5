#pragma once

#include "rislocate/types.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace rislocate::harness {

enum class NoiseModel { None, Snr, Thermal };
enum class MeasurementSource { Pipeline, Gaussian };
enum class SweepAxis { None, SnrDb, Snapshots, PilotSubcarriers, PilotSymbols, PAddDbm };

const char* to_string(NoiseModel m);
const char* to_string(MeasurementSource s);
const char* to_string(SweepAxis a);

struct ExperimentConfig {
    // [scenario]
    Vec3 bs{30, 30, 0};
    Vec3 ris{0, 0, 0};
    Vec3 ris_rotation_deg{0, 0, 0};  ///< yaw, pitch, roll
    Vec3 ue_position{-25, 42, -15};
    Vec3 ue_velocity{-25, 25, 0};
    double clock_bias_ns = 100.0;
    double clock_drift_ppm = 0.5;
    int snapshots = 3;
    double interval_s = 0.2;
    int el_sign = 1;

    // [ofdm]
    double bandwidth_hz = 240e6;
    int total_subcarriers = 200;
    int pilot_subcarriers = 32;
    int g1 = 4;
    int g2 = 4;
    double carrier_hz = 28e9;

    // [ris]
    int mx = 8;
    int my = 8;
    double spacing_wavelengths = 0.2;
    bool active = true;
    double eta = 3000.0;  ///< 0 selects the power-budget rule

    // [noise]
    NoiseModel noise = NoiseModel::Snr;
    double snr_db = 15.0;
    double sigma_ratio = 1.0;  ///< sigma_R / sigma_U
    double tx_power_dbm = 20.0;
    double ris_power_dbm = 20.0;
    double noise_psd_dbm_hz = -174.0;
    double noise_figure_db = 0.0;

    // [estimator]
    bool polynomial_roots = false;
    bool refine_round = true;
    MeasurementSource measurements = MeasurementSource::Pipeline;

    // [sweep]
    SweepAxis axis = SweepAxis::None;
    std::vector<double> values;

    // [run]
    int trials = 200;
    std::uint64_t seed = 1;
    int threads = 0;  ///< 0 uses the OpenMP default
    std::string output = "results.csv";
    double failure_threshold = 0.05;

    /// Canonical `section.key = value` text; equal configs give equal text.
    std::string canonical() const;
};

/// One `key = value` with the place it came from, for error messages.
struct ConfigEntry {
    std::string section;
    std::string key;
    std::string value;
    std::string origin;  ///< "file:line" or "--flag"
};

/// Parses INI-style text: `[section]` headers, `key = value` lines, `#` or `;` comments.
/// Throws ConfigError naming the origin of the first malformed line.
std::vector<ConfigEntry> parse_ini(const std::string& text, const std::string& source);
std::vector<ConfigEntry> read_ini_file(const std::string& path);

/// Applies entries in order (later entries win). Every problem is collected and reported
/// in a single ConfigError, one line per problem, each prefixed by its origin.
void apply_entries(ExperimentConfig& cfg, const std::vector<ConfigEntry>& entries);

/// Cross-field checks; throws ConfigError listing all violations.
void validate(const ExperimentConfig& cfg);

/// Defaults, then the given overrides, then the file when a path is given.
ExperimentConfig load_config(const std::string& path, const std::vector<ConfigEntry>& overrides = {});

/// FNV-1a 64-bit hash.
std::uint64_t fnv1a(const std::string& s);

}  // namespace rislocate::harness
