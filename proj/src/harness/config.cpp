#include "rislocate/harness/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace rislocate::harness {

const char* to_string(NoiseModel m) {
    switch (m) {
        case NoiseModel::None: return "none";
        case NoiseModel::Snr: return "snr";
        case NoiseModel::Thermal: return "thermal";
    }
    return "?";
}

const char* to_string(MeasurementSource s) { return s == MeasurementSource::Pipeline ? "pipeline" : "gaussian"; }

const char* to_string(SweepAxis a) {
    switch (a) {
        case SweepAxis::None: return "none";
        case SweepAxis::SnrDb: return "snr_db";
        case SweepAxis::Snapshots: return "snapshots";
        case SweepAxis::PilotSubcarriers: return "pilot_subcarriers";
        case SweepAxis::PilotSymbols: return "pilot_symbols";
        case SweepAxis::PAddDbm: return "p_add_dbm";
    }
    return "?";
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

bool parse_double(const std::string& s, double& out) {
    const std::string t = trim(s);
    if (t.empty()) return false;
    const auto r = std::from_chars(t.data(), t.data() + t.size(), out);
    return r.ec == std::errc() && r.ptr == t.data() + t.size() && std::isfinite(out);
}

bool parse_int(const std::string& s, long long& out) {
    const std::string t = trim(s);
    if (t.empty()) return false;
    const auto r = std::from_chars(t.data(), t.data() + t.size(), out);
    return r.ec == std::errc() && r.ptr == t.data() + t.size();
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

using Setter = std::function<std::string(ExperimentConfig&, const std::string&)>;

Setter real(double ExperimentConfig::*field) {
    return [field](ExperimentConfig& c, const std::string& v) -> std::string {
        double x;
        if (!parse_double(v, x)) return "expected a number, got '" + v + "'";
        c.*field = x;
        return "";
    };
}

Setter integer(int ExperimentConfig::*field) {
    return [field](ExperimentConfig& c, const std::string& v) -> std::string {
        long long x;
        if (!parse_int(v, x) || x < INT32_MIN || x > INT32_MAX) return "expected an integer, got '" + v + "'";
        c.*field = int(x);
        return "";
    };
}

Setter vec3(Vec3 ExperimentConfig::*field) {
    return [field](ExperimentConfig& c, const std::string& v) -> std::string {
        const auto parts = split_list(v);
        Vec3 x;
        if (parts.size() != 3) return "expected three comma-separated numbers, got '" + v + "'";
        for (int i = 0; i < 3; ++i)
            if (!parse_double(parts[i], x(i))) return "expected a number, got '" + parts[i] + "'";
        c.*field = x;
        return "";
    };
}

Setter boolean(bool ExperimentConfig::*field) {
    return [field](ExperimentConfig& c, const std::string& v) -> std::string {
        if (v == "true" || v == "1" || v == "yes") c.*field = true;
        else if (v == "false" || v == "0" || v == "no") c.*field = false;
        else return "expected true or false, got '" + v + "'";
        return "";
    };
}

template <class E>
Setter choice(E ExperimentConfig::*field, std::vector<std::pair<std::string, E>> options) {
    return [field, options](ExperimentConfig& c, const std::string& v) -> std::string {
        std::string names;
        for (const auto& [name, e] : options) {
            if (v == name) {
                c.*field = e;
                return "";
            }
            names += (names.empty() ? "" : ", ") + name;
        }
        return "expected one of " + names + ", got '" + v + "'";
    };
}

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"scenario.bs", vec3(&ExperimentConfig::bs)},
        {"scenario.ris", vec3(&ExperimentConfig::ris)},
        {"scenario.ris_rotation_deg", vec3(&ExperimentConfig::ris_rotation_deg)},
        {"scenario.ue_position", vec3(&ExperimentConfig::ue_position)},
        {"scenario.ue_velocity", vec3(&ExperimentConfig::ue_velocity)},
        {"scenario.clock_bias_ns", real(&ExperimentConfig::clock_bias_ns)},
        {"scenario.clock_drift_ppm", real(&ExperimentConfig::clock_drift_ppm)},
        {"scenario.snapshots", integer(&ExperimentConfig::snapshots)},
        {"scenario.interval_s", real(&ExperimentConfig::interval_s)},
        {"scenario.el_sign", integer(&ExperimentConfig::el_sign)},
        {"ofdm.bandwidth_hz", real(&ExperimentConfig::bandwidth_hz)},
        {"ofdm.total_subcarriers", integer(&ExperimentConfig::total_subcarriers)},
        {"ofdm.pilot_subcarriers", integer(&ExperimentConfig::pilot_subcarriers)},
        {"ofdm.g1", integer(&ExperimentConfig::g1)},
        {"ofdm.g2", integer(&ExperimentConfig::g2)},
        {"ofdm.carrier_hz", real(&ExperimentConfig::carrier_hz)},
        {"ris.mx", integer(&ExperimentConfig::mx)},
        {"ris.my", integer(&ExperimentConfig::my)},
        {"ris.spacing_wavelengths", real(&ExperimentConfig::spacing_wavelengths)},
        {"ris.mode", choice<bool>(&ExperimentConfig::active, {{"active", true}, {"passive", false}})},
        {"ris.eta", [](ExperimentConfig& c, const std::string& v) -> std::string {
             if (v == "budget") {
                 c.eta = 0.0;
                 return "";
             }
             return real(&ExperimentConfig::eta)(c, v);
         }},
        {"noise.model", choice<NoiseModel>(&ExperimentConfig::noise, {{"none", NoiseModel::None},
                                                                       {"snr", NoiseModel::Snr},
                                                                       {"thermal", NoiseModel::Thermal}})},
        {"noise.snr_db", real(&ExperimentConfig::snr_db)},
        {"noise.sigma_ratio", real(&ExperimentConfig::sigma_ratio)},
        {"noise.tx_power_dbm", real(&ExperimentConfig::tx_power_dbm)},
        {"noise.ris_power_dbm", real(&ExperimentConfig::ris_power_dbm)},
        {"noise.noise_psd_dbm_hz", real(&ExperimentConfig::noise_psd_dbm_hz)},
        {"noise.noise_figure_db", real(&ExperimentConfig::noise_figure_db)},
        {"estimator.backend", choice<bool>(&ExperimentConfig::polynomial_roots, {{"grid", false}, {"roots", true}})},
        {"estimator.refine_round", boolean(&ExperimentConfig::refine_round)},
        {"estimator.measurements",
         choice<MeasurementSource>(&ExperimentConfig::measurements,
                                   {{"pipeline", MeasurementSource::Pipeline}, {"gaussian", MeasurementSource::Gaussian}})},
        {"sweep.axis", choice<SweepAxis>(&ExperimentConfig::axis, {{"none", SweepAxis::None},
                                                                    {"snr_db", SweepAxis::SnrDb},
                                                                    {"snapshots", SweepAxis::Snapshots},
                                                                    {"pilot_subcarriers", SweepAxis::PilotSubcarriers},
                                                                    {"pilot_symbols", SweepAxis::PilotSymbols},
                                                                    {"p_add_dbm", SweepAxis::PAddDbm}})},
        {"sweep.values", [](ExperimentConfig& c, const std::string& v) -> std::string {
             std::vector<double> xs;
             for (const auto& p : split_list(v)) {
                 double x;
                 if (!parse_double(p, x)) return "expected a number, got '" + p + "'";
                 xs.push_back(x);
             }
             c.values = xs;
             return "";
         }},
        {"run.trials", integer(&ExperimentConfig::trials)},
        {"run.seed", [](ExperimentConfig& c, const std::string& v) -> std::string {
             long long x;
             if (!parse_int(v, x) || x < 0) return "expected a nonnegative integer, got '" + v + "'";
             c.seed = std::uint64_t(x);
             return "";
         }},
        {"run.threads", integer(&ExperimentConfig::threads)},
        {"run.output", [](ExperimentConfig& c, const std::string& v) -> std::string {
             if (v.empty()) return "output path is empty";
             c.output = v;
             return "";
         }},
        {"run.failure_threshold", real(&ExperimentConfig::failure_threshold)},
    };
    return table;
}

}  // namespace

std::vector<ConfigEntry> parse_ini(const std::string& text, const std::string& source) {
    std::vector<ConfigEntry> out;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string origin = source + ":" + std::to_string(lineno);
        const auto hash = line.find_first_of("#;");
        const std::string t = trim(hash == std::string::npos ? line : line.substr(0, hash));
        if (t.empty()) continue;
        if (t.front() == '[') {
            if (t.back() != ']' || t.size() < 3) throw ConfigError(origin + ": malformed section header '" + t + "'");
            section = trim(t.substr(1, t.size() - 2));
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ConfigError(origin + ": expected 'key = value', got '" + t + "'");
        if (section.empty()) throw ConfigError(origin + ": key outside of any [section]");
        const std::string key = trim(t.substr(0, eq));
        if (key.empty()) throw ConfigError(origin + ": empty key");
        out.push_back({section, key, trim(t.substr(eq + 1)), origin});
    }
    return out;
}

std::vector<ConfigEntry> read_ini_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError(path + ": cannot open config file");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_ini(ss.str(), path);
}

void apply_entries(ExperimentConfig& cfg, const std::vector<ConfigEntry>& entries) {
    std::string errors;
    for (const auto& e : entries) {
        const std::string name = e.section + "." + e.key;
        const auto it = setters().find(name);
        if (it == setters().end()) {
            errors += e.origin + ": unknown key '" + e.key + "' in [" + e.section + "]\n";
            continue;
        }
        const std::string err = it->second(cfg, e.value);
        if (!err.empty()) errors += e.origin + ": " + name + ": " + err + "\n";
    }
    if (!errors.empty()) throw ConfigError(errors);
}

void validate(const ExperimentConfig& c) {
    std::string errors;
    auto need = [&](bool ok, const std::string& msg) {
        if (!ok) errors += msg + "\n";
    };
    need(c.snapshots >= 1, "scenario.snapshots must be >= 1");
    need(c.interval_s > 0.0, "scenario.interval_s must be positive");
    need(c.el_sign == 1 || c.el_sign == -1, "scenario.el_sign must be 1 or -1");
    need((c.bs - c.ris).norm() > 1e-6, "scenario.bs and scenario.ris coincide");
    need(c.bandwidth_hz > 0.0, "ofdm.bandwidth_hz must be positive");
    need(c.carrier_hz > 0.0, "ofdm.carrier_hz must be positive");
    need(c.pilot_subcarriers >= 4, "ofdm.pilot_subcarriers must be >= 4");
    need(c.total_subcarriers >= c.pilot_subcarriers, "ofdm.total_subcarriers must be >= ofdm.pilot_subcarriers");
    need(c.g1 >= 2 && c.g2 >= 2, "ofdm.g1 and ofdm.g2 must be >= 2");
    need(c.mx >= 2 && c.my >= 2, "ris.mx and ris.my must be >= 2");
    need(c.mx >= c.g1 && c.my >= c.g2, "ris.mx >= ofdm.g1 and ris.my >= ofdm.g2 are required by the profile");
    need(c.spacing_wavelengths > 0.0, "ris.spacing_wavelengths must be positive");
    need(c.eta == 0.0 || c.eta >= 1.0, "ris.eta must be >= 1 or 'budget'");
    need(c.active || c.eta == 0.0 || c.eta == 1.0, "a passive ris needs ris.eta = 1");
    need(c.eta != 0.0 || c.noise == NoiseModel::Thermal, "ris.eta = budget needs noise.model = thermal");
    need(c.sigma_ratio >= 0.0, "noise.sigma_ratio must be nonnegative");
    need(c.trials >= 1, "run.trials must be >= 1");
    need(c.threads >= 0, "run.threads must be >= 0");
    need(c.failure_threshold >= 0.0 && c.failure_threshold <= 1.0, "run.failure_threshold must lie in [0, 1]");
    need(c.axis == SweepAxis::None || !c.values.empty(), "sweep.values must be nonempty when sweep.axis is set");
    if (c.axis == SweepAxis::Snapshots || c.axis == SweepAxis::PilotSubcarriers || c.axis == SweepAxis::PilotSymbols)
        for (double v : c.values) need(v == std::floor(v) && v >= 1.0, "sweep.values must be positive integers for this axis");
    if (c.axis == SweepAxis::PilotSymbols)
        for (double v : c.values) {
            const int r = int(std::lround(std::sqrt(v)));
            need(r * r == int(v) && r >= 2, "pilot_symbols sweep values must be squares of integers >= 2");
        }
    if (c.axis == SweepAxis::PAddDbm) need(c.noise == NoiseModel::Thermal, "p_add_dbm sweeps need noise.model = thermal");
    if (!errors.empty()) throw ConfigError(errors);
}

ExperimentConfig load_config(const std::string& path, const std::vector<ConfigEntry>& overrides) {
    ExperimentConfig cfg;
    apply_entries(cfg, overrides);
    if (!path.empty()) apply_entries(cfg, read_ini_file(path));
    validate(cfg);
    return cfg;
}

std::string ExperimentConfig::canonical() const {
    std::ostringstream o;
    auto v3 = [](const Vec3& x) { return fmt(x(0)) + "," + fmt(x(1)) + "," + fmt(x(2)); };
    o << "scenario.bs=" << v3(bs) << "\nscenario.ris=" << v3(ris) << "\nscenario.ris_rotation_deg=" << v3(ris_rotation_deg)
      << "\nscenario.ue_position=" << v3(ue_position) << "\nscenario.ue_velocity=" << v3(ue_velocity)
      << "\nscenario.clock_bias_ns=" << fmt(clock_bias_ns) << "\nscenario.clock_drift_ppm=" << fmt(clock_drift_ppm)
      << "\nscenario.snapshots=" << snapshots << "\nscenario.interval_s=" << fmt(interval_s)
      << "\nscenario.el_sign=" << el_sign << "\nofdm.bandwidth_hz=" << fmt(bandwidth_hz)
      << "\nofdm.total_subcarriers=" << total_subcarriers << "\nofdm.pilot_subcarriers=" << pilot_subcarriers
      << "\nofdm.g1=" << g1 << "\nofdm.g2=" << g2 << "\nofdm.carrier_hz=" << fmt(carrier_hz) << "\nris.mx=" << mx
      << "\nris.my=" << my << "\nris.spacing_wavelengths=" << fmt(spacing_wavelengths)
      << "\nris.mode=" << (active ? "active" : "passive") << "\nris.eta=" << (eta == 0.0 ? "budget" : fmt(eta))
      << "\nnoise.model=" << to_string(noise) << "\nnoise.snr_db=" << fmt(snr_db)
      << "\nnoise.sigma_ratio=" << fmt(sigma_ratio) << "\nnoise.tx_power_dbm=" << fmt(tx_power_dbm)
      << "\nnoise.ris_power_dbm=" << fmt(ris_power_dbm) << "\nnoise.noise_psd_dbm_hz=" << fmt(noise_psd_dbm_hz)
      << "\nnoise.noise_figure_db=" << fmt(noise_figure_db)
      << "\nestimator.backend=" << (polynomial_roots ? "roots" : "grid")
      << "\nestimator.refine_round=" << (refine_round ? "true" : "false")
      << "\nestimator.measurements=" << to_string(measurements) << "\nsweep.axis=" << to_string(axis) << "\nsweep.values=";
    for (std::size_t i = 0; i < values.size(); ++i) o << (i ? "," : "") << fmt(values[i]);
    o << "\nrun.trials=" << trials << "\nrun.seed=" << seed << "\nrun.output=" << output
      << "\nrun.failure_threshold=" << fmt(failure_threshold) << "\n";
    return o.str();
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 14695981039346656037ull;
    for (const unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace rislocate::harness
