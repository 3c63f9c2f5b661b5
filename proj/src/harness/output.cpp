#include "rislocate/harness/output.hpp"

#include "json.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#ifndef RISLOCATE_VERSION
#define RISLOCATE_VERSION "0.0.0"
#endif

namespace rislocate::harness {

std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

namespace {

struct RowWriter {
    std::ostream& os;
    std::string prefix;  // sweep_axis,sweep_value,mode,

    void operator()(const std::string& metric, const std::string& parameter, const std::string& stage, double v) {
        os << prefix << metric << ',' << parameter << ',' << stage << ',' << format_double(v) << '\n';
    }
};

std::string prefix(SweepAxis axis, double value, const std::string& mode) {
    return std::string(to_string(axis)) + ',' + (axis == SweepAxis::None ? std::string() : format_double(value)) + ',' +
           mode + ',';
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',' || ch == ' ' || ch == '\t' || ch == '\r') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

double to_number(const std::string& s, const std::string& where) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != s.size()) throw ConfigError(where + ": expected a number, got '" + s + "'");
    return v;
}

std::vector<std::vector<double>> read_numeric_rows(const std::string& path, bool allow_header) {
    std::ifstream f(path);
    if (!f) throw ConfigError(path + ": cannot open");
    std::vector<std::vector<double>> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const auto fields = split_fields(line);
        if (fields.empty()) continue;
        if (allow_header && rows.empty() && lineno == 1 && !fields[0].empty() &&
            (std::isalpha(static_cast<unsigned char>(fields[0][0])) != 0))
            continue;
        std::vector<double> r;
        for (const auto& s : fields) r.push_back(to_number(s, path + ":" + std::to_string(lineno)));
        rows.push_back(r);
    }
    return rows;
}

}  // namespace

void write_metrics_csv(std::ostream& os, const SweepTable& table, const std::string& mode) {
    os << kCsvHeader << '\n';
    for (const MetricsRow& r : table.rows) {
        RowWriter w{os, prefix(table.axis, r.sweep_value, mode)};
        w("count", "trials", "none", r.trials);
        w("count", "failures", "none", r.failures);
        w("failure_rate", "all", "none", r.failure_rate());
        for (int i = 0; i < 6; ++i) {
            w("rmse", kChannelNames[i], "coarse", r.channel_rmse_coarse[i]);
            w("rmse", kChannelNames[i], "refined", r.channel_rmse_refined[i]);
            w("crlb", kChannelNames[i], "channel", r.channel_crlb[i]);
        }
        w("nmse", "H", "coarse", r.nmse_coarse);
        w("nmse", "H", "refined", r.nmse_refined);
        for (int i = 0; i < 6; ++i) w("rmse", kStateNames[i], "coarse", r.state_rmse_coarse[i]);
        for (int i = 0; i < 8; ++i) w("rmse", kStateNames[i], "refined", r.state_rmse_refined[i]);
        for (int i = 0; i < 8; ++i) w("crlb", kStateNames[i], "omm", r.omm_crlb[i]);
        for (int i = 0; i < 6; ++i) w("crlb", kStateNames[i], "dmm", r.dmm_crlb[i]);
        w("peb", "p", "omm", r.peb);
        w("veb", "v", "omm", r.veb);
        w("rmse", "p", "refined", r.position_rmse_refined);
        w("rmse", "v", "refined", r.velocity_rmse_refined);
    }
}

void write_bounds_csv(std::ostream& os, SweepAxis axis, const std::vector<BoundRow>& rows) {
    os << kCsvHeader << '\n';
    for (const BoundRow& r : rows) {
        RowWriter w{os, prefix(axis, r.sweep_value, r.mode)};
        for (int i = 0; i < 6; ++i) w("crlb", kChannelNames[i], "channel", r.channel_crlb[i]);
        for (int i = 0; i < 8; ++i) w("crlb", kStateNames[i], "omm", r.omm_crlb[i]);
        for (int i = 0; i < 6; ++i) w("crlb", kStateNames[i], "dmm", r.dmm_crlb[i]);
        w("peb", "p", "omm", r.peb);
        w("veb", "v", "omm", r.veb);
    }
}

void write_rank_csv(std::ostream& os, const std::vector<RankCounts>& rows) {
    os << "N,scenarios,max_rank_direct_only,min_rank_full,max_rank_full,singular_state_fim\n";
    for (const RankCounts& r : rows)
        os << r.N << ',' << r.scenarios << ',' << r.max_rank_direct_only << ',' << r.min_rank_full << ','
           << r.max_rank_full << ',' << r.singular_state_fim << '\n';
}

void write_channel_estimates_csv(std::ostream& os, const std::vector<TrialResult>& results) {
    os << "trial,epoch,stage,d1,d2,r1,r2,phi_az,phi_el,nmse,failed\n";
    for (std::size_t t = 0; t < results.size(); ++t)
        for (std::size_t n = 0; n < results[t].epochs.size(); ++n) {
            const EpochOutcome& o = results[t].epochs[n];
            for (const bool refined : {false, true}) {
                const auto v = (refined ? o.refined : o.coarse).vec();
                os << t << ',' << n << ',' << (refined ? "refined" : "coarse");
                for (int i = 0; i < 6; ++i) os << ',' << format_double(v(i));
                os << ',' << format_double(refined ? o.nmse_refined : o.nmse_coarse) << ',' << (o.failed ? 1 : 0)
                   << '\n';
            }
        }
}

VecX read_measurement_csv(const std::string& path) {
    const auto rows = read_numeric_rows(path, true);
    if (rows.empty()) throw ConfigError(path + ": no measurement rows");
    VecX eta(6 * rows.size());
    double last = -std::numeric_limits<double>::infinity();
    for (std::size_t n = 0; n < rows.size(); ++n) {
        if (rows[n].size() != 7)
            throw ConfigError(path + ": row " + std::to_string(n + 1) + " needs epoch,d1,d2,r1,r2,phi_az,phi_el");
        if (!(rows[n][0] > last)) throw ConfigError(path + ": epochs must be strictly increasing");
        last = rows[n][0];
        for (int i = 0; i < 6; ++i) eta(6 * Eigen::Index(n) + i) = rows[n][1 + i];
    }
    return eta;
}

MatX read_matrix_file(const std::string& path) {
    const auto rows = read_numeric_rows(path, false);
    const std::size_t n = rows.size();
    if (n == 0) throw ConfigError(path + ": empty matrix");
    MatX A(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        if (rows[i].size() != n) throw ConfigError(path + ": matrix must be square");
        for (std::size_t j = 0; j < n; ++j) A(i, j) = rows[i][j];
    }
    return A;
}

void write_state_csv(std::ostream& os, const StateEstimatePair& est) {
    auto sd = [](const MatX& C, int i) {
        return i < C.rows() ? std::sqrt(C(i, i)) : std::numeric_limits<double>::quiet_NaN();
    };
    os << "stage,parameter,estimate,std\n";
    for (int i = 0; i < 6; ++i)
        os << "coarse," << kStateNames[i] << ',' << format_double(est.coarse.theta(i)) << ','
           << format_double(sd(est.coarse.covariance, i)) << '\n';
    const char* stage = est.refined.stage == StateStage::Refined ? "refined" : "fallback";
    for (int i = 0; i < 8; ++i)
        os << stage << ',' << kStateNames[i] << ',' << format_double(est.refined.xi(i)) << ','
           << format_double(sd(est.refined.covariance, i)) << '\n';
}

void write_manifest(std::ostream& os, const ExperimentConfig& cfg, const std::string& verb,
                    const std::string& csv_path, int threads) {
    const std::string canon = cfg.canonical();
    char hash[20];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a(canon)));
    nlohmann::ordered_json j;
    j["tool"] = "rislocate";
    j["version"] = RISLOCATE_VERSION;
    j["verb"] = verb;
    j["config_hash"] = std::string("fnv1a64:") + hash;
    j["seed"] = cfg.seed;
    j["trials"] = cfg.trials;
    j["threads"] = threads;
    j["output"] = csv_path;
    j["libraries"] = {
        {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                      std::to_string(EIGEN_MINOR_VERSION)},
        {"compiler", __VERSION__},
#ifdef _OPENMP
        {"openmp", _OPENMP},
#endif
    };
    j["config"] = canon;
    os << j.dump(2) << '\n';
}

void write_file(const std::string& path, const std::string& text) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw ConfigError(path + ": cannot write");
        f << text;
        if (!f) throw ConfigError(path + ": write failed");
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace rislocate::harness
