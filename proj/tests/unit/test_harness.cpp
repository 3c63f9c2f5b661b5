#include "rislocate/harness/config.hpp"
#include "rislocate/harness/experiment.hpp"
#include "rislocate/harness/output.hpp"
#include "rislocate/harness/trial_runner.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace rislocate;
using namespace rislocate::harness;

namespace {

std::string error_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

std::string metrics_csv(const ExperimentConfig& cfg) {
    std::ostringstream os;
    write_metrics_csv(os, run_sweep(cfg), cfg.active ? "active" : "passive");
    return os.str();
}

std::filesystem::path temp_file(const std::string& name, const std::string& text) {
    const auto p = std::filesystem::temp_directory_path() / name;
    std::ofstream(p) << text;
    return p;
}

}  // namespace

// ---------------------------------------------------------------------------
// config

TEST(Config, ParsesSectionsCommentsAndVectors) {
    const auto entries = parse_ini("# desk\n[scenario]\nue_position = -20, 40, -10  ; inline\n\n[run]\ntrials=7\n", "t.ini");
    ASSERT_EQ(entries.size(), 2u);
    EXPECT_EQ(entries[0].origin, "t.ini:3");
    ExperimentConfig c;
    apply_entries(c, entries);
    EXPECT_EQ(c.ue_position, Vec3(-20, 40, -10));
    EXPECT_EQ(c.trials, 7);
}

TEST(Config, EveryBadEntryIsReportedWithItsLine) {
    const std::string msg = error_of([] {
        ExperimentConfig c;
        apply_entries(c, parse_ini("[run]\ntrials = many\n[ofdm]\ncolour = red\nbandwidth_hz = 1e6\n", "x.ini"));
    });
    EXPECT_NE(msg.find("x.ini:2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("x.ini:4"), std::string::npos) << msg;
    EXPECT_NE(msg.find("unknown key 'colour'"), std::string::npos) << msg;
    EXPECT_EQ(msg.find("x.ini:5"), std::string::npos) << msg;
}

TEST(Config, MalformedLinesNameTheirOrigin) {
    EXPECT_NE(error_of([] { parse_ini("[run]\njust words\n", "m.ini"); }).find("m.ini:2"), std::string::npos);
    EXPECT_NE(error_of([] { parse_ini("trials = 3\n", "m.ini"); }).find("m.ini:1"), std::string::npos);
    EXPECT_NE(error_of([] { parse_ini("[run\n", "m.ini"); }).find("m.ini:1"), std::string::npos);
    EXPECT_NE(error_of([] { read_ini_file("/nonexistent/none.ini"); }).find("none.ini"), std::string::npos);
}

TEST(Config, FileOverridesFlags) {
    const auto p = temp_file("rislocate_override.ini", "[run]\ntrials = 11\n");
    const ExperimentConfig c = load_config(p.string(), {{"run", "trials", "3", "--trials"}, {"run", "seed", "9", "--seed"}});
    EXPECT_EQ(c.trials, 11);
    EXPECT_EQ(c.seed, 9u);
    std::filesystem::remove(p);
}

TEST(Config, ValidationListsAllViolations) {
    ExperimentConfig c;
    c.trials = 0;
    c.axis = SweepAxis::SnrDb;
    const std::string msg = error_of([&] { validate(c); });
    EXPECT_NE(msg.find("run.trials"), std::string::npos);
    EXPECT_NE(msg.find("sweep.values"), std::string::npos);

    ExperimentConfig s;
    s.axis = SweepAxis::PilotSymbols;
    s.values = {16, 12};
    EXPECT_NE(error_of([&] { validate(s); }).find("squares"), std::string::npos);

    ExperimentConfig b;
    b.eta = 0.0;
    EXPECT_NE(error_of([&] { validate(b); }).find("thermal"), std::string::npos);
}

TEST(Config, CanonicalTextRoundTrips) {
    ExperimentConfig c;
    c.ue_position = Vec3(-21.5, 40.25, -9.125);
    c.noise = NoiseModel::Thermal;
    c.eta = 0.0;
    c.axis = SweepAxis::PAddDbm;
    c.values = {-20, 0.1, 40};
    c.active = false;
    c.seed = 123456789012ull;
    std::vector<ConfigEntry> entries;
    std::istringstream in(c.canonical());
    std::string line;
    while (std::getline(in, line)) {
        const auto dot = line.find('.'), eq = line.find('=');
        entries.push_back({line.substr(0, dot), line.substr(dot + 1, eq - dot - 1), line.substr(eq + 1), "canon"});
    }
    ExperimentConfig d;
    apply_entries(d, entries);
    EXPECT_EQ(d.canonical(), c.canonical());
    EXPECT_EQ(fnv1a(d.canonical()), fnv1a(c.canonical()));
}

TEST(Config, HashTracksContentNotThreads) {
    ExperimentConfig a, b;
    b.threads = 8;
    EXPECT_EQ(fnv1a(a.canonical()), fnv1a(b.canonical()));
    b.seed = 2;
    EXPECT_NE(fnv1a(a.canonical()), fnv1a(b.canonical()));
    EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ull);
    EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cull);
}

// ---------------------------------------------------------------------------
// scenario

TEST(Resolve, DeskConfigIsValid) {
    const Scenario sc = resolve(ExperimentConfig{});
    EXPECT_EQ(sc.sys.K(), 32);
    EXPECT_EQ(sc.sys.G(), 16);
    EXPECT_EQ(sc.sys.M(), 64);
    EXPECT_NEAR(sc.sys.ofdm.delta_f, 1.2e6, 1e-6);
    EXPECT_EQ(sc.sched.size(), 3);
    EXPECT_DOUBLE_EQ(sc.sys.ris.eta, 3000.0);
}

TEST(Resolve, RejectsAmbiguousLongSchedule) {
    ExperimentConfig c;
    c.snapshots = 6;
    EXPECT_NE(error_of([&] { resolve(c); }).find("unambiguous"), std::string::npos);
    c.interval_s = 0.1;
    EXPECT_NO_THROW(resolve(c));
}

TEST(Resolve, RejectsWrongHemisphere) {
    ExperimentConfig c;
    c.el_sign = -1;
    EXPECT_NE(error_of([&] { resolve(c); }).find("el_sign"), std::string::npos);
}

TEST(Resolve, ThermalBudgetMatchesClosedForm) {
    ExperimentConfig c;
    c.noise = NoiseModel::Thermal;
    c.eta = 0.0;
    c.ris_power_dbm = 20.0;
    const Scenario sc = resolve(c);
    // -174 dBm/Hz over 1.2 MHz against 20 dBm spread on 200 subcarriers.
    const double sU2 = std::pow(10.0, -17.4) * 1.2e6 / (100.0 / 200.0);
    EXPECT_NEAR(sc.thermal.sigma_U * sc.thermal.sigma_U / sU2, 1.0, 1e-9);
    const double a1 = std::norm(sc.sys.alpha_R1);
    EXPECT_NEAR(sc.sys.ris.eta, std::sqrt(1.0 / (64.0 * (a1 + sU2))), 1e-6 * sc.sys.ris.eta);

    c.active = false;
    const Scenario p = resolve(c);
    EXPECT_DOUBLE_EQ(p.sys.ris.eta, 1.0);
    EXPECT_EQ(p.thermal.sigma_R, 0.0);
}

TEST(Resolve, PassiveSweepAddsPowerToTransmitter) {
    ExperimentConfig c;
    c.active = false;
    c.axis = SweepAxis::PAddDbm;
    EXPECT_NEAR(at_sweep_value(c, 20.0).tx_power_dbm, 20.0 + 10.0 * std::log10(2.0), 1e-12);
    c.active = true;
    EXPECT_DOUBLE_EQ(at_sweep_value(c, 30.0).ris_power_dbm, 30.0);
    EXPECT_DOUBLE_EQ(at_sweep_value(c, 30.0).tx_power_dbm, 20.0);
}

TEST(Resolve, SnrCalibrationHitsTarget) {
    const Scenario sc = resolve(ExperimentConfig{});
    std::mt19937_64 rng = trial_rng(1, 0, 0);
    const PathGains g = draw_path_gains(sc.ue, sc.sys.anchors, sc.sched, sc.sys.lambda(), rng);
    std::vector<CMatX> sig;
    double energy = 0.0, noise = 0.0;
    for (int n = 0; n < 3; ++n) {
        sig.push_back(noiseless_snapshot(sc.sys, sc.truth[n], g.alpha_L[n], g.alpha_R2[n]).total());
        energy += sig.back().squaredNorm();
    }
    const NoiseLevels lv = trial_noise(sc, g, sig);
    for (int n = 0; n < 3; ++n) noise += total_noise_variance(sc.sys, lv, g.alpha_R2[n]) * sig[n].size();
    EXPECT_NEAR(10.0 * std::log10(energy / noise), 15.0, 1e-9);
}

TEST(Streams, DistinctTrialsAndStreamsDiffer) {
    EXPECT_NE(trial_rng(1, 0, 0)(), trial_rng(1, 1, 0)());
    EXPECT_NE(trial_rng(1, 0, 0)(), trial_rng(1, 0, 1)());
    EXPECT_NE(trial_rng(1, 0, 0)(), trial_rng(1ull << 32 | 1, 0, 0)());
    EXPECT_EQ(trial_rng(7, 3, 2)(), trial_rng(7, 3, 2)());
}

TEST(Streams, ShorterSchedulesSeeAPrefixOfGains) {
    ExperimentConfig c;
    c.interval_s = 0.1;
    c.snapshots = 5;
    const Scenario lng = resolve(c);
    c.snapshots = 2;
    const Scenario sht = resolve(c);
    std::mt19937_64 a = trial_rng(4, 9, 0), b = trial_rng(4, 9, 0);
    const PathGains gl = draw_path_gains(lng.ue, lng.sys.anchors, lng.sched, lng.sys.lambda(), a);
    const PathGains gs = draw_path_gains(sht.ue, sht.sys.anchors, sht.sched, sht.sys.lambda(), b);
    for (int n = 0; n < 2; ++n) {
        EXPECT_EQ(gl.alpha_L[n], gs.alpha_L[n]);
        EXPECT_EQ(gl.alpha_R2[n], gs.alpha_R2[n]);
    }
}

// ---------------------------------------------------------------------------
// metrics

TEST(Nmse, TruthZeroAndEmptyEstimateOne) {
    const Scenario sc = resolve(ExperimentConfig{});
    const CMatX H = channel_matrix(sc.sys, sc.truth[0], {1e-5, 2e-6}, {-3e-6, 1e-5});
    EXPECT_EQ(nmse(H, H), 0.0);
    EXPECT_DOUBLE_EQ(nmse(CMatX::Zero(H.rows(), H.cols()), H), 1.0);
    EXPECT_THROW(nmse(H, CMatX::Zero(H.rows(), H.cols())), DegeneracyError);
}

TEST(Trial, NoiselessPipelineIsExact) {
    ExperimentConfig c;
    c.noise = NoiseModel::None;
    c.trials = 1;
    const MetricsRow r = run_sweep(c).rows.at(0);
    EXPECT_EQ(r.failures, 0);
    for (int i = 0; i < 6; ++i) EXPECT_LT(r.channel_rmse_refined[i], 1e-6) << kChannelNames[i];
    for (int i = 0; i < 8; ++i) EXPECT_LT(r.state_rmse_refined[i], 1e-6) << kStateNames[i];
    EXPECT_LT(r.nmse_refined, 1e-12);
    EXPECT_LT(r.nmse_coarse, 1e-12);
}

TEST(Trial, NoiselessGaussianSourceIsExact) {
    ExperimentConfig c;
    c.noise = NoiseModel::None;
    c.measurements = MeasurementSource::Gaussian;
    c.trials = 2;
    const MetricsRow r = run_sweep(c).rows.at(0);
    for (int i = 0; i < 6; ++i) EXPECT_LT(r.state_rmse_coarse[i], 1e-6);
    for (int i = 0; i < 8; ++i) EXPECT_LT(r.state_rmse_refined[i], 1e-6);
    EXPECT_EQ(r.nmse_refined, 0.0);
}

TEST(Aggregate, FailedTrialsOnlyCount) {
    const Scenario sc = resolve(ExperimentConfig{});
    TrialResult good;
    good.epochs.resize(3);
    for (int n = 0; n < 3; ++n) {
        good.epochs[n].coarse = good.epochs[n].refined = sc.truth[n];
        good.epochs[n].crlb = VecX::Constant(6, 4.0);
    }
    good.epochs[1].refined.d1 += 0.3;
    // Angle errors wrap: an azimuth off by almost a full turn is a small error.
    good.epochs[2].refined.phi_az += kTwoPi - 0.03;
    good.theta_coarse = sc.ue.theta();
    good.xi_refined = sc.ue.xi();
    good.xi_refined(0) += 2.0;
    good.omm_crlb = VecX::Constant(8, 1.0);
    good.dmm_crlb = VecX::Constant(6, 9.0);
    TrialResult bad = good;
    bad.state_failed = true;
    bad.xi_refined(0) += 1e6;

    const MetricsRow r = aggregate({good, bad, good}, sc, 5.0);
    EXPECT_EQ(r.trials, 3);
    EXPECT_EQ(r.failures, 1);
    EXPECT_NEAR(r.failure_rate(), 1.0 / 3.0, 1e-15);
    EXPECT_NEAR(r.channel_rmse_refined[0], std::sqrt(0.09 / 3.0), 1e-12);
    EXPECT_NEAR(r.channel_rmse_refined[4], std::sqrt(0.0009 / 3.0), 1e-9);
    EXPECT_EQ(r.channel_rmse_coarse[0], 0.0);
    EXPECT_NEAR(r.channel_crlb[3], 2.0, 1e-15);
    EXPECT_NEAR(r.state_rmse_refined[0], 2.0, 1e-12);
    EXPECT_NEAR(r.position_rmse_refined, 2.0, 1e-12);
    EXPECT_NEAR(r.peb, std::sqrt(3.0), 1e-15);
    EXPECT_NEAR(r.dmm_crlb[5], 3.0, 1e-15);

    const MetricsRow none = aggregate({bad}, sc, 0.0);
    EXPECT_TRUE(std::isnan(none.channel_rmse_refined[0]));
    EXPECT_EQ(none.failures, 1);
}

// ---------------------------------------------------------------------------
// determinism

TEST(Determinism, SameSeedSameCsvAcrossRunsAndTeams) {
    ExperimentConfig c;
    c.trials = 6;
    c.axis = SweepAxis::SnrDb;
    c.values = {10, 20};
    c.threads = 1;
    const std::string serial = metrics_csv(c);
    EXPECT_EQ(serial, metrics_csv(c));
    c.threads = 8;
    EXPECT_EQ(serial, metrics_csv(c));
    c.seed = 2;
    EXPECT_NE(serial, metrics_csv(c));
}

TEST(Determinism, ParallelTrialsMatchSerialBitwise) {
    const Scenario sc = resolve(ExperimentConfig{});
    const auto a = run_trials_serial(sc, 3, 5);
    const auto b = run_trials_parallel(sc, 3, 5, 4);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t t = 0; t < a.size(); ++t) {
        EXPECT_EQ(a[t].xi_refined, b[t].xi_refined);
        EXPECT_EQ(a[t].theta_coarse, b[t].theta_coarse);
        for (int n = 0; n < 3; ++n) EXPECT_EQ(a[t].epochs[n].refined.vec(), b[t].epochs[n].refined.vec());
    }
}

// ---------------------------------------------------------------------------
// bounds

TEST(Bounds, ActiveHasInteriorMinimumAndPassiveFalls) {
    const std::vector<double> p = {-20, 0, 10, 20, 30, 40};
    const auto rows = compare_ris_modes(ExperimentConfig{}, p);
    ASSERT_EQ(rows.size(), 2 * p.size());
    std::vector<double> act, pas;
    for (const auto& r : rows) (r.mode == "active" ? act : pas).push_back(r.peb);
    for (std::size_t i = 1; i < pas.size(); ++i) EXPECT_LT(pas[i], pas[i - 1]);
    const auto best = std::min_element(act.begin(), act.end()) - act.begin();
    EXPECT_GT(best, 0);
    EXPECT_LT(best, long(act.size()) - 1);
    EXPECT_LT(act[3], pas[3]);
}

TEST(Bounds, NestedSchedulesTightenBothBounds) {
    ExperimentConfig c;
    c.interval_s = 0.1;
    c.axis = SweepAxis::Snapshots;
    c.values = {2, 3, 4};
    const auto rows = bound_sweep(c);
    ASSERT_EQ(rows.size(), 3u);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        EXPECT_LT(rows[i].peb, rows[i - 1].peb);
        EXPECT_LT(rows[i].veb, rows[i - 1].veb);
    }
}

TEST(Bounds, OmmNeverLooserThanDmm) {
    const BoundRow b = scenario_bounds(resolve(ExperimentConfig{}), 1);
    for (int i = 0; i < 6; ++i) EXPECT_LE(b.omm_crlb[i], b.dmm_crlb[i] * (1 + 1e-9)) << kStateNames[i];
}

// ---------------------------------------------------------------------------
// rank suite

TEST(Rank, ParallelSuiteMatchesSerialAndShowsStructure) {
    const auto s = rank_suite_serial(5, 40, 4);
    const auto p = rank_suite_parallel(5, 40, 4, 3);
    ASSERT_EQ(s.size(), 4u);
    for (std::size_t i = 0; i < s.size(); ++i) {
        EXPECT_EQ(s[i].max_rank_direct_only, p[i].max_rank_direct_only);
        EXPECT_EQ(s[i].min_rank_full, p[i].min_rank_full);
        EXPECT_EQ(s[i].singular_state_fim, p[i].singular_state_fim);
    }
    EXPECT_EQ(s[0].singular_state_fim, 40);
    for (int N = 2; N <= 4; ++N) EXPECT_EQ(s[N - 1].min_rank_full, 8);
    EXPECT_LE(s[3].max_rank_direct_only, 6);
}

// ---------------------------------------------------------------------------
// files

TEST(Files, MeasurementCsvAndMatrixRoundTrip) {
    const auto m = temp_file("rislocate_meas.csv",
                             "epoch,d1,d2,r1,r2,phi_az,phi_el\n0,1,2,3,4,0.5,0.25\n1,1.5,2.5,3.5,4.5,0.1,0.2\n");
    const VecX eta = read_measurement_csv(m.string());
    ASSERT_EQ(eta.size(), 12);
    EXPECT_EQ(eta(5), 0.25);
    EXPECT_EQ(eta(6), 1.5);
    const auto c = temp_file("rislocate_cov.txt", "2 0.5\n0.5, 3\n");
    const MatX A = read_matrix_file(c.string());
    EXPECT_EQ(A(1, 0), 0.5);
    EXPECT_EQ(A(1, 1), 3.0);
    const auto bad = temp_file("rislocate_bad.csv", "0,1,2,3\n");
    EXPECT_THROW(read_measurement_csv(bad.string()), ConfigError);
    for (const auto& p : {m, c, bad}) std::filesystem::remove(p);
}

TEST(Files, CsvUsesLongFormatAndRoundTripPrecision) {
    ExperimentConfig c;
    c.trials = 1;
    c.noise = NoiseModel::None;
    const std::string csv = metrics_csv(c);
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, kCsvHeader);
    int rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        EXPECT_EQ(std::count(line.begin(), line.end(), ','), 6) << line;
    }
    EXPECT_GT(rows, 40);
    EXPECT_EQ(std::stod(format_double(0.1)), 0.1);
}

TEST(Files, ManifestRecordsHashAndSeed) {
    ExperimentConfig c;
    c.seed = 42;
    std::ostringstream os;
    write_manifest(os, c, "sweep", "out.csv", 2);
    char hash[20];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a(c.canonical())));
    EXPECT_NE(os.str().find(hash), std::string::npos);
    EXPECT_NE(os.str().find("\"seed\": 42"), std::string::npos);
    EXPECT_NE(os.str().find("\"eigen\""), std::string::npos);
}
