#include "rislocate/harness/experiment.hpp"

#include "rislocate/harness/trial_runner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rislocate::harness {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double deg(double d) { return d * kPi / 180.0; }

double param_error(const EpochParams& est, const EpochParams& truth, int i) {
    const double e = est.vec()(i) - truth.vec()(i);
    return i >= 4 ? wrap_angle(e) : e;
}

std::vector<CMatX> noiseless_signals(const Scenario& sc, const PathGains& g) {
    std::vector<CMatX> out;
    for (int n = 0; n < sc.sched.size(); ++n)
        out.push_back(noiseless_snapshot(sc.sys, sc.truth[n], g.alpha_L[n], g.alpha_R2[n]).total());
    return out;
}

// Per-epoch noise variance, or 1 as a reference level when there is no noise, so that
// bounds and weights stay finite.
std::vector<double> reference_variances(const Scenario& sc, const NoiseLevels& noise, const PathGains& g) {
    std::vector<double> s2;
    for (int n = 0; n < sc.sched.size(); ++n) {
        const double v = total_noise_variance(sc.sys, noise, g.alpha_R2[n]);
        s2.push_back(v > 0.0 ? v : 1.0);
    }
    return s2;
}

bool noiseless(const NoiseLevels& n) { return n.sigma_U == 0.0 && n.sigma_R == 0.0; }

// Weight for the state solver: the equivalent channel FIM at the estimates plus a prior
// that is uniform over each parameter's unambiguous window. An elevation estimate on the
// horizon has zero local elevation information; the prior then caps its variance.
MatX weighting_covariance(const SystemModel& sys, const ChannelCrlb& cr) {
    const double d = sys.ofdm.max_range(), r = 2.0 * sys.ofdm.max_rate();
    const Eigen::Matrix<double, 6, 1> width = (Eigen::Matrix<double, 6, 1>() << d, d, r, r, kTwoPi, kPi / 2).finished();
    const MatX F = cr.fim.equiv + (12.0 / width.array().square()).matrix().asDiagonal().toDenseMatrix();
    return equilibrated_inverse(0.5 * (F + F.transpose()));
}

}  // namespace

double dbm_to_mw(double dbm) { return std::pow(10.0, dbm / 10.0); }

Scenario resolve(const ExperimentConfig& cfg) {
    validate(cfg);
    Scenario sc;
    const Vec3& r = cfg.ris_rotation_deg;
    const AnchorSet anchors = AnchorSet::make(cfg.bs, cfg.ris, rotation_zyx(deg(r(0)), deg(r(1)), deg(r(2))));
    const OfdmConfig ofdm = OfdmConfig::from_bandwidth(cfg.bandwidth_hz, cfg.total_subcarriers, cfg.pilot_subcarriers,
                                                       cfg.g1, cfg.g2, cfg.carrier_hz);
    const cplx alpha_R1 = free_space_amplitude(ofdm.lambda(), anchors.d0());

    RisConfig ris;
    ris.Mx = cfg.mx;
    ris.My = cfg.my;
    ris.delta_s = cfg.spacing_wavelengths * ofdm.lambda();
    ris.active = cfg.active;
    ris.eta = cfg.active ? cfg.eta : 1.0;

    if (cfg.noise == NoiseModel::Thermal) {
        // Pilots are normalized to unit amplitude, so noise is expressed relative to the
        // per-subcarrier transmit power.
        const double p_sub = dbm_to_mw(cfg.tx_power_dbm) / cfg.total_subcarriers;
        const double n0 = dbm_to_mw(cfg.noise_psd_dbm_hz) * ofdm.delta_f * dbm_to_mw(cfg.noise_figure_db);
        sc.thermal.sigma_U = std::sqrt(n0 / p_sub);
        if (cfg.active) {
            sc.thermal.sigma_R = cfg.sigma_ratio * sc.thermal.sigma_U;
            if (cfg.eta == 0.0)
                ris.eta = amplification_from_budget(dbm_to_mw(cfg.ris_power_dbm) / dbm_to_mw(cfg.tx_power_dbm), 1.0,
                                                    alpha_R1, sc.thermal.sigma_R * sc.thermal.sigma_R, ris.M());
        }
    }

    sc.sys = SystemModel::make(anchors, ofdm, ris, alpha_R1);
    sc.sys.el_sign = cfg.el_sign;
    sc.ue.p = cfg.ue_position;
    sc.ue.v = cfg.ue_velocity;
    sc.ue.clock_bias_m = clock_bias_from_ns(cfg.clock_bias_ns);
    sc.ue.clock_drift_mps = clock_drift_from_ppm(cfg.clock_drift_ppm);
    sc.sched = EpochSchedule::uniform(cfg.snapshots, cfg.interval_s);
    sc.truth = true_channel_params(sc.ue, sc.sys.anchors, sc.sched);
    check_unambiguous(sc.sys, sc.truth);
    for (const EpochParams& ep : sc.truth)
        if (cfg.el_sign * ep.phi_el < 0.0)
            throw ConfigError("scenario.el_sign does not match the UE hemisphere seen from the panel");

    sc.noise = cfg.noise;
    sc.snr_db = cfg.snr_db;
    sc.sigma_ratio = cfg.sigma_ratio;
    sc.source = cfg.measurements;
    sc.coarse.backend = cfg.polynomial_roots ? SearchBackend::PolynomialRoots : SearchBackend::Grid;
    sc.coarse.refine_round = cfg.refine_round;
    return sc;
}

std::mt19937_64 trial_rng(std::uint64_t seed, int trial, int stream) {
    std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(trial), std::uint32_t(stream)};
    return std::mt19937_64(seq);
}

NoiseLevels trial_noise(const Scenario& sc, const PathGains& gains, const std::vector<CMatX>& signals) {
    if (sc.fixed_noise) return sc.fixed;
    switch (sc.noise) {
        case NoiseModel::None: return {};
        case NoiseModel::Thermal: return sc.thermal;
        case NoiseModel::Snr: {
            NoiseLevels n;
            n.sigma_U = calibrate_sigma_u(sc.sys, signals, gains.alpha_R2, sc.snr_db, sc.sigma_ratio);
            n.sigma_R = sc.sigma_ratio * n.sigma_U;
            return n;
        }
    }
    return {};
}

double nmse(const CMatX& H_hat, const CMatX& H) {
    const double den = H.squaredNorm();
    if (!(den > 0.0)) throw DegeneracyError("NMSE of a zero-norm channel");
    return (H_hat - H).squaredNorm() / den;
}

TrialResult run_trial(const Scenario& sc, std::uint64_t seed, int trial) {
    const int N = sc.sched.size();
    const AnchorSet& anchors = sc.sys.anchors;
    std::mt19937_64 gain_rng = trial_rng(seed, trial, 0);
    const PathGains gains = draw_path_gains(sc.ue, anchors, sc.sched, sc.sys.lambda(), gain_rng);
    const std::vector<CMatX> signals = noiseless_signals(sc, gains);
    const NoiseLevels noise = trial_noise(sc, gains, signals);
    const std::vector<double> s2 = reference_variances(sc, noise, gains);
    const ScenarioBound bound = scenario_bound(sc.ue, sc.sys, sc.sched, gains, s2);

    TrialResult res;
    res.omm_crlb = bound.omm.crlb;
    res.dmm_crlb = bound.dmm.crlb;
    res.epochs.resize(N);
    for (int n = 0; n < N; ++n) res.epochs[n].crlb = bound.epochs[n].crlb;

    MeasurementSet m;
    if (sc.source == MeasurementSource::Gaussian) {
        m.eta_hat = stack_params(sc.truth);
        if (!noiseless(noise)) {
            std::mt19937_64 rng = trial_rng(seed, trial, 1);
            std::normal_distribution<double> nd;
            VecX z(m.eta_hat.size());
            for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = nd(rng);
            m.eta_hat += bound.sigma_eta.llt().matrixL() * z;
        }
        m.sigma_eta = bound.sigma_eta;
        const ChannelParams drawn = unstack_params(m.eta_hat);
        for (int n = 0; n < N; ++n) {
            EpochOutcome& o = res.epochs[n];
            o.coarse = o.refined = drawn[n];
            const CMatX H = channel_matrix(sc.sys, sc.truth[n], gains.alpha_L[n], gains.alpha_R2[n]);
            o.nmse_coarse = o.nmse_refined =
                nmse(channel_matrix(sc.sys, drawn[n], gains.alpha_L[n], gains.alpha_R2[n]), H);
        }
    } else {
        std::vector<MatX> covs;
        ChannelParams refined;
        for (int n = 0; n < N; ++n) {
            EpochOutcome& o = res.epochs[n];
            std::mt19937_64 rng = trial_rng(seed, trial, 1 + n);
            const ReceivedSnapshot snap =
                synthesize_snapshot(sc.sys, sc.truth[n], gains.alpha_L[n], gains.alpha_R2[n], noise, n, rng);
            try {
                const ChannelEstimatePair est = estimate_channel(snap.Y, sc.sys, sc.coarse);
                o.failed = est.coarse.flags.failed() || est.refined.flags.failed();
                o.coarse = est.coarse.params;
                o.refined = est.refined.params;
                const CMatX H = channel_matrix(sc.sys, sc.truth[n], gains.alpha_L[n], gains.alpha_R2[n]);
                o.nmse_coarse =
                    nmse(channel_matrix(sc.sys, o.coarse, est.coarse.alpha_L, est.coarse.alpha_R2), H);
                o.nmse_refined =
                    nmse(channel_matrix(sc.sys, o.refined, est.refined.alpha_L, est.refined.alpha_R2), H);
                if (!o.failed)
                    covs.push_back(weighting_covariance(
                        sc.sys, channel_crlb(sc.sys, o.refined, est.refined.alpha_L, est.refined.alpha_R2, s2[n])));
            } catch (const std::exception&) {
                o.failed = true;
            }
            res.channel_failed = res.channel_failed || o.failed;
            refined.push_back(o.refined);
        }
        if (res.channel_failed) return res;
        m.eta_hat = stack_params(refined);
        m.sigma_eta = block_diagonal(covs);
    }

    try {
        const StateEstimatePair st = solve_state(m, anchors, sc.sched);
        res.theta_coarse = st.coarse.theta;
        res.xi_refined = st.refined.xi;
        res.state_failed = st.refined.flags.diverged || !st.refined.xi.allFinite() || !st.coarse.theta.allFinite();
    } catch (const std::exception&) {
        res.state_failed = true;
    }
    return res;
}

MetricsRow aggregate(const std::vector<TrialResult>& results, const Scenario& sc, double sweep_value) {
    MetricsRow row;
    row.sweep_value = sweep_value;
    row.trials = int(results.size());
    const int N = sc.sched.size();
    const auto truth_xi = sc.ue.xi();

    std::array<double, 6> ec{}, er{}, cb{}, sc6{}, dmm{};
    std::array<double, 8> sr{}, omm{};
    double nc = 0.0, nr = 0.0, peb = 0.0, veb = 0.0, pe = 0.0, ve = 0.0;
    int ok = 0;
    for (const TrialResult& t : results) {
        if (t.failed()) {
            ++row.failures;
            continue;
        }
        ++ok;
        for (int n = 0; n < N; ++n) {
            const EpochOutcome& o = t.epochs[n];
            for (int i = 0; i < 6; ++i) {
                ec[i] += std::pow(param_error(o.coarse, sc.truth[n], i), 2);
                er[i] += std::pow(param_error(o.refined, sc.truth[n], i), 2);
                cb[i] += o.crlb(i);
            }
            nc += o.nmse_coarse;
            nr += o.nmse_refined;
        }
        for (int i = 0; i < 6; ++i) {
            sc6[i] += std::pow(t.theta_coarse(i) - truth_xi(i), 2);
            dmm[i] += t.dmm_crlb(i);
        }
        for (int i = 0; i < 8; ++i) {
            sr[i] += std::pow(t.xi_refined(i) - truth_xi(i), 2);
            omm[i] += t.omm_crlb(i);
        }
        peb += t.omm_crlb.head(3).sum();
        veb += t.omm_crlb.segment(3, 3).sum();
        pe += (t.xi_refined.head(3) - truth_xi.head(3)).squaredNorm();
        ve += (t.xi_refined.segment(3, 3) - truth_xi.segment(3, 3)).squaredNorm();
    }

    const double ch = double(ok) * N;
    auto root_mean = [](double sum, double count) { return count > 0 ? std::sqrt(sum / count) : kNaN; };
    for (int i = 0; i < 6; ++i) {
        row.channel_rmse_coarse[i] = root_mean(ec[i], ch);
        row.channel_rmse_refined[i] = root_mean(er[i], ch);
        row.channel_crlb[i] = root_mean(cb[i], ch);
        row.state_rmse_coarse[i] = root_mean(sc6[i], ok);
        row.dmm_crlb[i] = root_mean(dmm[i], ok);
    }
    for (int i = 0; i < 8; ++i) {
        row.state_rmse_refined[i] = root_mean(sr[i], ok);
        row.omm_crlb[i] = root_mean(omm[i], ok);
    }
    row.nmse_coarse = ch > 0 ? nc / ch : kNaN;
    row.nmse_refined = ch > 0 ? nr / ch : kNaN;
    row.peb = root_mean(peb, ok);
    row.veb = root_mean(veb, ok);
    row.position_rmse_refined = root_mean(pe, ok);
    row.velocity_rmse_refined = root_mean(ve, ok);
    return row;
}

ExperimentConfig at_sweep_value(const ExperimentConfig& cfg, double value) {
    ExperimentConfig c = cfg;
    switch (cfg.axis) {
        case SweepAxis::None: break;
        case SweepAxis::SnrDb: c.snr_db = value; break;
        case SweepAxis::Snapshots: c.snapshots = int(std::lround(value)); break;
        case SweepAxis::PilotSubcarriers: c.pilot_subcarriers = int(std::lround(value)); break;
        case SweepAxis::PilotSymbols: c.g1 = c.g2 = int(std::lround(std::sqrt(value))); break;
        case SweepAxis::PAddDbm:
            if (cfg.active) c.ris_power_dbm = value;
            else c.tx_power_dbm = 10.0 * std::log10(dbm_to_mw(cfg.tx_power_dbm) + dbm_to_mw(value));
            break;
    }
    return c;
}

SweepTable run_sweep(const ExperimentConfig& cfg) {
    validate(cfg);
    SweepTable table;
    table.axis = cfg.axis;
    const std::vector<double> values = cfg.axis == SweepAxis::None ? std::vector<double>{0.0} : cfg.values;
    for (double v : values) {
        const Scenario sc = resolve(at_sweep_value(cfg, v));
        const auto results = cfg.threads == 1 ? run_trials_serial(sc, cfg.seed, cfg.trials)
                                              : run_trials_parallel(sc, cfg.seed, cfg.trials, cfg.threads);
        table.rows.push_back(aggregate(results, sc, v));
    }
    return table;
}

BoundRow scenario_bounds(const Scenario& sc, std::uint64_t seed) {
    std::mt19937_64 rng = trial_rng(seed, 0, 0);
    const PathGains gains = draw_path_gains(sc.ue, sc.sys.anchors, sc.sched, sc.sys.lambda(), rng);
    const NoiseLevels noise = trial_noise(sc, gains, noiseless_signals(sc, gains));
    const ScenarioBound b = scenario_bound(sc.ue, sc.sys, sc.sched, gains, reference_variances(sc, noise, gains));

    BoundRow row;
    row.mode = sc.sys.ris.active ? "active" : "passive";
    for (int i = 0; i < 6; ++i) {
        double s = 0.0;
        for (const ChannelCrlb& e : b.epochs) s += e.crlb(i);
        row.channel_crlb[i] = std::sqrt(s / double(b.epochs.size()));
        row.dmm_crlb[i] = std::sqrt(b.dmm.crlb(i));
    }
    for (int i = 0; i < 8; ++i) row.omm_crlb[i] = std::sqrt(b.omm.crlb(i));
    row.peb = std::sqrt(b.omm.peb);
    row.veb = std::sqrt(b.omm.veb);
    return row;
}

std::vector<BoundRow> bound_sweep(const ExperimentConfig& cfg) {
    validate(cfg);
    std::vector<BoundRow> rows;
    const std::vector<double> values = cfg.axis == SweepAxis::None ? std::vector<double>{0.0} : cfg.values;
    bool hold = cfg.axis == SweepAxis::Snapshots;
    NoiseLevels held;
    if (hold) {
        // Gain and noise streams are drawn epoch by epoch, so shorter schedules see a prefix
        // of the longest one.
        const Scenario longest = resolve(at_sweep_value(cfg, *std::max_element(values.begin(), values.end())));
        std::mt19937_64 rng = trial_rng(cfg.seed, 0, 0);
        const PathGains g = draw_path_gains(longest.ue, longest.sys.anchors, longest.sched, longest.sys.lambda(), rng);
        held = trial_noise(longest, g, noiseless_signals(longest, g));
    }
    for (double v : values) {
        Scenario sc = resolve(at_sweep_value(cfg, v));
        if (hold) {
            sc.fixed_noise = true;
            sc.fixed = held;
        }
        BoundRow r = scenario_bounds(sc, cfg.seed);
        r.sweep_value = v;
        rows.push_back(r);
    }
    return rows;
}

std::vector<BoundRow> compare_ris_modes(const ExperimentConfig& cfg, const std::vector<double>& p_add_dbm) {
    std::vector<BoundRow> rows;
    for (const bool active : {true, false}) {
        ExperimentConfig c = cfg;
        c.noise = NoiseModel::Thermal;
        c.active = active;
        c.eta = 0.0;
        c.axis = SweepAxis::PAddDbm;
        c.values = p_add_dbm;
        for (double v : p_add_dbm) {
            BoundRow r = scenario_bounds(resolve(at_sweep_value(c, v)), cfg.seed);
            r.sweep_value = v;
            rows.push_back(r);
        }
    }
    return rows;
}

}  // namespace rislocate::harness
