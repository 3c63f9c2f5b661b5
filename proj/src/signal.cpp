#include "rislocate/signal.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace rislocate {

void OfdmConfig::validate() const {
    if (K < 4) throw ConfigError("K must be at least 4 for spatial smoothing");
    if (G1 < 2 || G2 < 2) throw ConfigError("G1 and G2 must both be at least 2");
    if (!(delta_f > 0.0) || !(delta_t > 0.0) || !(fc > 0.0)) throw ConfigError("OFDM spacing, duration and carrier must be positive");
    if (std::abs(std::abs(pilot) - 1.0) > 1e-12) throw ConfigError("pilot must have unit modulus");
}

OfdmConfig OfdmConfig::from_bandwidth(double bandwidth_hz, int k_total, int K, int G1, int G2, double fc_hz) {
    if (!(bandwidth_hz > 0.0) || k_total < 1) throw ConfigError("bandwidth and total subcarrier count must be positive");
    if (K > k_total) throw ConfigError("pilot subcarriers exceed the total subcarrier count");
    OfdmConfig c;
    c.K = K;
    c.G1 = G1;
    c.G2 = G2;
    c.delta_f = bandwidth_hz / k_total;
    c.delta_t = 1.0 / c.delta_f;
    c.fc = fc_hz;
    c.validate();
    return c;
}

void RisConfig::validate() const {
    if (Mx < 2 || My < 2) throw ConfigError("RIS needs at least 2 elements per dimension");
    if (!(delta_s > 0.0)) throw ConfigError("RIS element spacing must be positive");
    if (!(eta >= 1.0) && active) throw ConfigError("active RIS amplification must be >= 1");
    if (!active && eta != 1.0) throw ConfigError("passive RIS must have unit gain");
}

CMatX psi_matrix(int rows, int cols) {
    CMatX psi(rows, cols);
    for (int m = 0; m < rows; ++m)
        for (int g = 0; g < cols; ++g) psi(m, g) = std::polar(1.0, kTwoPi * double(m) * double(g) / double(cols));
    return psi;
}

CMatX design_ris_profile(const RisConfig& ris, const OfdmConfig& ofdm) {
    if (ofdm.G1 < 2 || ofdm.G2 < 2) throw ConfigError("G1 and G2 must both be at least 2");
    const CMatX ax = psi_matrix(ris.Mx, ofdm.G1).adjoint();
    const CMatX ay = psi_matrix(ris.My, ofdm.G2).adjoint();
    CMatX out(ofdm.G(), ris.M());
    for (int g1 = 0; g1 < ofdm.G1; ++g1)
        for (int g2 = 0; g2 < ofdm.G2; ++g2)
            for (int mx = 0; mx < ris.Mx; ++mx)
                for (int my = 0; my < ris.My; ++my)
                    out(g1 * ofdm.G2 + g2, mx * ris.My + my) = ris.eta * ax(g1, mx) * ay(g2, my);
    return out;
}

Eigen::MatrixXd ris_positions(int Mx, int My, double delta_s) {
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(Mx * My, 3);
    for (int mx = 0; mx < Mx; ++mx)
        for (int my = 0; my < My; ++my) {
            P(mx * My + my, 0) = mx * delta_s;
            P(mx * My + my, 1) = my * delta_s;
        }
    return P;
}

CVecX vandermonde(int L, double omega) {
    CVecX a(L);
    for (int l = 0; l < L; ++l) a(l) = std::polar(1.0, omega * l);
    return a;
}

CVecX array_response(const Eigen::MatrixXd& positions, double lambda, const Vec2& phi) {
    const VecX proj = positions * direction(phi);
    CVecX a(proj.size());
    for (Eigen::Index m = 0; m < proj.size(); ++m) a(m) = std::polar(1.0, kTwoPi / lambda * proj(m));
    return a;
}

SystemModel SystemModel::make(const AnchorSet& anchors, const OfdmConfig& ofdm, const RisConfig& ris, cplx alpha_R1) {
    SystemModel s;
    s.anchors = anchors;
    s.ofdm = ofdm;
    s.ris = ris;
    s.alpha_R1 = alpha_R1;
    s.psi_x = psi_matrix(ris.Mx, ofdm.G1);
    s.psi_y = psi_matrix(ris.My, ofdm.G2);
    s.profile = design_ris_profile(ris, ofdm);
    s.positions = ris_positions(ris.Mx, ris.My, ris.delta_s);
    s.validate();
    return s;
}

void SystemModel::validate() const {
    anchors.validate();
    ofdm.validate();
    ris.validate();
    if (profile.rows() != ofdm.G() || profile.cols() != ris.M())
        throw ConfigError("RIS profile shape " + std::to_string(profile.rows()) + "x" + std::to_string(profile.cols()) +
                          " does not match G x M");
    if (el_sign != 1 && el_sign != -1) throw ConfigError("elevation hemisphere sign must be +1 or -1");
}

Vec2 psi_xy(const AnchorSet& anchors, const Vec2& phi) {
    const Vec3 ea = direction(anchors.phi_A);
    const Vec3 en = direction(phi);
    return {ea(0) + en(0), ea(1) + en(1)};
}

AngularFrequencies frequencies_of(const SystemModel& sys, const EpochParams& ep) {
    const double df = sys.ofdm.delta_f, dt = sys.ofdm.delta_t, lam = sys.lambda();
    const Vec2 psi = psi_xy(sys.anchors, {ep.phi_az, ep.phi_el});
    AngularFrequencies af;
    af.omega_d1 = -kTwoPi * df * ep.d1 / kSpeedOfLight;
    af.omega_d2 = -kTwoPi * df * (sys.d0() + ep.d2) / kSpeedOfLight;
    af.omega_r1 = kTwoPi * dt * ep.r1 / lam;
    af.omega_r2 = kTwoPi * dt * ep.r2 / lam;
    af.omega_phi_x = kTwoPi * sys.ris.delta_s * psi(0) / lam;
    af.omega_phi_y = kTwoPi * sys.ris.delta_s * psi(1) / lam;
    return af;
}

void check_unambiguous(const SystemModel& sys, const ChannelParams& params) {
    const double range = sys.ofdm.max_range(), rate = sys.ofdm.max_rate();
    for (size_t n = 0; n < params.size(); ++n) {
        const EpochParams& ep = params[n];
        const std::string at = " at epoch " + std::to_string(n);
        for (const double d : {ep.d1, sys.d0() + ep.d2})
            if (!(d >= 0.0 && d < range))
                throw ConfigError("delay " + std::to_string(d) + " m outside unambiguous range " + std::to_string(range) +
                                  " m" + at);
        for (const double r : {ep.r1, ep.r2})
            if (!(std::abs(r) < rate))
                throw ConfigError("rate " + std::to_string(r) + " m/s outside unambiguous window " + std::to_string(rate) +
                                  " m/s" + at);
    }
}

CVecX ris_factor(const SystemModel& sys, const Vec2& phi) {
    const CVecX combined = array_response(sys.positions, sys.lambda(), sys.anchors.phi_A)
                               .cwiseProduct(array_response(sys.positions, sys.lambda(), phi));
    return sys.profile * combined;
}

NoiselessSnapshot noiseless_snapshot(const SystemModel& sys, const EpochParams& ep, cplx alpha_L, cplx alpha_R2) {
    const AngularFrequencies af = frequencies_of(sys, ep);
    const int K = sys.K(), G = sys.G();
    const CVecX rho = ris_factor(sys, {ep.phi_az, ep.phi_el});
    const cplx beta_L = alpha_L * sys.ofdm.pilot;
    const cplx beta_R = sys.alpha_R1 * alpha_R2 * sys.ofdm.pilot;
    const CVecX fL = vandermonde(K, af.omega_d1), fR = vandermonde(K, af.omega_d2);
    const CVecX tL = vandermonde(G, af.omega_r1), tR = vandermonde(G, af.omega_r2);
    NoiselessSnapshot s;
    s.Y_L = beta_L * fL * tL.transpose();
    s.Y_R = beta_R * fR * tR.cwiseProduct(rho).transpose();
    return s;
}

double total_noise_variance(const SystemModel& sys, const NoiseLevels& noise, cplx alpha_R2) {
    double v = noise.sigma_U * noise.sigma_U;
    if (sys.ris.active) v += sys.M() * sys.ris.eta * sys.ris.eta * std::norm(alpha_R2) * noise.sigma_R * noise.sigma_R;
    return v;
}

cplx complex_normal(std::mt19937_64& rng, double variance) {
    std::normal_distribution<double> n(0.0, std::sqrt(variance / 2.0));
    const double re = n(rng);
    const double im = n(rng);
    return {re, im};
}

ReceivedSnapshot synthesize_snapshot(const SystemModel& sys, const EpochParams& ep, cplx alpha_L, cplx alpha_R2,
                                     const NoiseLevels& noise, int epoch, std::mt19937_64& rng) {
    ReceivedSnapshot out;
    out.signal = noiseless_snapshot(sys, ep, alpha_L, alpha_R2).total();
    out.epoch = epoch;
    const double vU = noise.sigma_U * noise.sigma_U;
    const double vR = sys.ris.active
                          ? sys.M() * sys.ris.eta * sys.ris.eta * std::norm(alpha_R2) * noise.sigma_R * noise.sigma_R
                          : 0.0;
    out.sigma_n2 = vU + vR;
    out.Y = out.signal;
    if (out.sigma_n2 > 0.0) {
        // Column-major fill keeps the draw order fixed for a given seed.
        for (Eigen::Index g = 0; g < out.Y.cols(); ++g)
            for (Eigen::Index k = 0; k < out.Y.rows(); ++k) {
                cplx n = complex_normal(rng, vU);
                if (vR > 0.0) n += complex_normal(rng, vR);
                out.Y(k, g) += n;
            }
    }
    return out;
}

ReceivedSnapshot synthesize_snapshot(const UEState& ue, const SystemModel& sys, const EpochSchedule& sched, int n,
                                     const PathGains& gains, const NoiseLevels& noise, std::uint64_t noise_seed) {
    if (n < 0 || n >= static_cast<int>(gains.alpha_L.size()) || n >= static_cast<int>(gains.alpha_R2.size()))
        throw ConfigError("path gains missing for epoch " + std::to_string(n));
    std::mt19937_64 rng(noise_seed);
    return synthesize_snapshot(sys, true_epoch_params(ue, sys.anchors, sched, n), gains.alpha_L[n], gains.alpha_R2[n],
                               noise, n, rng);
}

double snr_db(const std::vector<ReceivedSnapshot>& run) {
    double s = 0.0, e = 0.0;
    for (const auto& snap : run) {
        s += snap.signal.squaredNorm();
        e += (snap.Y - snap.signal).squaredNorm();
    }
    if (e == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(s / e);
}

double free_space_amplitude(double lambda, double distance) { return lambda / (4.0 * kPi * distance); }

PathGains draw_path_gains(const UEState& ue, const AnchorSet& anchors, const EpochSchedule& sched, double lambda,
                          std::mt19937_64& rng) {
    std::uniform_real_distribution<double> phase(0.0, kTwoPi);
    PathGains g;
    g.alpha_R1 = free_space_amplitude(lambda, anchors.d0());
    for (int n = 0; n < sched.size(); ++n) {
        const Vec3 pn = propagate_state(ue, sched, n).p;
        const double aL = free_space_amplitude(lambda, (anchors.q1 - pn).norm());
        const double aR = free_space_amplitude(lambda, (anchors.q2 - pn).norm());
        const double phL = phase(rng);
        const double phR = phase(rng);
        g.alpha_L.push_back(std::polar(aL, phL));
        g.alpha_R2.push_back(std::polar(aR, phR));
    }
    return g;
}

double calibrate_sigma_u(const SystemModel& sys, const std::vector<CMatX>& signals, const std::vector<cplx>& alpha_R2,
                         double snr, double sigma_ratio) {
    if (signals.size() != alpha_R2.size()) throw ConfigError("calibration needs one RIS gain per snapshot");
    double energy = 0.0, weight = 0.0;
    for (size_t n = 0; n < signals.size(); ++n) {
        energy += signals[n].squaredNorm();
        double per_entry = 1.0;
        if (sys.ris.active)
            per_entry += sys.M() * sys.ris.eta * sys.ris.eta * std::norm(alpha_R2[n]) * sigma_ratio * sigma_ratio;
        weight += per_entry * double(signals[n].size());
    }
    if (!(energy > 0.0)) throw ConfigError("cannot calibrate noise against a zero signal");
    return std::sqrt(energy / (std::pow(10.0, snr / 10.0) * weight));
}

double amplification_from_budget(double p_ris, double p_tx, cplx alpha_R1, double sigma_R2, int M) {
    const double eta2 = p_ris / (M * (p_tx * std::norm(alpha_R1) + sigma_R2));
    return std::sqrt(std::max(eta2, 1.0));
}

}  // namespace rislocate
