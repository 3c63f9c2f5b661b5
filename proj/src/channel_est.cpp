#include "rislocate/channel_est.hpp"

#include <Eigen/Eigenvalues>
#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace rislocate {

namespace {

// Atom B * a^(L)(omega) for a fixed transform B.
AtomFn transformed_atom(const CMatX& B) {
    return [B](double omega, CVecX& a, CVecX& da) {
        const Eigen::Index L = B.cols();
        CVecX v(L), dv(L);
        for (Eigen::Index l = 0; l < L; ++l) {
            v(l) = std::polar(1.0, omega * double(l));
            dv(l) = cplx(0.0, double(l)) * v(l);
        }
        a = B * v;
        da = B * dv;
    };
}

}  // namespace

// ---------------------------------------------------------------------------

DelayEstimate estimate_delay_freqs(const CMatX& U1, SearchBackend backend) {
    if (U1.cols() != 2) throw std::invalid_argument("delay estimation needs two factor columns");
    const CVecX ones = CVecX::Ones(U1.rows());
    const PeakResult a = maximize_weighted(U1.col(0), ones, 1.0, -kTwoPi, 0.0, backend);
    const PeakResult b = maximize_weighted(U1.col(1), ones, 1.0, -kTwoPi, 0.0, backend);
    // More negative frequency means a longer path.
    DelayEstimate d;
    const bool first_direct = a.omega >= b.omega;
    d.direct_col = first_direct ? 0 : 1;
    d.omega_d1 = first_direct ? a.omega : b.omega;
    d.omega_d2 = first_direct ? b.omega : a.omega;
    d.peak_direct = first_direct ? a.peak : b.peak;
    d.peak_cascaded = first_direct ? b.peak : a.peak;
    d.unreliable = std::min(a.peak, b.peak) < kUnreliablePeak;
    return d;
}

PeakResult estimate_omega_r1(const CVecX& u21, int G2, SearchBackend backend) {
    return maximize_weighted(u21, CVecX::Ones(u21.size()), double(G2), -kPi / G2, kPi / G2, backend);
}

bool doppler_near_edge(double omega, int G1, int G2) {
    return std::abs(G2 * omega) >= kPi - kPi / (4.0 * G1);
}

PeakResult estimate_omega_r1_mode3(const CVecX& u31, int G2) {
    if (u31.size() != G2) throw std::invalid_argument("mode-3 column length must equal G2");
    return maximize_weighted(u31, CVecX::Ones(G2), 1.0, -kPi, kPi, SearchBackend::Grid);
}

double ts_esprit_aod_x(const CVecX& u22, double omega_r2, const SystemModel& sys) {
    const int G1 = sys.ofdm.G1, G2 = sys.ofdm.G2, Mx = sys.ris.Mx;
    if (G1 < 2) throw ConfigError("TS-ESPRIT needs G1 >= 2");
    if (u22.size() != G1) throw std::invalid_argument("mode-2 column length must equal G1");
    const CVecX ubar = vandermonde(G1, G2 * omega_r2).conjugate().cwiseProduct(u22);
    // With w_g = e^{-j 2 pi g / G1}, the transformed steering obeys
    //   ubar = z (w .* ubar) + alpha * 1 + beta * w^Mx,
    // a shift invariance in z = e^{j omega_x} up to the two nuisance directions.
    CVecX w(G1), wM(G1);
    for (int g = 0; g < G1; ++g) {
        w(g) = std::polar(1.0, -kTwoPi * g / G1);
        wM(g) = std::polar(1.0, -kTwoPi * double(g) * Mx / G1);
    }
    const bool collapsed = (wM - CVecX::Ones(G1)).norm() < 1e-9;
    CMatX N(G1, collapsed ? 1 : 2);
    N.col(0) = CVecX::Ones(G1);
    if (!collapsed) N.col(1) = wM;
    if (G1 - N.cols() < 1) throw ConfigError("TS-ESPRIT needs more mode-2 rows than nuisance directions");
    const CMatX Q = N.householderQr().householderQ() * CMatX::Identity(G1, N.cols());
    auto project = [&](const CVecX& x) -> CVecX { return x - Q * (Q.adjoint() * x); };
    const CVecX a = project(w.cwiseProduct(ubar));
    const CVecX b = project(ubar);
    const double den = a.squaredNorm();
    if (!(den > 0.0)) throw DegeneracyError("TS-ESPRIT shift system is empty");
    return std::arg(a.dot(b) / den);
}

double omega_r2_objective(const CVecX& u22, double omega_r2, const SystemModel& sys) {
    const int G1 = sys.ofdm.G1, G2 = sys.ofdm.G2, Mx = sys.ris.Mx;
    const double wx = ts_esprit_aod_x(u22, omega_r2, sys);
    const CVecX b = vandermonde(G1, G2 * omega_r2).cwiseProduct(sys.psi_x.adjoint() * vandermonde(Mx, wx));
    return normalized_correlation(u22, b);
}

std::vector<PeakResult> omega_r2_candidates(const CVecX& u22, const SystemModel& sys, int max_candidates) {
    const int G2 = sys.ofdm.G2;
    if (!(u22.norm() > 0.0)) throw DegeneracyError("cascaded mode-2 column vanished");
    const int grid = 512;
    const double lo = -kPi / G2, hi = kPi / G2, step = (hi - lo) / grid, width = hi - lo;
    std::vector<double> val(grid);
    for (int i = 0; i < grid; ++i) val[i] = omega_r2_objective(u22, lo + (i + 1) * step, sys);
    const double top = *std::max_element(val.begin(), val.end());
    if (!(top > 1e-12)) throw DegeneracyError("Doppler search objective is flat");

    // Circular local maxima of the grid; the interval wraps because G2*omega is a phase.
    std::vector<int> peaks;
    for (int i = 0; i < grid; ++i) {
        const double l = val[(i + grid - 1) % grid], r = val[(i + 1) % grid];
        if (val[i] >= l && val[i] > r) peaks.push_back(i);
    }
    if (peaks.empty()) peaks.push_back(int(std::max_element(val.begin(), val.end()) - val.begin()));
    std::sort(peaks.begin(), peaks.end(), [&](int a, int b) { return val[a] > val[b]; });
    if (int(peaks.size()) > max_candidates) peaks.resize(max_candidates);

    std::vector<PeakResult> out;
    auto neg = [&](double w) { return -omega_r2_objective(u22, w, sys); };
    for (const int i : peaks) {
        const double center = lo + (i + 1) * step;
        // 28 bits puts the bracket tolerance near 1e-8 rad for |omega| < 1.
        const auto r = boost::math::tools::brent_find_minima(neg, center - step, center + step, 28);
        PeakResult p{r.first, -r.second};
        if (p.peak < val[i]) p = {center, val[i]};
        if (p.omega > hi) p.omega -= width;
        if (p.omega <= lo) p.omega += width;
        out.push_back(p);
    }
    std::stable_sort(out.begin(), out.end(), [](const PeakResult& a, const PeakResult& b) { return a.peak > b.peak; });
    return out;
}

PeakResult estimate_omega_r2(const CVecX& u22, const SystemModel& sys) {
    return omega_r2_candidates(u22, sys, 1).front();
}

AodEstimate estimate_aods(const CVecX& u22, const CVecX& u32, double omega_r2, const SystemModel& sys) {
    const int G1 = sys.ofdm.G1, G2 = sys.ofdm.G2;
    const CMatX Bx = vandermonde(G1, G2 * omega_r2).asDiagonal() * sys.psi_x.adjoint();
    const CMatX By = vandermonde(G2, omega_r2).asDiagonal() * sys.psi_y.adjoint();
    AodEstimate e;
    e.x = maximize_correlation(u22, transformed_atom(Bx), -kPi, kPi, oversampled_grid(sys.ris.Mx, kTwoPi));
    e.y = maximize_correlation(u32, transformed_atom(By), -kPi, kPi, oversampled_grid(sys.ris.My, kTwoPi));
    return e;
}

JadeEstimate refine_once(const CVecX& u22, const CVecX& u32, double omega_phi_x, const SystemModel& sys) {
    const int G2 = sys.ofdm.G2;
    const CVecX wts = sys.psi_x.adjoint() * vandermonde(sys.ris.Mx, omega_phi_x);
    const PeakResult r2 = maximize_weighted(u22, wts, double(G2), -kPi / G2, kPi / G2, SearchBackend::Grid);
    const AodEstimate a = estimate_aods(u22, u32, r2.omega, sys);
    return {r2.omega, a.x.omega, a.y.omega, r2.peak, a.x.peak, a.y.peak};
}

EpochParams params_from_frequencies(const AngularFrequencies& af, const SystemModel& sys, bool* out_of_domain) {
    const double c = kSpeedOfLight, df = sys.ofdm.delta_f, dt = sys.ofdm.delta_t, lam = sys.lambda();
    const double ds = sys.ris.delta_s;
    EpochParams ep;
    ep.d1 = -c * af.omega_d1 / (kTwoPi * df);
    ep.d2 = -c * af.omega_d2 / (kTwoPi * df) - sys.d0();
    ep.r1 = lam * af.omega_r1 / (kTwoPi * dt);
    ep.r2 = lam * af.omega_r2 / (kTwoPi * dt);
    const Vec3 eA = direction(sys.anchors.phi_A);
    const double ex = lam * af.omega_phi_x / (kTwoPi * ds) - eA(0);
    const double ey = lam * af.omega_phi_y / (kTwoPi * ds) - eA(1);
    double rho2 = ex * ex + ey * ey;
    const bool clamp = rho2 > 1.0;
    if (clamp) rho2 = 1.0;
    if (out_of_domain) *out_of_domain = clamp;
    double az = std::atan2(ey, ex);
    if (az <= -kPi) az = kPi;
    ep.phi_az = az;
    ep.phi_el = sys.el_sign * std::acos(std::sqrt(rho2));
    return ep;
}

// ---------------------------------------------------------------------------

CMatX channel_matrix(const SystemModel& sys, const EpochParams& ep, cplx alpha_L, cplx alpha_R2) {
    return noiseless_snapshot(sys, ep, alpha_L, alpha_R2).total() / sys.ofdm.pilot;
}

ConcentratedFit concentrated_fit(const CMatX& Y, const EpochParams& ep, const SystemModel& sys, double max_condition) {
    const NoiselessSnapshot mu = noiseless_snapshot(sys, ep, 1.0, 1.0);
    const Eigen::Index n = Y.size();
    CMatX Xi(n, 2);
    Xi.col(0) = Eigen::Map<const CVecX>(mu.Y_L.data(), n);
    Xi.col(1) = Eigen::Map<const CVecX>(mu.Y_R.data(), n);
    const Eigen::Map<const CVecX> y(Y.data(), n);
    Eigen::Matrix2cd gram = Xi.adjoint() * Xi;
    ConcentratedFit fit;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2cd> es(gram);
    const double hi = es.eigenvalues()(1), lo = es.eigenvalues()(0);
    if (!(hi > 0.0)) {
        fit.objective = y.squaredNorm();
        fit.regularized = true;
        return fit;
    }
    if (lo <= hi / max_condition) {
        gram += Eigen::Matrix2cd::Identity() * (hi / max_condition);
        fit.regularized = true;
    }
    const Eigen::Vector2cd alpha = gram.ldlt().solve(Xi.adjoint() * y);
    fit.alpha_L = alpha(0);
    fit.alpha_R2 = alpha(1);
    fit.objective = (y - Xi * alpha).squaredNorm();
    return fit;
}

ChannelEstimate coarse_estimate(const CMatX& Y, const SystemModel& sys, const CoarseOptions& opt) {
    ChannelEstimate est;
    est.stage = Stage::Coarse;
    const Tensor3 t(Y, sys.ofdm.G1, sys.ofdm.G2);
    CpdFactors f;
    try {
        const AlsResult als = als_refine(t, vscpd(t), opt.als);
        f = als.factors;
        est.als_iterations = als.iterations;
        est.flags.als_regularized = als.regularized;
    } catch (const DegeneracyError&) {
        est.flags.degenerate = true;
        return est;
    }

    const DelayEstimate d = estimate_delay_freqs(f.U1, opt.backend);
    const int di = d.direct_col, ci = 1 - d.direct_col;
    const PeakResult r1 = estimate_omega_r1(f.U2.col(di), sys.ofdm.G2, opt.backend);
    const CVecX u22 = f.U2.col(ci), u32 = f.U3.col(ci);

    // The mode-2 column alone can leave Doppler aliases of almost equal correlation (exactly
    // equal when the x-frequency sits on a column of the RIS profile). Each candidate is
    // carried through the angle stage and the one with the best snapshot fit wins.
    JadeEstimate jade;
    double best_obj = std::numeric_limits<double>::infinity();
    try {
        for (const PeakResult& r2 : omega_r2_candidates(u22, sys, opt.doppler_candidates)) {
            const AodEstimate a = estimate_aods(u22, u32, r2.omega, sys);
            JadeEstimate j{r2.omega, a.x.omega, a.y.omega, r2.peak, a.x.peak, a.y.peak};
            if (opt.refine_round) j = refine_once(u22, u32, j.omega_phi_x, sys);
            const AngularFrequencies af{d.omega_d1, d.omega_d2, r1.omega, j.omega_r2, j.omega_phi_x, j.omega_phi_y};
            const double obj = concentrated_fit(Y, params_from_frequencies(af, sys), sys).objective;
            if (obj < best_obj) {
                best_obj = obj;
                jade = j;
            }
        }
    } catch (const DegeneracyError&) {
        est.flags.degenerate = true;
        return est;
    }

    est.freqs = {d.omega_d1, d.omega_d2, r1.omega, jade.omega_r2, jade.omega_phi_x, jade.omega_phi_y};
    est.flags.unreliable_factor = d.unreliable || r1.peak < kUnreliablePeak || jade.peak_r2 < kUnreliablePeak ||
                                  jade.peak_x < kUnreliablePeak || jade.peak_y < kUnreliablePeak;
    est.flags.doppler_edge = doppler_near_edge(r1.omega, sys.ofdm.G1, sys.ofdm.G2) ||
                             doppler_near_edge(jade.omega_r2, sys.ofdm.G1, sys.ofdm.G2);
    bool ood = false;
    est.params = params_from_frequencies(est.freqs, sys, &ood);
    est.flags.el_out_of_domain = ood;
    const ConcentratedFit fit = concentrated_fit(Y, est.params, sys);
    est.alpha_L = fit.alpha_L;
    est.alpha_R2 = fit.alpha_R2;
    est.objective = fit.objective;
    return est;
}

// ---------------------------------------------------------------------------
// Stage II: quasi-Newton on the concentrated objective

namespace {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

// Natural scale of each parameter: roughly one radian of phase across the aperture.
Vec6 parameter_scale(const SystemModel& sys) {
    const double sd = kSpeedOfLight / (kTwoPi * sys.ofdm.delta_f * sys.K());
    const double sr = sys.lambda() / (kTwoPi * sys.ofdm.delta_t * sys.G());
    const double sa = sys.lambda() / (kTwoPi * sys.ris.delta_s * std::max(sys.ris.Mx, sys.ris.My));
    Vec6 s;
    s << sd, sd, sr, sr, sa, sa;
    return s;
}

struct ScaledObjective {
    const CMatX& Y;
    const SystemModel& sys;
    Vec6 scale;
    double norm2;
    double max_condition;
    mutable int evaluations = 0;

    double operator()(const Vec6& x) const {
        ++evaluations;
        const Vec6 e = x.cwiseProduct(scale);
        return concentrated_fit(Y, EpochParams::from_vec(e), sys, max_condition).objective / norm2;
    }

    Vec6 gradient(const Vec6& x) const {
        Vec6 g;
        for (int i = 0; i < 6; ++i) {
            const double h = 1e-6 * std::max(std::abs(x(i)), 1.0);
            Vec6 xp = x, xm = x;
            xp(i) += h;
            xm(i) -= h;
            g(i) = ((*this)(xp) - (*this)(xm)) / (2.0 * h);
        }
        return g;
    }

    Mat6 hessian(const Vec6& x, double fx) const {
        Mat6 H;
        Vec6 h;
        for (int i = 0; i < 6; ++i) h(i) = 1e-4 * std::max(std::abs(x(i)), 1.0);
        for (int i = 0; i < 6; ++i) {
            Vec6 xp = x, xm = x;
            xp(i) += h(i);
            xm(i) -= h(i);
            H(i, i) = ((*this)(xp) - 2.0 * fx + (*this)(xm)) / (h(i) * h(i));
            for (int j = 0; j < i; ++j) {
                Vec6 a = x, b = x, c = x, d = x;
                a(i) += h(i), a(j) += h(j);
                b(i) += h(i), b(j) -= h(j);
                c(i) -= h(i), c(j) += h(j);
                d(i) -= h(i), d(j) -= h(j);
                H(i, j) = H(j, i) = ((*this)(a) - (*this)(b) - (*this)(c) + (*this)(d)) / (4.0 * h(i) * h(j));
            }
        }
        return H;
    }
};

Mat6 inverse_pd(const Mat6& H) {
    Eigen::SelfAdjointEigenSolver<Mat6> es(H);
    Vec6 ev = es.eigenvalues();
    const double top = std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
    for (int i = 0; i < 6; ++i) ev(i) = 1.0 / std::max(std::abs(ev(i)), 1e-8 * top);
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

ChannelEstimate mle_refine(const CMatX& Y, const ChannelEstimate& coarse, const SystemModel& sys, const MleOptions& opt) {
    ChannelEstimate out = coarse;
    out.stage = Stage::Refined;
    if (coarse.flags.degenerate) {
        out.flags.mle_failed = true;
        return out;
    }
    const double norm2 = Y.squaredNorm();
    if (!(norm2 > 0.0)) {
        out.flags.mle_failed = true;
        return out;
    }
    const ScaledObjective f{Y, sys, parameter_scale(sys), norm2, opt.max_condition};
    Vec6 x = coarse.params.vec().cwiseQuotient(f.scale);
    double fx = f(x);
    if (!std::isfinite(fx)) {
        out.flags.mle_failed = true;
        return out;
    }
    Vec6 g = f.gradient(x);
    Mat6 Hinv = inverse_pd(f.hessian(x, fx));
    int it = 0;
    for (; it < opt.max_iter; ++it) {
        // Relative to the objective so noise-free fits run to the rounding floor.
        if (g.norm() < opt.grad_tol * fx) break;
        Vec6 p = -Hinv * g;
        double slope = g.dot(p);
        if (!(slope < 0.0)) {
            Hinv = inverse_pd(f.hessian(x, fx));
            p = -Hinv * g;
            slope = g.dot(p);
            if (!(slope < 0.0)) break;
        }
        double t = 1.0, fn = fx;
        Vec6 xn = x;
        bool accepted = false;
        for (int ls = 0; ls < 40; ++ls) {
            xn = x + t * p;
            fn = f(xn);
            if (!std::isfinite(fn)) {
                out.flags.mle_failed = true;
                out.params = coarse.params;
                out.mle_iterations = it;
                return out;
            }
            if (fn <= fx + 1e-4 * t * slope) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) break;  // no further decrease representable
        const Vec6 gn = f.gradient(xn);
        const Vec6 s = xn - x, yv = gn - g;
        const double sy = s.dot(yv);
        if (sy > 1e-300) {
            const double rho = 1.0 / sy;
            const Mat6 I = Mat6::Identity();
            Hinv = (I - rho * s * yv.transpose()) * Hinv * (I - rho * yv * s.transpose()) + rho * s * s.transpose();
        }
        const bool tiny = s.norm() < 1e-14 * (1.0 + x.norm());
        x = xn;
        fx = fn;
        g = gn;
        if (tiny) {
            ++it;
            break;
        }
    }
    EpochParams ep = EpochParams::from_vec(x.cwiseProduct(f.scale));
    ep.phi_az = wrap_angle(ep.phi_az);
    ep.phi_el = sys.el_sign * std::abs(ep.phi_el);
    const ConcentratedFit fit = concentrated_fit(Y, ep, sys, opt.max_condition);
    out.params = ep;
    out.alpha_L = fit.alpha_L;
    out.alpha_R2 = fit.alpha_R2;
    out.objective = fit.objective;
    out.flags.mle_regularized = fit.regularized;
    out.mle_iterations = it;
    out.freqs = frequencies_of(sys, ep);
    return out;
}

ChannelEstimatePair estimate_channel(const CMatX& Y, const SystemModel& sys, const CoarseOptions& copt,
                                     const MleOptions& mopt) {
    ChannelEstimatePair p;
    p.coarse = coarse_estimate(Y, sys, copt);
    p.refined = mle_refine(Y, p.coarse, sys, mopt);
    return p;
}

}  // namespace rislocate
