#include "rislocate/crlb.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace rislocate {

CMatX jacobian_channel(const SystemModel& sys, const EpochParams& ep, cplx alpha_L, cplx alpha_R2) {
    const AngularFrequencies af = frequencies_of(sys, ep);
    const int K = sys.K(), G = sys.G();
    const double lam = sys.lambda();
    const double dwd = -kTwoPi * sys.ofdm.delta_f / kSpeedOfLight;  // d omega_d / d distance
    const double dwr = kTwoPi * sys.ofdm.delta_t / lam;              // d omega_r / d rate

    const Vec2 phi(ep.phi_az, ep.phi_el);
    const CVecX aA = array_response(sys.positions, lam, sys.anchors.phi_A);
    const CVecX aD = array_response(sys.positions, lam, phi);
    const CVecX combined = aA.cwiseProduct(aD);
    const VecX paz = sys.positions * direction_daz(phi) * (kTwoPi / lam);
    const VecX pel = sys.positions * direction_del(phi) * (kTwoPi / lam);
    const CVecX rho = sys.profile * combined;
    const CVecX rho_az = sys.profile * (kJ * paz.cast<cplx>()).cwiseProduct(combined);
    const CVecX rho_el = sys.profile * (kJ * pel.cast<cplx>()).cwiseProduct(combined);

    const CVecX fL = vandermonde(K, af.omega_d1), fR = vandermonde(K, af.omega_d2);
    const CVecX tL = vandermonde(G, af.omega_r1), tR = vandermonde(G, af.omega_r2).cwiseProduct(rho);
    const CVecX tRaz = vandermonde(G, af.omega_r2).cwiseProduct(rho_az);
    const CVecX tRel = vandermonde(G, af.omega_r2).cwiseProduct(rho_el);
    const cplx x = sys.ofdm.pilot;
    const cplx bL = alpha_L * x, bR = sys.alpha_R1 * alpha_R2 * x;

    CVecX kk(K), gg(G);
    for (int k = 0; k < K; ++k) kk(k) = kJ * double(k);
    for (int g = 0; g < G; ++g) gg(g) = kJ * double(g);

    auto vec = [](const CMatX& M) { return Eigen::Map<const CVecX>(M.data(), M.size()); };
    CMatX J(Eigen::Index(K) * G, kChannelParams);
    J.col(0) = vec(bL * dwd * kk.cwiseProduct(fL) * tL.transpose());
    J.col(1) = vec(bR * dwd * kk.cwiseProduct(fR) * tR.transpose());
    J.col(2) = vec(bL * dwr * fL * gg.cwiseProduct(tL).transpose());
    J.col(3) = vec(bR * dwr * fR * gg.cwiseProduct(tR).transpose());
    J.col(4) = vec(bR * fR * tRaz.transpose());
    J.col(5) = vec(bR * fR * tRel.transpose());
    J.col(6) = vec(x * fL * tL.transpose());
    J.col(7) = kJ * J.col(6);
    J.col(8) = vec(sys.alpha_R1 * x * fR * tR.transpose());
    J.col(9) = kJ * J.col(8);
    return J;
}

MatX real_stack(const CMatX& J) {
    MatX out(2 * J.rows(), J.cols());
    out.topRows(J.rows()) = J.real();
    out.bottomRows(J.rows()) = J.imag();
    return out;
}

MatX equilibrated_inverse(const MatX& A, bool* singular, double rcond) {
    const Eigen::Index n = A.rows();
    VecX d(n);
    for (Eigen::Index i = 0; i < n; ++i) d(i) = A(i, i) > 0.0 ? 1.0 / std::sqrt(A(i, i)) : 1.0;
    const MatX S = d.asDiagonal() * A * d.asDiagonal();
    Eigen::SelfAdjointEigenSolver<MatX> es(0.5 * (S + S.transpose()));
    const VecX& ev = es.eigenvalues();
    const double top = std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
    bool sing = false;
    VecX inv(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (ev(i) > rcond * top) {
            inv(i) = 1.0 / ev(i);
        } else {
            inv(i) = 0.0;
            sing = true;
        }
    }
    if (singular) *singular = sing;
    const MatX Sinv = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
    return d.asDiagonal() * Sinv * d.asDiagonal();
}

ChannelFim fim_channel(const CMatX& J, double sigma_n2) {
    if (!(sigma_n2 > 0.0)) throw ConfigError("Fisher information needs a positive noise variance");
    ChannelFim f;
    // Real and imaginary parts each carry variance sigma^2 / 2.
    const MatX Jr = real_stack(J);
    f.full = (2.0 / sigma_n2) * (Jr.transpose() * Jr);
    f.full = 0.5 * (f.full + f.full.transpose());
    const MatX O1 = f.full.topLeftCorner(6, 6), O2 = f.full.topRightCorner(6, 4), O3 = f.full.bottomRightCorner(4, 4);
    bool sing = false;
    const MatX O3inv = equilibrated_inverse(O3, &sing);
    f.nuisance_singular = sing;
    f.equiv = O1 - O2 * O3inv * O2.transpose();
    f.equiv = 0.5 * (f.equiv + f.equiv.transpose());
    return f;
}

ChannelCrlb channel_crlb(const SystemModel& sys, const EpochParams& ep, cplx alpha_L, cplx alpha_R2, double sigma_n2) {
    ChannelCrlb c;
    c.fim = fim_channel(jacobian_channel(sys, ep, alpha_L, alpha_R2), sigma_n2);
    c.cov = equilibrated_inverse(c.fim.equiv, &c.singular);
    c.crlb = c.cov.diagonal();
    return c;
}

// ---------------------------------------------------------------------------

namespace {

struct LinkTerms {
    Vec3 b;
    double s;
    Vec3 k;
};

LinkTerms link(const Vec3& q, const Vec3& pn) {
    LinkTerms l;
    l.b = q - pn;
    const double n = l.b.norm();
    if (n < kMinRange) throw GeometryError("UE coincides with an anchor");
    l.s = 1.0 / n;
    l.k = l.s * l.b;
    return l;
}

// Rows (d1, d2, r1, r2, az, el) of one epoch.
Eigen::Matrix<double, 6, 8> epoch_jacobian(const UEState& ue, const AnchorSet& a, double t) {
    const Vec3 pn = ue.p + t * ue.v;
    const Vec3& v = ue.v;
    Eigen::Matrix<double, 6, 8> J = Eigen::Matrix<double, 6, 8>::Zero();
    const LinkTerms L[2] = {link(a.q1, pn), link(a.q2, pn)};
    for (int i = 0; i < 2; ++i) {
        const LinkTerms& l = L[i];
        const Vec3 dd = -l.k;
        J.block<1, 3>(i, 0) = dd.transpose();
        J.block<1, 3>(i, 3) = t * dd.transpose();
        J(i, 6) = 1.0;
        J(i, 7) = t;
        const double s3bv = l.s * l.s * l.s * l.b.dot(v);
        const Vec3 drp = s3bv * l.b - l.s * v;
        const Vec3 drv = l.s * (l.b - t * v) + t * s3bv * l.b;
        J.block<1, 3>(2 + i, 0) = drp.transpose();
        J.block<1, 3>(2 + i, 3) = drv.transpose();
        J(2 + i, 7) = 1.0;
    }
    const LinkTerms& r = L[1];
    const Vec3 r1 = a.R.col(0), r2 = a.R.col(1), r3 = a.R.col(2);
    const double w1 = r1.dot(r.b), w2 = r2.dot(r.b), w3 = r3.dot(r.b);
    const double hz = w1 * w1 + w2 * w2;
    if (hz < kMinRange * kMinRange) throw GeometryError("azimuth undefined at the panel zenith");
    const Vec3 daz = (w2 * r1 - w1 * r2) / hz;
    const double z = r.s * w3;
    const Vec3 del = r.s / std::sqrt(1.0 - z * z) * (r.s * r.s * w3 * r.b - r3);
    J.block<1, 3>(4, 0) = daz.transpose();
    J.block<1, 3>(4, 3) = t * daz.transpose();
    J.block<1, 3>(5, 0) = del.transpose();
    J.block<1, 3>(5, 3) = t * del.transpose();
    return J;
}

}  // namespace

MatX jacobian_state(const UEState& ue, const AnchorSet& anchors, const EpochSchedule& sched) {
    const int N = sched.size();
    MatX J(6 * N, 8);
    for (int n = 0; n < N; ++n) J.middleRows(6 * n, 6) = epoch_jacobian(ue, anchors, sched.offset(n));
    return J;
}

MatX dmm_transform(int N) {
    MatX T = MatX::Zero(4 * N, 6 * N);
    for (int n = 0; n < N; ++n) {
        T(4 * n, 6 * n) = 1.0;
        T(4 * n, 6 * n + 1) = -1.0;
        T(4 * n + 1, 6 * n + 2) = 1.0;
        T(4 * n + 1, 6 * n + 3) = -1.0;
        T(4 * n + 2, 6 * n + 4) = 1.0;
        T(4 * n + 3, 6 * n + 5) = 1.0;
    }
    return T;
}

MatX jacobian_dmm(const UEState& ue, const AnchorSet& anchors, const EpochSchedule& sched) {
    // Clock columns cancel in the differences and do not touch the angles.
    return (dmm_transform(sched.size()) * jacobian_state(ue, anchors, sched)).leftCols(6);
}

MatX jacobian_direct_only(const UEState& ue, const AnchorSet& anchors, const EpochSchedule& sched) {
    const int N = sched.size();
    const MatX J = jacobian_state(ue, anchors, sched);
    MatX out(2 * N, 8);
    for (int n = 0; n < N; ++n) {
        out.row(2 * n) = J.row(6 * n);
        out.row(2 * n + 1) = J.row(6 * n + 2);
    }
    return out;
}

namespace {

StateBound bound_from_fim(MatX fim) {
    StateBound b;
    b.fim = 0.5 * (fim + fim.transpose());
    b.cov = equilibrated_inverse(b.fim, &b.singular);
    b.crlb = b.cov.diagonal();
    b.peb = b.crlb.head(3).sum();
    b.veb = b.crlb.segment(3, 3).sum();
    return b;
}

}  // namespace

StateBound fim_state(const MatX& J, const MatX& omega_eta) { return bound_from_fim(J.transpose() * omega_eta * J); }

StateBound fim_dmm(const MatX& Jd, const MatX& sigma_d) {
    Eigen::LDLT<MatX> ldlt(sigma_d);
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 0.0))
        throw DegeneracyError("differential covariance is not positive definite");
    return bound_from_fim(Jd.transpose() * ldlt.solve(Jd));
}

MatX block_diagonal(const std::vector<MatX>& blocks) {
    Eigen::Index r = 0, c = 0;
    for (const auto& b : blocks) r += b.rows(), c += b.cols();
    MatX out = MatX::Zero(r, c);
    r = c = 0;
    for (const auto& b : blocks) {
        out.block(r, c, b.rows(), b.cols()) = b;
        r += b.rows();
        c += b.cols();
    }
    return out;
}

ScenarioBound scenario_bound(const UEState& ue, const SystemModel& sys, const EpochSchedule& sched,
                             const PathGains& gains, const std::vector<double>& sigma_n2) {
    const int N = sched.size();
    if (int(sigma_n2.size()) != N || int(gains.alpha_L.size()) != N || int(gains.alpha_R2.size()) != N)
        throw ConfigError("bound needs one gain pair and one noise variance per epoch");
    ScenarioBound sb;
    const ChannelParams truth = true_channel_params(ue, sys.anchors, sched);
    std::vector<MatX> om, cov;
    for (int n = 0; n < N; ++n) {
        sb.epochs.push_back(channel_crlb(sys, truth[n], gains.alpha_L[n], gains.alpha_R2[n], sigma_n2[n]));
        om.push_back(sb.epochs.back().fim.equiv);
        cov.push_back(sb.epochs.back().cov);
    }
    sb.omega_eta = block_diagonal(om);
    sb.sigma_eta = block_diagonal(cov);
    const MatX T = dmm_transform(N);
    sb.sigma_d = T * sb.sigma_eta * T.transpose();
    sb.omm = fim_state(jacobian_state(ue, sys.anchors, sched), sb.omega_eta);
    sb.dmm = fim_dmm(jacobian_dmm(ue, sys.anchors, sched), sb.sigma_d);
    return sb;
}

int numerical_rank(const MatX& A, double rel_tol) {
    if (A.size() == 0) return 0;
    Eigen::JacobiSVD<MatX> svd(A);
    const VecX& s = svd.singularValues();
    if (!(s(0) > 0.0)) return 0;
    return int((s.array() > rel_tol * s(0)).count());
}

RankReport rank_analysis(const UEState& ue, const AnchorSet& anchors, const EpochSchedule& sched) {
    RankReport r;
    const MatX Jw = jacobian_direct_only(ue, anchors, sched);
    const MatX J = jacobian_state(ue, anchors, sched);
    r.rank_direct_only = numerical_rank(Jw);
    r.rank_full = numerical_rank(J);
    r.sv_direct_only = Eigen::JacobiSVD<MatX>(Jw).singularValues();
    r.sv_full = Eigen::JacobiSVD<MatX>(J).singularValues();
    return r;
}

}  // namespace rislocate
