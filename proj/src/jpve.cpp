#include "rislocate/jpve.hpp"

#include "rislocate/crlb.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <string>

namespace rislocate {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Vec8 = Eigen::Matrix<double, 8, 1>;

void MeasurementSet::validate() const {
    if (eta_hat.size() == 0 || eta_hat.size() % 6 != 0) throw ConfigError("measurement vector must hold 6 values per epoch");
    if (sigma_eta.rows() != eta_hat.size() || sigma_eta.cols() != eta_hat.size())
        throw ConfigError("measurement covariance has the wrong size");
    if (!eta_hat.allFinite() || !sigma_eta.allFinite()) throw ConfigError("measurements must be finite");
    const double scale = sigma_eta.cwiseAbs().maxCoeff();
    if ((sigma_eta - sigma_eta.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
        throw ConfigError("measurement covariance is not symmetric");
    Eigen::LDLT<MatX> ldlt(sigma_eta);
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 0.0))
        throw ConfigError("measurement covariance is not positive definite");
}

MeasurementSet MeasurementSet::from_params(const ChannelParams& params, const MatX& sigma_eta) {
    MeasurementSet m{stack_params(params), sigma_eta};
    m.validate();
    return m;
}

DifferentialMeasurements differentials(const MeasurementSet& m) {
    const MatX T = dmm_transform(m.epochs());
    DifferentialMeasurements d;
    d.eta_d = T * m.eta_hat;
    d.sigma_d = T * m.sigma_eta * T.transpose();
    return d;
}

DiffSystem build_linear_system(const MeasurementSet& m, const AnchorSet& a, const EpochSchedule& sched) {
    m.validate();
    const int N = m.epochs();
    if (sched.size() != N) throw ConfigError("schedule and measurements disagree on the epoch count");
    const DifferentialMeasurements dm = differentials(m);
    DiffSystem s;
    s.rho_hat.resize(4 * N);
    s.Phi_hat.resize(4 * N, 6);
    s.sigma_d = dm.sigma_d;
    s.J_err = MatX::Identity(4 * N, 4 * N);
    s.eta_d = dm.eta_d;
    const double qq = a.q2.squaredNorm() - a.q1.squaredNorm();
    for (int n = 0; n < N; ++n) {
        const double t = sched.offset(n);
        const double d12 = dm.eta_d(4 * n), r12 = dm.eta_d(4 * n + 1);
        const UnitFrame fr = unit_frame(Vec2(dm.eta_d(4 * n + 2), dm.eta_d(4 * n + 3)));
        // Row vectors e^T R^T etc. in the global frame.
        const Vec3 eg = a.R * fr.e, fg = a.R * fr.f, gg = a.R * fr.g;
        const int r = 4 * n;

        s.rho_hat(r) = d12 * d12 + 2.0 * d12 * eg.dot(a.q2) + qq;
        const Vec3 w = 2.0 * (d12 * eg - a.q1 + a.q2);
        s.Phi_hat.block<1, 3>(r, 0) = w.transpose();
        s.Phi_hat.block<1, 3>(r, 3) = t * w.transpose();

        s.rho_hat(r + 1) = d12 * r12 + r12 * eg.dot(a.q2);
        s.Phi_hat.block<1, 3>(r + 1, 0) = r12 * eg.transpose();
        s.Phi_hat.block<1, 3>(r + 1, 3) = ((t * r12 - d12) * eg + a.q1 - a.q2).transpose();

        s.rho_hat(r + 2) = fg.dot(a.q2);
        s.Phi_hat.block<1, 3>(r + 2, 0) = fg.transpose();
        s.Phi_hat.block<1, 3>(r + 2, 3) = t * fg.transpose();

        s.rho_hat(r + 3) = gg.dot(a.q2);
        s.Phi_hat.block<1, 3>(r + 3, 0) = gg.transpose();
        s.Phi_hat.block<1, 3>(r + 3, 3) = t * gg.transpose();
    }
    return s;
}

MatX error_jacobian(const Vec6& theta, const VecX& eta_d, const AnchorSet& a, const EpochSchedule& sched) {
    const int N = sched.size();
    if (eta_d.size() != 4 * N) throw ConfigError("differential vector has the wrong size");
    const Vec3 p = theta.head<3>(), v = theta.tail<3>();
    MatX J = MatX::Zero(4 * N, 4 * N);
    for (int n = 0; n < N; ++n) {
        const Vec3 pn = p + sched.offset(n) * v;
        const Vec3 b1 = a.q1 - pn, b2 = a.q2 - pn;
        const double d1 = b1.norm(), d2 = b2.norm();
        if (d1 < kMinRange || d2 < kMinRange) throw GeometryError("UE coincides with an anchor");
        const double r1 = v.dot(b1) / d1;
        const double d12 = eta_d(4 * n);
        const Vec2 phi(eta_d(4 * n + 2), eta_d(4 * n + 3));
        const Vec3 Rtv = a.R.transpose() * v;
        const int r = 4 * n;
        J(r, r) = 2.0 * d1;
        J(r + 1, r) = r1;
        J(r + 1, r + 1) = d1;
        J(r + 1, r + 2) = d12 * Rtv.dot(direction_daz(phi));
        J(r + 1, r + 3) = d12 * Rtv.dot(direction_del(phi));
        J(r + 2, r + 2) = -d2 * std::cos(phi(1));
        J(r + 3, r + 3) = -d2;
    }
    return J;
}

namespace {

// Symmetric square root of the inverse of C, with eigenvalues floored relative to the largest.
MatX whitening(const MatX& C, bool* floored) {
    Eigen::SelfAdjointEigenSolver<MatX> es(0.5 * (C + C.transpose()));
    VecX ev = es.eigenvalues();
    const double top = ev.cwiseAbs().maxCoeff();
    if (!(top > 0.0) || !std::isfinite(top)) throw InfeasibleError("differential error covariance vanished");
    const double floor = 1e-14 * top;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev(i) < floor) {
            ev(i) = floor;
            *floored = true;
        }
        ev(i) = 1.0 / std::sqrt(ev(i));
    }
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

struct WlsStep {
    Vec6 theta;
    MatX cov;
};

WlsStep wls_solve(const MatX& Phi, const VecX& rho, const MatX& L) {
    const MatX A = L * Phi;
    Eigen::ColPivHouseholderQR<MatX> qr(A);
    qr.setThreshold(1e-12);
    if (qr.rank() < 6) throw InfeasibleError("linear system has rank " + std::to_string(qr.rank()) + " < 6");
    WlsStep s;
    s.theta = qr.solve(L * rho);
    s.cov = equilibrated_inverse(A.transpose() * A);
    return s;
}

}  // namespace

StateEstimate wls_coarse_scaled(const DiffSystem& sys, const AnchorSet& anchors, const EpochSchedule& sched,
                                double weight_scale, const WlsOptions& opt) {
    if (!(weight_scale > 0.0)) throw ConfigError("weight scale must be positive");
    const Eigen::Index rows = sys.Phi_hat.rows();
    if (rows < 6) throw InfeasibleError("fewer linear equations than unknowns");
    StateEstimate est;
    const double ls = std::sqrt(weight_scale);
    MatX Jerr = MatX::Identity(rows, rows);
    WlsStep step = wls_solve(sys.Phi_hat, sys.rho_hat, ls * whitening(sys.sigma_d, &est.flags.weight_floored));
    int it = 1;
    for (; it < opt.max_iter; ++it) {
        Jerr = error_jacobian(step.theta, sys.eta_d, anchors, sched);
        const MatX L = ls * whitening(Jerr * sys.sigma_d * Jerr.transpose(), &est.flags.weight_floored);
        const WlsStep next = wls_solve(sys.Phi_hat, sys.rho_hat, L);
        const double change = (next.theta - step.theta).norm();
        step = next;
        if (change < opt.tol * (1.0 + step.theta.norm())) {
            ++it;
            break;
        }
    }
    est.theta = step.theta;
    est.xi.head<6>() = step.theta;
    est.covariance = step.cov * weight_scale;
    est.iterations = it;
    est.stage = StateStage::Coarse;
    return est;
}

StateEstimate wls_coarse(const DiffSystem& sys, const AnchorSet& anchors, const EpochSchedule& sched,
                         const WlsOptions& opt) {
    return wls_coarse_scaled(sys, anchors, sched, 1.0, opt);
}

Vec2 clock_init(const Vec6& theta, const MeasurementSet& m, const AnchorSet& a, const EpochSchedule& sched) {
    const int N = m.epochs();
    if (sched.size() != N) throw ConfigError("schedule and measurements disagree on the epoch count");
    const Vec3 p = theta.head<3>(), v = theta.tail<3>();
    MatX A = MatX::Zero(4 * N, 2), C = MatX::Zero(4 * N, 4 * N);
    VecX z(4 * N);
    for (int n = 0; n < N; ++n) {
        const double t = sched.offset(n);
        const Vec3 pn = p + t * v;
        const Vec3 q[2] = {a.q1, a.q2};
        for (int i = 0; i < 2; ++i) {
            const Vec3 b = q[i] - pn;
            const double d = b.norm();
            if (d < kMinRange) throw GeometryError("UE coincides with an anchor");
            z(4 * n + i) = m.eta_hat(6 * n + i) - d;
            A(4 * n + i, 0) = 1.0;
            A(4 * n + i, 1) = t;
            z(4 * n + 2 + i) = m.eta_hat(6 * n + 2 + i) - v.dot(b) / d;
            A(4 * n + 2 + i, 1) = 1.0;
        }
        C.block(4 * n, 4 * n, 4, 4) = m.sigma_eta.block(6 * n, 6 * n, 4, 4);
    }
    bool floored = false;
    const MatX L = whitening(C, &floored);
    return (L * A).colPivHouseholderQr().solve(L * z);
}

VecX measurement_function(const Vec8& xi, const AnchorSet& anchors, const EpochSchedule& sched) {
    return stack_params(true_channel_params(UEState::from_xi(xi), anchors, sched));
}

namespace {

VecX wrapped_residual(const VecX& eta_hat, const VecX& h) {
    VecX r = eta_hat - h;
    for (Eigen::Index n = 0; n < r.size() / 6; ++n) {
        r(6 * n + 4) = wrap_angle(r(6 * n + 4));
        r(6 * n + 5) = wrap_angle(r(6 * n + 5));
    }
    return r;
}

}  // namespace

StateEstimate gauss_newton_refine(const MeasurementSet& m, const Vec8& init_xi, const AnchorSet& anchors,
                                  const EpochSchedule& sched, const GaussNewtonOptions& opt) {
    m.validate();
    if (sched.size() != m.epochs()) throw ConfigError("schedule and measurements disagree on the epoch count");
    StateEstimate fallback;
    fallback.xi = init_xi;
    fallback.theta = init_xi.head<6>();
    fallback.stage = StateStage::Coarse;
    fallback.flags.diverged = true;

    bool floored = false;
    const MatX L = whitening(m.sigma_eta, &floored);
    auto residual = [&](const Vec8& x) -> VecX {
        return L * wrapped_residual(m.eta_hat, measurement_function(x, anchors, sched));
    };
    Vec8 xi = init_xi;
    MatX JtWJ;
    int it = 0;
    try {
        VecX b = residual(xi);
        if (!b.allFinite()) return fallback;
        while (it < opt.max_iter) {
            ++it;
            const MatX A = L * jacobian_state(UEState::from_xi(xi), anchors, sched);
            Eigen::ColPivHouseholderQR<MatX> qr(A);
            qr.setThreshold(1e-12);
            if (qr.rank() < 8) throw InfeasibleError("state Jacobian has rank " + std::to_string(qr.rank()) + " < 8");
            const Vec8 dx = qr.solve(b);
            if (!dx.allFinite()) return fallback;
            // Step halving: take the longest step 2^-k dx that does not raise the residual.
            const double res = b.norm();
            Vec8 step = dx;
            bool accepted = false;
            for (int k = 0; k < opt.max_halvings; ++k, step *= 0.5) {
                VecX bc;
                try {
                    bc = residual(xi + step);
                } catch (const GeometryError&) {
                    continue;
                }
                if (bc.allFinite() && bc.norm() <= res) {
                    b = bc;
                    accepted = true;
                    break;
                }
            }
            if (!accepted) break;
            xi += step;
            if (step.norm() < opt.tol * (1.0 + xi.norm())) break;
        }
        const MatX A = L * jacobian_state(UEState::from_xi(xi), anchors, sched);
        JtWJ = A.transpose() * A;
    } catch (const GeometryError&) {
        return fallback;
    }
    StateEstimate est;
    est.xi = xi;
    est.theta = xi.head<6>();
    est.covariance = equilibrated_inverse(JtWJ);
    est.stage = StateStage::Refined;
    est.iterations = it;
    est.flags.weight_floored = floored;
    return est;
}

StateEstimatePair solve_state(const MeasurementSet& m, const AnchorSet& anchors, const EpochSchedule& sched,
                              const WlsOptions& wopt, const GaussNewtonOptions& gopt) {
    StateEstimatePair out;
    out.coarse = wls_coarse(build_linear_system(m, anchors, sched), anchors, sched, wopt);
    out.coarse.xi.tail<2>() = clock_init(out.coarse.theta, m, anchors, sched);
    out.refined = gauss_newton_refine(m, out.coarse.xi, anchors, sched, gopt);
    out.refined.flags.weight_floored = out.refined.flags.weight_floored || out.coarse.flags.weight_floored;
    return out;
}

}  // namespace rislocate
