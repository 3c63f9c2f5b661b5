#include "rislocate/channel_est.hpp"

#include <Eigen/Eigenvalues>
#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace rislocate {

double normalized_correlation(const CVecX& u, const CVecX& a) {
    const double den = u.norm() * a.norm();
    if (!(den > 0.0)) return 0.0;
    return std::abs(u.dot(a)) / den;
}

int oversampled_grid(int L, double width) { return std::max(16, static_cast<int>(std::ceil(4.0 * L * width / kTwoPi))); }

AtomFn weighted_vandermonde_atom(const CVecX& weights, double scale) {
    return [weights, scale](double omega, CVecX& a, CVecX& da) {
        const Eigen::Index L = weights.size();
        a.resize(L);
        da.resize(L);
        for (Eigen::Index l = 0; l < L; ++l) {
            a(l) = weights(l) * std::polar(1.0, scale * omega * double(l));
            da(l) = cplx(0.0, scale * double(l)) * a(l);
        }
    };
}

namespace {

double fold(double omega, double lo, double hi) {
    const double width = hi - lo;
    omega = lo + std::fmod(omega - lo, width);
    if (omega <= lo) omega += width;
    if (omega > hi) omega -= width;
    return omega;
}

// Sign-carrying numerator of d/domega of |u^H a|^2 / |a|^2.
double slope(const CVecX& u, const AtomFn& atom, double omega, CVecX& a, CVecX& da) {
    atom(omega, a, da);
    const cplx s = u.dot(a), ds = u.dot(da);
    const double n = a.squaredNorm();
    const double dn = 2.0 * a.dot(da).real();
    return 2.0 * (std::conj(s) * ds).real() * n - std::norm(s) * dn;
}

double corr(const CVecX& u, const AtomFn& atom, double omega, CVecX& a, CVecX& da) {
    atom(omega, a, da);
    return normalized_correlation(u, a);
}

// Locates the stationary point inside [left, right] that bounds the local maximum.
double polish(const CVecX& u, const AtomFn& atom, double left, double right) {
    CVecX a, da;
    const double sl = slope(u, atom, left, a, da);
    const double sr = slope(u, atom, right, a, da);
    if (sl > 0.0 && sr < 0.0) {
        std::uintmax_t iters = 200;
        auto f = [&](double w) { return slope(u, atom, w, a, da); };
        const auto r = boost::math::tools::toms748_solve(f, left, right, sl, sr,
                                                         boost::math::tools::eps_tolerance<double>(50), iters);
        return 0.5 * (r.first + r.second);
    }
    auto neg = [&](double w) { return -corr(u, atom, w, a, da); };
    return boost::math::tools::brent_find_minima(neg, left, right, 40).first;
}

}  // namespace

PeakResult maximize_correlation(const CVecX& u, const AtomFn& atom, double lo, double hi, int grid) {
    if (!(hi > lo) || grid < 3) throw std::invalid_argument("search interval or grid invalid");
    const double step = (hi - lo) / grid;
    CVecX a, da;
    int best = 0;
    double best_val = -1.0;
    for (int i = 0; i < grid; ++i) {
        const double v = corr(u, atom, lo + (i + 1) * step, a, da);
        if (v > best_val) {
            best_val = v;
            best = i;
        }
    }
    const double center = lo + (best + 1) * step;
    const double w = polish(u, atom, center - step, center + step);
    PeakResult r{fold(w, lo, hi), corr(u, atom, w, a, da)};
    if (r.peak < best_val) r = {fold(center, lo, hi), best_val};
    return r;
}

PeakResult maximize_by_rooting(const CVecX& u, const CVecX& weights) {
    const Eigen::Index L = u.size();
    if (weights.size() != L || L < 2) throw std::invalid_argument("rooting needs matching vectors of length >= 2");
    // Objective u^H diag(w) v(z) = P(z) with coefficients c_l.
    CVecX c(L);
    for (Eigen::Index l = 0; l < L; ++l) c(l) = std::conj(u(l)) * weights(l);
    // Stationary points of |P|^2 on the unit circle are roots of h - h_rev with
    // h(z) = z^{L-1} conj(P(1/conj z)) * z P'(z).
    const Eigen::Index D = 2 * L - 1;
    CVecX h = CVecX::Zero(D);
    for (Eigen::Index i = 0; i < L; ++i)
        for (Eigen::Index l = 0; l < L; ++l) h(i + l) += std::conj(c(L - 1 - i)) * (double(l) * c(l));
    CVecX p(D);
    for (Eigen::Index k = 0; k < D; ++k) p(k) = h(k) - std::conj(h(D - 1 - k));
    const double scale = p.cwiseAbs().maxCoeff();
    Eigen::Index deg = D - 1;
    while (deg > 0 && std::abs(p(deg)) <= 1e-14 * scale) --deg;
    // Leading zeros at the low end correspond to roots at the origin.
    Eigen::Index low = 0;
    while (low < deg && std::abs(p(low)) <= 1e-14 * scale) ++low;
    const Eigen::Index n = deg - low;

    const AtomFn atom = weighted_vandermonde_atom(weights);
    CVecX a, da;
    PeakResult best{0.0, -1.0};
    if (n >= 1) {
        CMatX comp = CMatX::Zero(n, n);
        for (Eigen::Index i = 1; i < n; ++i) comp(i, i - 1) = 1.0;
        for (Eigen::Index i = 0; i < n; ++i) comp(i, n - 1) = -p(low + i) / p(deg);
        Eigen::ComplexEigenSolver<CMatX> es(comp, false);
        for (Eigen::Index i = 0; i < n; ++i) {
            const cplx z = es.eigenvalues()(i);
            if (std::abs(std::abs(z) - 1.0) > 1e-2) continue;
            const double w = std::arg(z);
            const double v = corr(u, atom, w, a, da);
            if (v > best.peak) best = {w, v};
        }
    }
    if (best.peak < 0.0) return maximize_correlation(u, atom, -kPi, kPi, oversampled_grid(int(L), kTwoPi));
    // Companion roots carry eigen-solver error; a short bracketed solve restores full precision.
    const double half = kPi / (8.0 * double(L));
    const double w = polish(u, atom, best.omega - half, best.omega + half);
    const double v = corr(u, atom, w, a, da);
    if (v >= best.peak) best = {w, v};
    best.omega = fold(best.omega, -kPi, kPi);
    return best;
}

PeakResult maximize_weighted(const CVecX& u, const CVecX& weights, double scale, double lo, double hi,
                             SearchBackend backend) {
    if (backend == SearchBackend::PolynomialRoots) {
        PeakResult r = maximize_by_rooting(u, weights);
        r.omega = fold(r.omega / scale, lo, hi);
        return r;
    }
    return maximize_correlation(u, weighted_vandermonde_atom(weights, scale), lo, hi,
                                oversampled_grid(int(weights.size()), (hi - lo) * scale));
}

}  // namespace rislocate
