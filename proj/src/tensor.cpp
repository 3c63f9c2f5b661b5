#include "rislocate/tensor.hpp"

#include "rislocate/signal.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <array>
#include <stdexcept>

namespace rislocate {

Tensor3::Tensor3(CMatX flat, int G1, int G2) : flat_(std::move(flat)), g1_(G1), g2_(G2) {
    if (G1 < 1 || G2 < 1 || flat_.cols() != static_cast<Eigen::Index>(G1) * G2)
        throw ConfigError("tensor reshape needs G = G1*G2 columns");
}

CMatX Tensor3::unfold2() const {
    const int K = this->K();
    CMatX X(g1_, K * g2_);
    for (int k = 0; k < K; ++k)
        for (int a = 0; a < g1_; ++a)
            for (int b = 0; b < g2_; ++b) X(a, k * g2_ + b) = flat_(k, a * g2_ + b);
    return X;
}

CMatX Tensor3::unfold3() const {
    const int K = this->K();
    CMatX X(g2_, K * g1_);
    for (int k = 0; k < K; ++k)
        for (int a = 0; a < g1_; ++a)
            for (int b = 0; b < g2_; ++b) X(b, k * g1_ + a) = flat_(k, a * g2_ + b);
    return X;
}

Tensor3 reshape_to_tensor(const CMatX& Y, int G1, int G2) { return Tensor3(Y, G1, G2); }

CMatX khatri_rao(const CMatX& A, const CMatX& B) {
    if (A.cols() != B.cols()) throw std::invalid_argument("Khatri-Rao factors need equal column counts");
    CMatX out(A.rows() * B.rows(), A.cols());
    for (Eigen::Index r = 0; r < A.cols(); ++r)
        for (Eigen::Index i = 0; i < A.rows(); ++i) out.col(r).segment(i * B.rows(), B.rows()) = A(i, r) * B.col(r);
    return out;
}

CMatX reconstruct(const CpdFactors& f) { return f.U1 * khatri_rao(f.U2, f.U3).transpose(); }

double fit_residual(const Tensor3& t, const CpdFactors& f) { return (t.flat() - reconstruct(f)).norm(); }

namespace {

// Moves column norms of U2 and U3 into U1 so only U1 carries scale.
void normalize(CpdFactors& f) {
    for (int r = 0; r < f.rank(); ++r) {
        const double n2 = f.U2.col(r).norm(), n3 = f.U3.col(r).norm();
        if (n2 > 0.0 && n3 > 0.0) {
            f.U2.col(r) /= n2;
            f.U3.col(r) /= n3;
            f.U1.col(r) *= n2 * n3;
        }
    }
}

// Least-squares solve of X = U M^T for U, with a ridge when the Gram matrix is ill-conditioned.
CMatX ls_factor(const CMatX& X, const CMatX& M, double max_condition, bool& regularized) {
    CMatX gram = M.transpose() * M.conjugate();
    Eigen::SelfAdjointEigenSolver<CMatX> es(gram);
    const double hi = es.eigenvalues().maxCoeff();
    const double lo = es.eigenvalues().minCoeff();
    if (!(hi > 0.0)) throw DegeneracyError("ALS Gram matrix vanished");
    if (lo <= hi / max_condition) {
        gram += CMatX::Identity(gram.rows(), gram.cols()) * (hi / max_condition);
        regularized = true;
    }
    const CMatX rhs = X * M.conjugate();
    // U gram = rhs  <=>  gram^T U^T = rhs^T
    return gram.transpose().ldlt().solve(rhs.transpose()).transpose();
}

}  // namespace

CpdFactors vscpd(const Tensor3& t, const VscpdOptions& opt) {
    const CMatX& Y = t.flat();
    const int K = t.K(), G = static_cast<int>(Y.cols());
    if (K < 4) throw ConfigError("VSCPD needs at least 4 subcarriers");
    const int K1 = (K + 2) / 2;  // ceil((K+1)/2)
    const int K2 = K - K1 + 1;
    CMatX Ys(K1, K2 * G);
    for (int l = 0; l < K2; ++l) Ys.middleCols(l * G, G) = Y.middleRows(l, K1);

    Eigen::BDCSVD<CMatX> svd(Ys, Eigen::ComputeThinU);
    const VecX& s = svd.singularValues();
    if (!(s(0) > 0.0) || s(1) < opt.rank_tol * s(0))
        throw DegeneracyError("smoothed observation has rank below 2");
    const CMatX Us = svd.matrixU().leftCols(2);

    const CMatX up = Us.topRows(K1 - 1), down = Us.bottomRows(K1 - 1);
    const CMatX F = up.completeOrthogonalDecomposition().solve(down);
    Eigen::ComplexEigenSolver<CMatX> ces(F);
    std::array<cplx, 2> z = {ces.eigenvalues()(0), ces.eigenvalues()(1)};
    if (std::abs(z[1]) > std::abs(z[0])) std::swap(z[0], z[1]);

    CpdFactors f;
    f.U1.resize(K, 2);
    for (int r = 0; r < 2; ++r) f.U1.col(r) = vandermonde(K, std::arg(z[r]));
    const CMatX Ct = f.U1.colPivHouseholderQr().solve(Y);  // 2 x G

    f.U2.resize(t.G1(), 2);
    f.U3.resize(t.G2(), 2);
    for (int r = 0; r < 2; ++r) {
        CMatX Mr(t.G1(), t.G2());
        for (int a = 0; a < t.G1(); ++a)
            for (int b = 0; b < t.G2(); ++b) Mr(a, b) = Ct(r, a * t.G2() + b);
        Eigen::JacobiSVD<CMatX> s1(Mr, Eigen::ComputeThinU | Eigen::ComputeThinV);
        f.U2.col(r) = s1.matrixU().col(0);
        f.U3.col(r) = s1.matrixV().col(0).conjugate();
        f.U1.col(r) *= s1.singularValues()(0);
    }
    return f;
}

AlsResult als_refine(const Tensor3& t, const CpdFactors& init, const AlsOptions& opt) {
    AlsResult res;
    res.factors = init;
    normalize(res.factors);
    const double scale = t.flat().norm();
    double fit = fit_residual(t, res.factors);
    res.fit_history.push_back(fit);
    if (fit <= 1e-13 * scale) return res;

    const CMatX X1 = t.flat(), X2 = t.unfold2(), X3 = t.unfold3();
    CpdFactors& f = res.factors;
    for (int it = 0; it < opt.max_iter; ++it) {
        f.U1 = ls_factor(X1, khatri_rao(f.U2, f.U3), opt.max_condition, res.regularized);
        f.U2 = ls_factor(X2, khatri_rao(f.U1, f.U3), opt.max_condition, res.regularized);
        f.U3 = ls_factor(X3, khatri_rao(f.U1, f.U2), opt.max_condition, res.regularized);
        normalize(f);
        const double next = fit_residual(t, f);
        res.fit_history.push_back(next);
        res.iterations = it + 1;
        if (!res.regularized && next > fit * (1.0 + 1e-9) + 1e-14 * scale)
            throw DegeneracyError("ALS sweep increased the fit residual");
        const double change = std::abs(fit - next) / std::max(fit, 1e-300);
        fit = next;
        if (change < opt.tol || fit <= 1e-13 * scale) break;
    }
    return res;
}

}  // namespace rislocate
