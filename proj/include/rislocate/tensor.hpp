#pragma once

#include "rislocate/types.hpp"

#include <vector>

namespace rislocate {

/// K x G1 x G2 observation tensor. Entry (k, g1, g2) is Y(k, g1*G2 + g2).
class Tensor3 {
public:
    Tensor3() = default;
    Tensor3(CMatX flat, int G1, int G2);

    int K() const { return static_cast<int>(flat_.rows()); }
    int G1() const { return g1_; }
    int G2() const { return g2_; }
    const cplx& operator()(int k, int g1, int g2) const { return flat_(k, g1 * g2_ + g2); }

    /// Mode-1 unfolding, which is the flat K x G matrix itself.
    const CMatX& flat() const { return flat_; }
    /// G1 x (K*G2) with column k*G2 + g2.
    CMatX unfold2() const;
    /// G2 x (K*G1) with column k*G1 + g1.
    CMatX unfold3() const;

private:
    CMatX flat_;
    int g1_ = 0;
    int g2_ = 0;
};

Tensor3 reshape_to_tensor(const CMatX& Y, int G1, int G2);

/// Rank-2 factors; path weights are absorbed into U1.
struct CpdFactors {
    CMatX U1;  ///< K x 2
    CMatX U2;  ///< G1 x 2
    CMatX U3;  ///< G2 x 2

    int rank() const { return static_cast<int>(U1.cols()); }
};

/// Column-wise Kronecker product; column r is kron(A.col(r), B.col(r)).
CMatX khatri_rao(const CMatX& A, const CMatX& B);
/// Flat K x G reconstruction of the factors.
CMatX reconstruct(const CpdFactors& f);
/// Frobenius norm of the tensor minus its reconstruction.
double fit_residual(const Tensor3& t, const CpdFactors& f);

struct VscpdOptions {
    /// Smoothed singular-value ratio sigma_2/sigma_1 below which the second component is declared absent.
    double rank_tol = 1e-9;
};

/// Vandermonde-structured rank-2 CPD with spatial smoothing along the subcarrier mode.
/// Throws DegeneracyError when the smoothed matrix has numerical rank below 2.
CpdFactors vscpd(const Tensor3& t, const VscpdOptions& opt = {});

struct AlsOptions {
    int max_iter = 50;
    double tol = 1e-8;
    /// Gram matrices with a larger condition number receive a ridge.
    double max_condition = 1e12;
};

struct AlsResult {
    CpdFactors factors;
    int iterations = 0;
    std::vector<double> fit_history;  ///< residual before the first sweep, then after each sweep
    bool regularized = false;
};

AlsResult als_refine(const Tensor3& t, const CpdFactors& init, const AlsOptions& opt = {});

}  // namespace rislocate
