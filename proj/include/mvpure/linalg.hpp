#pragma once

#include "mvpure/common.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <vector>

namespace mvpure::linalg {

// Orthogonal projector onto an eigen- (or singular-) subspace, kept together
// with the basis that generated it so downstream code can reuse either form.
struct EigenSubspace {
    Matrix projector;
    Matrix basis;                       // orthonormal columns
    std::vector<double> eigenvalues;    // ascending, one per basis column
};

// Unique SPD B with B*B = A^{-1}.
inline Matrix inv_sqrt_pd(const Matrix& A) {
    require_symmetric(A, "inv_sqrt_pd input");
    const Matrix S = symmetrize(A);
    Eigen::SelfAdjointEigenSolver<Matrix> es(S);
    if (es.info() != Eigen::Success)
        throw Error("inv_sqrt_pd: eigensolver failed");
    const Vector& ev = es.eigenvalues();
    const double lmax = ev(ev.size() - 1);
    const double lmin = ev(0);
    if (lmin <= 1e-12 * std::max(lmax, 0.0))
        throw NotPositiveDefinite("inv_sqrt_pd: smallest eigenvalue " + std::to_string(lmin));
    Vector inv_sqrt = ev.array().rsqrt();
    return es.eigenvectors() * inv_sqrt.asDiagonal() * es.eigenvectors().transpose();
}

inline Matrix pinv(const Matrix& A) {
    if (A.size() == 0)
        return Matrix::Zero(A.cols(), A.rows());
    Eigen::JacobiSVD<Matrix> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& sv = svd.singularValues();
    const double tol = std::max(A.rows(), A.cols()) *
                       std::numeric_limits<double>::epsilon() * sv(0);
    Vector inv = Vector::Zero(sv.size());
    for (Index i = 0; i < sv.size(); ++i)
        if (sv(i) > tol)
            inv(i) = 1.0 / sv(i);
    return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

// Orthogonal projector onto range(A), or its complement. The two always sum
// to the identity exactly: the complement is computed as I - P.
inline Matrix proj_range(const Matrix& A, bool complement = false) {
    const Index n = A.rows();
    Matrix P;
    if (A.size() == 0 || A.cols() == 0) {
        P = Matrix::Zero(n, n);
    } else {
        Eigen::JacobiSVD<Matrix> svd(A, Eigen::ComputeThinU);
        const Vector& sv = svd.singularValues();
        const double tol = 1e-10 * sv(0);
        Index rank = 0;
        while (rank < sv.size() && sv(rank) > tol)
            ++rank;
        if (rank == 0) {
            P = Matrix::Zero(n, n);
        } else {
            const Matrix U = svd.matrixU().leftCols(rank);
            P = U * U.transpose();
        }
    }
    if (complement)
        return Matrix::Identity(n, n) - P;
    return P;
}

// Best rank-r Frobenius approximation (leading singular triplets).
inline Matrix truncated_svd(const Matrix& A, Index r) {
    if (r < 1 || r > std::min(A.rows(), A.cols()))
        throw RankOutOfBounds("truncated_svd: r = " + std::to_string(r));
    Eigen::JacobiSVD<Matrix> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Vector sv = svd.singularValues();
    for (Index i = r; i < sv.size(); ++i)
        sv(i) = 0.0;
    return svd.matrixU() * sv.asDiagonal() * svd.matrixV().transpose();
}

// Subspace spanned by eigenvectors of the r algebraically smallest
// eigenvalues of symmetric K. Ties resolve by the eigensolver's
// deterministic ordering.
inline EigenSubspace smallest_eig_subspace(const Matrix& K, Index r) {
    require_symmetric(K, "smallest_eig_subspace input");
    if (r < 1 || r > K.rows())
        throw RankOutOfBounds("smallest_eig_subspace: r = " + std::to_string(r));
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(K));
    if (es.info() != Eigen::Success)
        throw Error("smallest_eig_subspace: eigensolver failed");
    EigenSubspace out;
    out.basis = es.eigenvectors().leftCols(r);  // ascending order
    out.projector = out.basis * out.basis.transpose();
    out.eigenvalues.assign(es.eigenvalues().data(), es.eigenvalues().data() + r);
    return out;
}

// Ascending eigenvalues of a symmetric matrix (full list).
inline Vector sym_eigenvalues(const Matrix& K) {
    require_symmetric(K, "sym_eigenvalues input");
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(K), Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success)
        throw Error("sym_eigenvalues: eigensolver failed");
    return es.eigenvalues();
}

inline Index rank_check(const Matrix& A, double tol = 1e-10) {
    if (tol <= 0.0)
        throw Error("rank_check: tol must be positive");
    if (A.size() == 0)
        return 0;
    Eigen::JacobiSVD<Matrix> svd(A);
    const Vector& sv = svd.singularValues();
    if (sv.size() == 0 || sv(0) == 0.0)
        return 0;
    Index rank = 0;
    for (Index i = 0; i < sv.size(); ++i)
        if (sv(i) > tol * sv(0))
            ++rank;
    return rank;
}

inline Vector singular_values(const Matrix& A) {
    Eigen::JacobiSVD<Matrix> svd(A);
    return svd.singularValues();
}

}  // namespace mvpure::linalg
