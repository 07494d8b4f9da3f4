#pragma once

#include "mvpure/common.hpp"
#include "mvpure/linalg.hpp"

#include <Eigen/Cholesky>

namespace mvpure::model {

// Leadfields of the three source groups. H_I and H_b may have zero columns.
struct ForwardModel {
    Matrix H;    // m x l, sources of interest
    Matrix H_I;  // m x k, interfering sources
    Matrix H_b;  // m x p, background sources

    Index m() const { return H.rows(); }
    Index l() const { return H.cols(); }
    Index k() const { return H_I.cols(); }
    Index p() const { return H_b.cols(); }

    Matrix composite() const {  // [H H_I]
        Matrix hc(m(), l() + k());
        hc.leftCols(l()) = H;
        if (k() > 0)
            hc.rightCols(k()) = H_I;
        return hc;
    }
};

inline ForwardModel make_forward_model(Matrix H, Matrix H_I = Matrix(), Matrix H_b = Matrix()) {
    if (H.cols() < 1)
        throw DimensionMismatch("forward model needs at least one source of interest");
    const Index m = H.rows();
    if (H_I.size() == 0)
        H_I = Matrix(m, 0);
    if (H_b.size() == 0)
        H_b = Matrix(m, 0);
    if (H_I.rows() != m || H_b.rows() != m)
        throw DimensionMismatch("leadfield sensor counts disagree");
    const Index l = H.cols(), k = H_I.cols();
    if (m <= l + k)
        throw DimensionMismatch("need more sensors than constrained sources (m > l + k)");
    require_finite(H, "H");
    require_finite(H_I, "H_I");
    require_finite(H_b, "H_b");
    ForwardModel fm{std::move(H), std::move(H_I), std::move(H_b)};
    if (linalg::rank_check(fm.composite()) != l + k)
        throw CompositeRankDeficient("[H H_I] columns are linearly dependent");
    return fm;
}

inline void require_spd(const Matrix& A, const std::string& name) {
    require_symmetric(A, name);
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(A), Eigen::EigenvaluesOnly);
    const double lmax = es.eigenvalues()(A.rows() - 1);
    const double lmin = es.eigenvalues()(0);
    if (lmin <= 1e-12 * std::max(lmax, 0.0))
        throw NotPositiveDefinite(name + ": smallest eigenvalue " + std::to_string(lmin));
}

// Q: sources of interest; Q_c: composite [q; q_I] covariance (equals Q when
// k = 0); N: noise; R: sensor covariance.
struct CovarianceModel {
    Matrix Q;
    Matrix Q_c;
    Matrix N;
    Matrix R;

    // E[q_c q^t], the cross term of the interference MSE objective.
    Matrix cross_cov(Index l) const { return Q_c.leftCols(l); }
};

inline Matrix assemble_R(const ForwardModel& fm, const CovarianceModel& cov) {
    const bool interference = fm.k() > 0;
    const Matrix& Qc = interference ? cov.Q_c : cov.Q;
    const Index nc = fm.l() + fm.k();
    if (Qc.rows() != nc || Qc.cols() != nc)
        throw DimensionMismatch("source covariance is " + std::to_string(Qc.rows()) + "x" +
                                std::to_string(Qc.cols()) + ", expected " + std::to_string(nc));
    if (cov.N.rows() != fm.m() || cov.N.cols() != fm.m())
        throw DimensionMismatch("noise covariance does not match sensor count");
    require_spd(Qc, "source covariance");
    require_spd(cov.N, "noise covariance");
    const Matrix Hc = interference ? fm.composite() : fm.H;
    return symmetrize(Hc * Qc * Hc.transpose() + cov.N);
}

// Analytic covariance model: R assembled exactly from (Q_c, N).
inline CovarianceModel make_analytic_covariance(const ForwardModel& fm, const Matrix& Q_c,
                                                const Matrix& N) {
    CovarianceModel cov;
    cov.Q_c = symmetrize(Q_c);
    cov.Q = cov.Q_c.topLeftCorner(fm.l(), fm.l());
    cov.N = symmetrize(N);
    cov.R = assemble_R(fm, cov);
    return cov;
}

inline void check_filter_dims(const Matrix& W, const ForwardModel& fm, const CovarianceModel& cov) {
    if (W.rows() != fm.l() || W.cols() != fm.m())
        throw DimensionMismatch("filter must be l x m");
    if (cov.R.rows() != fm.m() || cov.Q.rows() != fm.l())
        throw DimensionMismatch("covariance model does not match forward model");
}

// Interference-free MSE of a filter: tr(WRW^t) - 2 tr(WHQ) + tr(Q).
inline double mse_free(const Matrix& W, const ForwardModel& fm, const CovarianceModel& cov) {
    check_filter_dims(W, fm, cov);
    const Matrix WR = W * cov.R;
    return (WR * W.transpose()).trace() - 2.0 * (W * fm.H * cov.Q).trace() + cov.Q.trace();
}

// Interference-model MSE: the cross term runs over the composite sources.
inline double mse_int(const Matrix& W, const ForwardModel& fm, const CovarianceModel& cov) {
    check_filter_dims(W, fm, cov);
    const Index nc = fm.l() + fm.k();
    if (cov.Q_c.rows() != nc)
        throw DimensionMismatch("composite covariance does not match forward model");
    const Matrix cross = fm.composite() * cov.cross_cov(fm.l());
    const Matrix WR = W * cov.R;
    return (WR * W.transpose()).trace() - 2.0 * (W * cross).trace() + cov.Q.trace();
}

namespace detail {

// (A^t M^{-1} A)^{-1} via Cholesky solves; the building block of the
// covariance-difference estimators.
inline Matrix gram_inverse(const Matrix& A, const Matrix& M, const std::string& name) {
    Eigen::LLT<Matrix> llt(symmetrize(M));
    if (llt.info() != Eigen::Success)
        throw SingularCovariance(name + " is not positive definite");
    const Matrix MinvA = llt.solve(A);
    const Matrix gram = symmetrize(A.transpose() * MinvA);
    Eigen::LLT<Matrix> gram_llt(gram);
    if (gram_llt.info() != Eigen::Success)
        throw SingularCovariance("whitened leadfield gram matrix is singular");
    return symmetrize(gram_llt.solve(Matrix::Identity(A.cols(), A.cols())));
}

}  // namespace detail

// Q estimate from measurement and noise covariances, interference-free case.
inline Matrix estimate_Q_free(const ForwardModel& fm, const Matrix& R, const Matrix& N) {
    return symmetrize(detail::gram_inverse(fm.H, R, "R") - detail::gram_inverse(fm.H, N, "N"));
}

// Composite-model variant: difference formula on [H H_I], leading l x l block.
inline Matrix estimate_Q_int(const ForwardModel& fm, const Matrix& R, const Matrix& N) {
    const Matrix Hc = fm.composite();
    const Matrix Qc_hat = detail::gram_inverse(Hc, R, "R") - detail::gram_inverse(Hc, N, "N");
    return symmetrize(Qc_hat.topLeftCorner(fm.l(), fm.l()));
}

inline Matrix sample_covariance(const Matrix& X) {
    const Index T = X.cols();
    if (T < 2)
        throw InsufficientSamples("sample covariance needs at least 2 samples");
    const Vector mean = X.rowwise().mean();
    const Matrix centered = X.colwise() - mean;
    return symmetrize(centered * centered.transpose() / static_cast<double>(T - 1));
}

enum class SignalRole { SA, IN, BN, MN };

struct SourceSignal {
    Matrix samples;  // channels x time
    SignalRole role = SignalRole::SA;
};

}  // namespace mvpure::model
