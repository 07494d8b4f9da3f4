#pragma once

#include "mvpure/model.hpp"

#include <random>

namespace testutil {

using namespace mvpure;

inline Matrix random_spd(Index n, Rng& rng, double ridge = 0.5) {
    Matrix g = gaussian_matrix(n, n, rng);
    return Matrix(g * g.transpose() / static_cast<double>(n)) + ridge * Matrix::Identity(n, n);
}

struct Instance {
    model::ForwardModel fm;
    model::CovarianceModel cov;
};

// Well-conditioned random analytic instance: Gaussian leadfields, SPD
// source and noise covariances, R assembled exactly.
inline Instance make_instance(Index m, Index l, Index k, std::uint64_t seed, Index p = 0) {
    Rng rng(derive_seed(seed, 0xbeef));
    Matrix H = gaussian_matrix(m, l, rng);
    Matrix H_I = k > 0 ? gaussian_matrix(m, k, rng) : Matrix(m, 0);
    Matrix H_b = p > 0 ? gaussian_matrix(m, p, rng) : Matrix(m, 0);
    auto fm = model::make_forward_model(std::move(H), std::move(H_I), std::move(H_b));
    Matrix Q_c = random_spd(l + k, rng);
    Matrix N = random_spd(m, rng);
    auto cov = model::make_analytic_covariance(fm, Q_c, N);
    return {std::move(fm), std::move(cov)};
}

// Draw T samples of N(0, C) columnwise.
inline Matrix gaussian_samples(const Matrix& C, Index T, Rng& rng) {
    Eigen::LLT<Matrix> llt(C);
    Matrix L = llt.matrixL();
    return L * gaussian_matrix(C.rows(), T, rng);
}

}  // namespace testutil
