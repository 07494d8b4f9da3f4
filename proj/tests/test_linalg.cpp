#include "mvpure/linalg.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace mvpure;
using namespace mvpure::linalg;

namespace {

Matrix random_spd(Index n, Rng& rng) {
    Matrix g = gaussian_matrix(n, n, rng);
    return Matrix(g * g.transpose()) + 0.5 * Matrix::Identity(n, n);
}

// Random rank-r orthogonal projector via QR of a Gaussian matrix.
Matrix random_projector(Index n, Index r, Rng& rng) {
    Matrix g = gaussian_matrix(n, r, rng);
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ() * Matrix::Identity(n, r);
    return q * q.transpose();
}

}  // namespace

TEST_CASE("inv_sqrt_pd identity and diagonal cases", "[linalg]") {
    CHECK((inv_sqrt_pd(Matrix::Identity(3, 3)) - Matrix::Identity(3, 3)).norm() < 1e-12);

    Matrix d = Matrix::Zero(2, 2);
    d(0, 0) = 4.0;
    d(1, 1) = 9.0;
    Matrix b = inv_sqrt_pd(d);
    CHECK(std::abs(b(0, 0) - 0.5) < 1e-12);
    CHECK(std::abs(b(1, 1) - 1.0 / 3.0) < 1e-12);
    CHECK(std::abs(b(0, 1)) < 1e-12);
}

TEST_CASE("inv_sqrt_pd squares to the inverse on seeded SPD input", "[linalg]") {
    Rng rng(derive_seed(42, 1));
    Matrix a = random_spd(6, rng);
    Matrix b = inv_sqrt_pd(a);

    // oracle: LU inverse, a different decomposition path
    Matrix a_inv = a.inverse();
    CHECK((b * b - a_inv).norm() < 1e-8);
    CHECK((b * b * a - Matrix::Identity(6, 6)).norm() < 1e-8);
    CHECK((b - b.transpose()).norm() < 1e-10);
    CHECK((b * a - a * b).norm() < 1e-8);  // commutes with A
}

TEST_CASE("inv_sqrt_pd rejects bad input", "[linalg]") {
    Matrix asym(2, 2);
    asym << 1.0, 2.0, 0.0, 1.0;
    CHECK_THROWS_AS(inv_sqrt_pd(asym), NotSymmetric);

    Matrix psd = Matrix::Zero(2, 2);
    psd(0, 0) = 1.0;  // eigenvalue 0
    CHECK_THROWS_AS(inv_sqrt_pd(psd), NotPositiveDefinite);

    Matrix indef(2, 2);
    indef << 1.0, 0.0, 0.0, -1.0;
    CHECK_THROWS_AS(inv_sqrt_pd(indef), NotPositiveDefinite);
}

TEST_CASE("pinv trivial cases", "[linalg]") {
    CHECK((pinv(Matrix::Identity(4, 4)) - Matrix::Identity(4, 4)).norm() < 1e-12);
    Matrix z = pinv(Matrix::Zero(3, 2));
    REQUIRE(z.rows() == 2);
    REQUIRE(z.cols() == 3);
    CHECK(z.norm() == 0.0);
}

TEST_CASE("pinv satisfies Moore-Penrose identities and left-inverse oracle", "[linalg]") {
    Rng rng(derive_seed(42, 2));
    Matrix a = gaussian_matrix(8, 5, rng);
    Matrix x = pinv(a);

    CHECK((a * x * a - a).norm() < 1e-8);
    CHECK((x * a * x - x).norm() < 1e-8);
    CHECK(((a * x) - (a * x).transpose()).norm() < 1e-8);
    CHECK(((x * a) - (x * a).transpose()).norm() < 1e-8);
    CHECK((x * a - Matrix::Identity(5, 5)).norm() < 1e-8);

    // oracle: normal-equation left inverse for full column rank
    Matrix x_oracle = (a.transpose() * a).inverse() * a.transpose();
    CHECK((x - x_oracle).norm() < 1e-8);
}

TEST_CASE("pinv of a rank-deficient matrix", "[linalg]") {
    Rng rng(derive_seed(42, 3));
    Matrix c = gaussian_matrix(6, 1, rng);
    Matrix a(6, 2);
    a.col(0) = c;
    a.col(1) = 2.0 * c;
    Matrix x = pinv(a);
    CHECK((a * x * a - a).norm() < 1e-8);
    CHECK((x * a * x - x).norm() < 1e-8);
}

TEST_CASE("proj_range trivial cases", "[linalg]") {
    Matrix a = Matrix::Identity(4, 4).leftCols(2);
    Matrix pc = proj_range(a, true);
    Matrix expect = Matrix::Zero(4, 4);
    expect(2, 2) = 1.0;
    expect(3, 3) = 1.0;
    CHECK((pc - expect).norm() < 1e-12);

    CHECK(proj_range(Matrix::Zero(4, 2), false).norm() == 0.0);
}

TEST_CASE("proj_range complement annihilates the range", "[linalg]") {
    Rng rng(derive_seed(42, 4));
    Matrix a = gaussian_matrix(10, 3, rng);
    Matrix p = proj_range(a, false);
    Matrix pc = proj_range(a, true);

    CHECK((p * a - a).norm() < 1e-8);
    CHECK((pc * a).norm() < 1e-8);
    CHECK(std::abs(pc.trace() - 7.0) < 1e-8);
    CHECK((p + pc - Matrix::Identity(10, 10)).norm() < 1e-10);
    CHECK((p - p.transpose()).norm() < 1e-10);
    CHECK((p * p - p).norm() < 1e-8);

    // oracle: I - A pinv(A) via a rank-revealing decomposition
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(a);
    Matrix pc_oracle = Matrix::Identity(10, 10) - a * cod.pseudoInverse();
    CHECK((pc - pc_oracle).norm() < 1e-8);
}

TEST_CASE("truncated_svd diagonal and no-op cases", "[linalg]") {
    Matrix d = Matrix::Zero(3, 3);
    d(0, 0) = 5.0;
    d(1, 1) = 3.0;
    d(2, 2) = 1.0;
    Matrix t = truncated_svd(d, 2);
    Matrix expect = d;
    expect(2, 2) = 0.0;
    CHECK((t - expect).norm() < 1e-12);

    Rng rng(derive_seed(42, 5));
    Matrix low = gaussian_matrix(5, 2, rng) * gaussian_matrix(2, 4, rng);
    CHECK((truncated_svd(low, 3) - low).norm() < 1e-10);

    CHECK_THROWS_AS(truncated_svd(d, 0), RankOutOfBounds);
    CHECK_THROWS_AS(truncated_svd(d, 4), RankOutOfBounds);
}

TEST_CASE("truncated_svd error equals tail singular values", "[linalg]") {
    Rng rng(derive_seed(42, 6));
    Matrix a = gaussian_matrix(6, 4, rng);
    Matrix t = truncated_svd(a, 2);

    Eigen::BDCSVD<Matrix> svd(a);  // oracle on a different SVD driver
    const Vector& sv = svd.singularValues();
    double expect = sv(2) * sv(2) + sv(3) * sv(3);
    CHECK(std::abs((a - t).squaredNorm() - expect) < 1e-8);
}

TEST_CASE("truncated_svd beats random low-rank competitors", "[linalg]") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(derive_seed(7, seed));
        Matrix a = gaussian_matrix(7, 5, rng);
        Index r = 2;
        double best = (a - truncated_svd(a, r)).norm();
        for (int trial = 0; trial < 100; ++trial) {
            Matrix b = gaussian_matrix(7, r, rng) * gaussian_matrix(r, 5, rng);
            CHECK(best <= (a - b).norm() + 1e-12);
        }
    }
}

TEST_CASE("smallest_eig_subspace diagonal cases", "[linalg]") {
    Matrix k = Matrix::Zero(3, 3);
    k(0, 0) = 3.0;
    k(1, 1) = 1.0;
    k(2, 2) = 2.0;

    EigenSubspace s1 = smallest_eig_subspace(k, 1);
    REQUIRE(s1.eigenvalues.size() == 1);
    CHECK(std::abs(s1.eigenvalues[0] - 1.0) < 1e-12);
    Matrix e2 = Matrix::Zero(3, 3);
    e2(1, 1) = 1.0;
    CHECK((s1.projector - e2).norm() < 1e-12);

    EigenSubspace s3 = smallest_eig_subspace(k, 3);
    CHECK((s3.projector - Matrix::Identity(3, 3)).norm() < 1e-10);

    CHECK_THROWS_AS(smallest_eig_subspace(k, 0), RankOutOfBounds);
    CHECK_THROWS_AS(smallest_eig_subspace(k, 4), RankOutOfBounds);
    Matrix asym(2, 2);
    asym << 0.0, 1.0, -1.0, 0.0;
    CHECK_THROWS_AS(smallest_eig_subspace(asym, 1), NotSymmetric);
}

TEST_CASE("smallest_eig_subspace structure and trace identity", "[linalg]") {
    Rng rng(derive_seed(42, 8));
    Matrix k = symmetrize(gaussian_matrix(7, 7, rng));
    EigenSubspace s = smallest_eig_subspace(k, 3);

    CHECK((s.projector - s.basis * s.basis.transpose()).norm() < 1e-10);
    CHECK((s.projector * s.projector - s.projector).norm() < 1e-8);
    CHECK((s.basis.transpose() * s.basis - Matrix::Identity(3, 3)).norm() < 1e-10);
    CHECK((s.projector * k - k * s.projector).norm() < 1e-8);

    double sum = s.eigenvalues[0] + s.eigenvalues[1] + s.eigenvalues[2];
    CHECK(std::abs((s.projector * k).trace() - sum) < 1e-8);
    CHECK(s.eigenvalues[0] <= s.eigenvalues[1]);
    CHECK(s.eigenvalues[1] <= s.eigenvalues[2]);
}

TEST_CASE("smallest_eig_subspace dominates random projectors", "[linalg]") {
    Rng rng(derive_seed(42, 9));
    Matrix k = symmetrize(gaussian_matrix(7, 7, rng));
    EigenSubspace s = smallest_eig_subspace(k, 3);
    double best = (s.projector * k).trace();
    for (int trial = 0; trial < 100; ++trial) {
        Matrix p = random_projector(7, 3, rng);
        CHECK(best <= (p * k).trace() + 1e-10);
    }
}

TEST_CASE("rank_check", "[linalg]") {
    CHECK(rank_check(Matrix::Identity(5, 5)) == 5);
    CHECK(rank_check(Matrix::Zero(4, 3)) == 0);

    Rng rng(derive_seed(42, 10));
    Matrix c = gaussian_matrix(6, 1, rng);
    Matrix a(6, 2);
    a.col(0) = c;
    a.col(1) = 2.0 * c;
    CHECK(rank_check(a) == 1);
}
