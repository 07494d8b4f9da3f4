#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace mvpure {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

#define MVPURE_DEFINE_ERROR(Name)                    \
    struct Name : Error {                            \
        using Error::Error;                          \
    }

MVPURE_DEFINE_ERROR(NotSymmetric);
MVPURE_DEFINE_ERROR(NotPositiveDefinite);
MVPURE_DEFINE_ERROR(RankOutOfBounds);
MVPURE_DEFINE_ERROR(DimensionMismatch);
MVPURE_DEFINE_ERROR(SingularCovariance);
MVPURE_DEFINE_ERROR(RankDeficientLeadfield);
MVPURE_DEFINE_ERROR(CompositeRankDeficient);
MVPURE_DEFINE_ERROR(MissingQ);
MVPURE_DEFINE_ERROR(PatchRankOutOfBounds);
MVPURE_DEFINE_ERROR(SourceOnSensor);
MVPURE_DEFINE_ERROR(DegenerateLeadfield);
MVPURE_DEFINE_ERROR(InvalidSpectrum);
MVPURE_DEFINE_ERROR(PerturbationEscapesHead);
MVPURE_DEFINE_ERROR(StabilizationFailed);
MVPURE_DEFINE_ERROR(InsufficientSamples);
MVPURE_DEFINE_ERROR(IllConditionedRegression);
MVPURE_DEFINE_ERROR(ZeroColumn);
MVPURE_DEFINE_ERROR(ShapeMismatch);
MVPURE_DEFINE_ERROR(ZeroPowerReference);
MVPURE_DEFINE_ERROR(EmptyResults);
MVPURE_DEFINE_ERROR(ConfigError);

#undef MVPURE_DEFINE_ERROR

inline bool all_finite(const Matrix& a) {
    return a.allFinite();
}

inline void require_finite(const Matrix& a, const std::string& name) {
    if (!a.allFinite())
        throw Error(name + " contains non-finite entries");
}

inline void require_same_shape(const Matrix& a, const Matrix& b, const std::string& what) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw DimensionMismatch(what + ": " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}

// Largest |A - A^t| entry, scaled check used by every routine that requires
// symmetric input.
inline double asymmetry(const Matrix& a) {
    if (a.rows() != a.cols())
        return std::numeric_limits<double>::infinity();
    return (a - a.transpose()).cwiseAbs().maxCoeff();
}

inline void require_symmetric(const Matrix& a, const std::string& name, double tol = 1e-10) {
    if (a.rows() != a.cols())
        throw NotSymmetric(name + " is not square");
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    if (asymmetry(a) > tol * scale)
        throw NotSymmetric(name + " deviates from symmetry by " + std::to_string(asymmetry(a)));
}

inline Matrix symmetrize(const Matrix& a) {
    return 0.5 * (a + a.transpose());
}

// splitmix64; used to derive independent sub-seeds from one master seed.
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0,
                                 std::uint64_t c = 0) {
    std::uint64_t s = mix_seed(master ^ 0x6a09e667f3bcc908ULL);
    s = mix_seed(s ^ mix_seed(a));
    s = mix_seed(s ^ mix_seed(b));
    s = mix_seed(s ^ mix_seed(c));
    return s;
}

using Rng = std::mt19937_64;

inline Matrix gaussian_matrix(Index rows, Index cols, Rng& rng, double stddev = 1.0) {
    std::normal_distribution<double> dist(0.0, stddev);
    Matrix out(rows, cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i)
            out(i, j) = dist(rng);
    return out;
}

// Mean squared entry over rows*cols; the power convention behind every SNR knob.
inline double signal_power(const Matrix& x) {
    if (x.size() == 0)
        return 0.0;
    return x.squaredNorm() / static_cast<double>(x.size());
}

}  // namespace mvpure
