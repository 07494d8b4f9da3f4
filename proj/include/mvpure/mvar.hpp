#pragma once

#include "mvpure/common.hpp"
#include "mvpure/model.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <complex>
#include <numbers>
#include <vector>

namespace mvpure::mvar {

struct MvarModel {
    Index order = 0;
    std::vector<Matrix> coeffs;  // order matrices, each l x l
    Matrix innovation_cov;       // l x l SPD
    Matrix mask;                 // l x l of 0/1, unit diagonal

    Index l() const { return innovation_cov.rows(); }
};

inline Matrix companion_matrix(const std::vector<Matrix>& coeffs) {
    const Index P = static_cast<Index>(coeffs.size());
    const Index l = coeffs.front().rows();
    Matrix comp = Matrix::Zero(l * P, l * P);
    for (Index p = 0; p < P; ++p)
        comp.block(0, p * l, l, l) = coeffs[p];
    if (P > 1)
        comp.block(l, 0, l * (P - 1), l * (P - 1)) =
            Matrix::Identity(l * (P - 1), l * (P - 1));
    return comp;
}

inline double spectral_radius(const std::vector<Matrix>& coeffs) {
    Eigen::EigenSolver<Matrix> es(companion_matrix(coeffs), false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline MvarModel make_mvar_model(std::vector<Matrix> coeffs, Matrix innovation_cov, Matrix mask) {
    if (coeffs.empty())
        throw ConfigError("model order must be at least 1");
    const Index l = innovation_cov.rows();
    for (const Matrix& a : coeffs)
        if (a.rows() != l || a.cols() != l)
            throw DimensionMismatch("coefficient matrices must be l x l");
    if (mask.rows() != l || mask.cols() != l)
        throw DimensionMismatch("mask must be l x l");
    for (Index i = 0; i < l; ++i) {
        if (mask(i, i) != 1.0)
            throw ConfigError("mask diagonal must be all ones");
        for (Index j = 0; j < l; ++j) {
            if (mask(i, j) != 0.0 && mask(i, j) != 1.0)
                throw ConfigError("mask entries must be 0 or 1");
            if (mask(i, j) == 0.0)
                for (const Matrix& a : coeffs)
                    if (a(i, j) != 0.0)
                        throw ConfigError("masked coefficient entries must be exactly zero");
        }
    }
    model::require_spd(innovation_cov, "innovation covariance");
    if (spectral_radius(coeffs) >= 1.0)
        throw StabilizationFailed("companion spectral radius is not below 1");
    MvarModel m;
    m.order = static_cast<Index>(coeffs.size());
    m.coeffs = std::move(coeffs);
    m.innovation_cov = std::move(innovation_cov);
    m.mask = std::move(mask);
    return m;
}

// Random stable masked model. Coefficients are N(0, 0.5/sqrt(l*order)) with
// exactly round(fraction*l*(l-1)) off-diagonal entries zeroed, then the whole
// coefficient stack is shrunk until the companion spectral radius drops
// below 0.95.
inline MvarModel generate_mvar(Index l, Index order, double offdiag_zero_fraction,
                               std::uint64_t seed) {
    if (l < 1 || order < 1)
        throw ConfigError("need l >= 1 and order >= 1");
    if (offdiag_zero_fraction < 0.0 || offdiag_zero_fraction > 1.0)
        throw ConfigError("mask fraction outside [0, 1]");
    Rng rng(derive_seed(seed, 0x3a7));

    std::vector<std::pair<Index, Index>> offdiag;
    for (Index i = 0; i < l; ++i)
        for (Index j = 0; j < l; ++j)
            if (i != j)
                offdiag.emplace_back(i, j);
    std::shuffle(offdiag.begin(), offdiag.end(), rng);
    const auto n_zero =
        static_cast<size_t>(std::llround(offdiag_zero_fraction * static_cast<double>(l * (l - 1))));
    Matrix mask = Matrix::Ones(l, l);
    for (size_t i = 0; i < n_zero && i < offdiag.size(); ++i)
        mask(offdiag[i].first, offdiag[i].second) = 0.0;

    const double sigma = 0.5 / std::sqrt(static_cast<double>(l * order));
    std::vector<Matrix> coeffs;
    coeffs.reserve(order);
    for (Index p = 0; p < order; ++p)
        coeffs.push_back(gaussian_matrix(l, l, rng, sigma).cwiseProduct(mask));

    bool stable = false;
    for (int attempt = 0; attempt < 100; ++attempt) {
        const double rho = spectral_radius(coeffs);
        if (rho < 0.95) {
            stable = true;
            break;
        }
        // aim below the acceptance threshold: rescaling to exactly 0.95
        // stalls there because roots shrink sublinearly in the coefficients
        const double scale = 0.9 / rho;
        for (Matrix& a : coeffs)
            a *= scale;
    }
    if (!stable)
        throw StabilizationFailed("could not stabilize the generated model");
    return make_mvar_model(std::move(coeffs), Matrix::Identity(l, l), std::move(mask));
}

// One l x T signal per trial, independent seeded innovation streams,
// 10*order burn-in samples discarded.
inline std::vector<model::SourceSignal> simulate_mvar(const MvarModel& m, Index T, Index trials,
                                                      std::uint64_t seed) {
    if (T < 1 || trials < 1)
        throw ConfigError("need T >= 1 and trials >= 1");
    const Index l = m.l();
    const Index burn = 10 * m.order;
    Eigen::LLT<Matrix> llt(symmetrize(m.innovation_cov));
    if (llt.info() != Eigen::Success)
        throw SingularCovariance("innovation covariance is not positive definite");
    const Matrix L = llt.matrixL();

    std::vector<model::SourceSignal> out;
    out.reserve(trials);
    for (Index trial = 0; trial < trials; ++trial) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(trial), 0x517));
        std::normal_distribution<double> gauss(0.0, 1.0);
        Matrix x = Matrix::Zero(l, burn + T + m.order);
        Vector e(l);
        for (Index t = m.order; t < x.cols(); ++t) {
            for (Index i = 0; i < l; ++i)
                e(i) = gauss(rng);
            Vector next = L * e;
            for (Index p = 0; p < m.order; ++p)
                next += m.coeffs[p] * x.col(t - 1 - p);
            x.col(t) = next;
        }
        out.push_back({x.rightCols(T), model::SignalRole::SA});
    }
    return out;
}

// Interfering activity: cycled negated copies of the source rows plus
// Gaussian noise of matching per-row power. noise_scale is a test hook.
inline model::SourceSignal derive_interference(const model::SourceSignal& sa, Index k,
                                               std::uint64_t seed, double noise_scale = 1.0) {
    if (k < 1)
        throw ConfigError("need at least one interfering source");
    const Index l = sa.samples.rows();
    const Index T = sa.samples.cols();
    if (l < 1 || T < 2)
        throw InsufficientSamples("source signal too small");
    Rng rng(derive_seed(seed, 0x1f));
    Matrix out(k, T);
    for (Index j = 0; j < k; ++j) {
        const auto src = sa.samples.row(j % l);
        const double mean = src.mean();
        const double var = (src.array() - mean).square().sum() / static_cast<double>(T - 1);
        const double sd = std::sqrt(std::max(var, 0.0)) * noise_scale;
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (Index t = 0; t < T; ++t)
            out(j, t) = -src(t) + sd * gauss(rng);
    }
    return {std::move(out), model::SignalRole::IN};
}

namespace detail {

struct Regression {
    Matrix Y;  // l x n_eq
    Matrix Z;  // l*order x n_eq
};

inline void append_lagged(const Matrix& X, Index order, Matrix& Y, Matrix& Z, Index& col) {
    const Index l = X.rows();
    for (Index t = order; t < X.cols(); ++t) {
        Y.col(col) = X.col(t);
        for (Index p = 0; p < order; ++p)
            Z.block(p * l, col, l, 1) = X.col(t - 1 - p);
        ++col;
    }
}

inline MvarModel fit_regression(const Matrix& Y, const Matrix& Z, Index l, Index order) {
    const Index n_eq = Y.cols();
    const Matrix M = Z * Z.transpose();
    if (linalg::rank_check(M, 1e-12) < l * order)
        throw IllConditionedRegression("lagged design matrix is rank deficient");
    Eigen::LDLT<Matrix> ldlt(M);
    if (ldlt.info() != Eigen::Success)
        throw IllConditionedRegression("normal equations could not be factored");
    const Matrix stacked = ldlt.solve(Z * Y.transpose()).transpose();  // l x l*order
    std::vector<Matrix> coeffs;
    coeffs.reserve(order);
    for (Index p = 0; p < order; ++p)
        coeffs.push_back(stacked.block(0, p * l, l, l));
    const Matrix resid = Y - stacked * Z;
    Matrix innovation = symmetrize(resid * resid.transpose() / static_cast<double>(n_eq));
    return make_mvar_model(std::move(coeffs), std::move(innovation), Matrix::Ones(l, l));
}

}  // namespace detail

inline MvarModel fit_mvar(const Matrix& X, Index order) {
    if (order < 1)
        throw ConfigError("order must be at least 1");
    const Index l = X.rows();
    const Index T = X.cols();
    if (T <= 10 * order * l)
        throw InsufficientSamples("need more than 10*order*l samples");
    Matrix Y(l, T - order), Z(l * order, T - order);
    Index col = 0;
    detail::append_lagged(X, order, Y, Z, col);
    return detail::fit_regression(Y, Z, l, order);
}

// Pooled fit across trials: lagged equations from each trial stacked into
// one regression, no lags spanning trial boundaries.
inline MvarModel fit_mvar(const std::vector<Matrix>& trials, Index order) {
    if (order < 1)
        throw ConfigError("order must be at least 1");
    if (trials.empty())
        throw InsufficientSamples("no trials");
    const Index l = trials.front().rows();
    Index total = 0, n_eq = 0;
    for (const Matrix& X : trials) {
        if (X.rows() != l)
            throw DimensionMismatch("trial channel counts disagree");
        total += X.cols();
        n_eq += std::max<Index>(0, X.cols() - order);
    }
    if (total <= 10 * order * l || n_eq < 1)
        throw InsufficientSamples("need more than 10*order*l pooled samples");
    Matrix Y(l, n_eq), Z(l * order, n_eq);
    Index col = 0;
    for (const Matrix& X : trials)
        detail::append_lagged(X, order, Y, Z, col);
    return detail::fit_regression(Y, Z, l, order);
}

// Stationary covariance of the process, top-left block of the companion
// Lyapunov solution (doubling iteration).
inline Matrix stationary_covariance(const MvarModel& m) {
    Matrix F = companion_matrix(m.coeffs);
    const Index n = F.rows();
    Matrix X = Matrix::Zero(n, n);
    X.topLeftCorner(m.l(), m.l()) = m.innovation_cov;
    for (int it = 0; it < 200; ++it) {
        const Matrix step = F * X * F.transpose();
        X = symmetrize(X + step);
        F = F * F;
        if (step.norm() <= 1e-14 * std::max(1.0, X.norm()) || F.norm() < 1e-300)
            break;
    }
    return X.topLeftCorner(m.l(), m.l());
}

struct PdcSpectrum {
    std::vector<Matrix> values;  // one l x l matrix per frequency, entries in [0, 1]
    std::vector<double> freqs;   // normalized, [0, 0.5]
};

// Partial directed coherence on a uniform frequency grid: column-normalized
// magnitudes of Abar(f) = I - sum_p A_p exp(-i 2 pi f p).
inline PdcSpectrum pdc(const MvarModel& m, Index n_freqs = 64) {
    if (n_freqs < 2)
        throw ConfigError("need at least two frequencies");
    if (spectral_radius(m.coeffs) >= 1.0)
        throw StabilizationFailed("model is unstable");
    const Index l = m.l();
    PdcSpectrum out;
    out.values.reserve(n_freqs);
    out.freqs.reserve(n_freqs);
    using Complex = std::complex<double>;
    for (Index fi = 0; fi < n_freqs; ++fi) {
        const double f = 0.5 * static_cast<double>(fi) / static_cast<double>(n_freqs - 1);
        Eigen::MatrixXcd abar = Eigen::MatrixXcd::Identity(l, l);
        for (Index p = 0; p < m.order; ++p) {
            const double phase = -2.0 * std::numbers::pi * f * static_cast<double>(p + 1);
            abar -= m.coeffs[p] * Complex(std::cos(phase), std::sin(phase));
        }
        Matrix v(l, l);
        for (Index j = 0; j < l; ++j) {
            const double colnorm = abar.col(j).norm();
            if (colnorm <= 0.0)
                throw ZeroColumn("spectral factor column vanished at f = " + std::to_string(f));
            for (Index i = 0; i < l; ++i)
                v(i, j) = std::abs(abar(i, j)) / colnorm;
        }
        out.values.push_back(std::move(v));
        out.freqs.push_back(f);
    }
    return out;
}

inline double pdc_error(const PdcSpectrum& truth, const PdcSpectrum& est) {
    if (truth.values.size() != est.values.size())
        throw ShapeMismatch("frequency counts differ");
    double sq = 0.0;
    for (size_t fi = 0; fi < truth.values.size(); ++fi) {
        if (truth.values[fi].rows() != est.values[fi].rows() ||
            truth.values[fi].cols() != est.values[fi].cols())
            throw ShapeMismatch("spectrum dimensions differ");
        sq += (truth.values[fi] - est.values[fi]).squaredNorm();
    }
    return std::sqrt(sq);
}

namespace detail {

inline nlohmann::json matrix_to_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Index j = 0; j < m.cols(); ++j)
            row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.empty())
        throw ConfigError("expected a non-empty array of rows");
    const Index rows = static_cast<Index>(j.size());
    const Index cols = static_cast<Index>(j.front().size());
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        if (static_cast<Index>(j[i].size()) != cols)
            throw ConfigError("ragged matrix rows");
        for (Index c = 0; c < cols; ++c)
            m(i, c) = j[i][c].get<double>();
    }
    return m;
}

}  // namespace detail

inline nlohmann::json mvar_to_json(const MvarModel& m) {
    nlohmann::json j;
    j["order"] = m.order;
    j["channels"] = m.l();
    nlohmann::json lags = nlohmann::json::array();
    for (const Matrix& a : m.coeffs)
        lags.push_back(detail::matrix_to_json(a));
    j["coeffs"] = std::move(lags);
    j["innovation_cov"] = detail::matrix_to_json(m.innovation_cov);
    j["mask"] = detail::matrix_to_json(m.mask);
    return j;
}

inline MvarModel mvar_from_json(const nlohmann::json& j) {
    std::vector<Matrix> coeffs;
    for (const auto& lag : j.at("coeffs"))
        coeffs.push_back(detail::matrix_from_json(lag));
    return make_mvar_model(std::move(coeffs), detail::matrix_from_json(j.at("innovation_cov")),
                           detail::matrix_from_json(j.at("mask")));
}

// CSV export: source pair indices (0-based), normalized frequency, value.
inline std::string pdc_to_csv(const PdcSpectrum& s) {
    std::ostringstream out;
    out.precision(17);
    out << "i,j,f,value\n";
    const Index l = s.values.empty() ? 0 : s.values.front().rows();
    for (Index i = 0; i < l; ++i)
        for (Index j = 0; j < l; ++j)
            for (size_t fi = 0; fi < s.freqs.size(); ++fi)
                out << i << "," << j << "," << s.freqs[fi] << "," << s.values[fi](i, j) << "\n";
    return out.str();
}

}  // namespace mvpure::mvar
