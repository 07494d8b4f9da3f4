#pragma once

#include "mvpure/common.hpp"
#include "mvpure/linalg.hpp"
#include "mvpure/model.hpp"

#include <array>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace mvpure::filters {

enum class FilterKind {
    LCMV_R,
    LCMV_N,
    NULLING_R,
    NULLING_N,
    EIG_LCMV,
    MMSE,
    ZERO_FORCING,
    MVP_INT_MSE,
    MVP_INT_R,
    MVP_INT_N,
    MVP_FREE_MSE,
    MVP_FREE_R,
    MVP_FREE_N,
    MVP_PATCH_R,
    MVP_PATCH_N,
    NULLING_PATCH_R,
    NULLING_PATCH_N,
};

inline constexpr std::array<std::pair<FilterKind, const char*>, 17> kKindNames{{
    {FilterKind::LCMV_R, "LCMV_R"},
    {FilterKind::LCMV_N, "LCMV_N"},
    {FilterKind::NULLING_R, "NULLING_R"},
    {FilterKind::NULLING_N, "NULLING_N"},
    {FilterKind::EIG_LCMV, "EIG_LCMV"},
    {FilterKind::MMSE, "MMSE"},
    {FilterKind::ZERO_FORCING, "ZERO_FORCING"},
    {FilterKind::MVP_INT_MSE, "MVP_INT_MSE"},
    {FilterKind::MVP_INT_R, "MVP_INT_R"},
    {FilterKind::MVP_INT_N, "MVP_INT_N"},
    {FilterKind::MVP_FREE_MSE, "MVP_FREE_MSE"},
    {FilterKind::MVP_FREE_R, "MVP_FREE_R"},
    {FilterKind::MVP_FREE_N, "MVP_FREE_N"},
    {FilterKind::MVP_PATCH_R, "MVP_PATCH_R"},
    {FilterKind::MVP_PATCH_N, "MVP_PATCH_N"},
    {FilterKind::NULLING_PATCH_R, "NULLING_PATCH_R"},
    {FilterKind::NULLING_PATCH_N, "NULLING_PATCH_N"},
}};

inline std::string to_string(FilterKind k) {
    for (const auto& [kind, name] : kKindNames)
        if (kind == k)
            return name;
    throw ConfigError("unknown filter kind");
}

inline FilterKind kind_from_string(const std::string& s) {
    for (const auto& [kind, name] : kKindNames)
        if (s == name)
            return kind;
    throw ConfigError("unknown filter kind: " + s);
}

enum class Mode { R, N };
enum class Variant { MSE, R, N };

struct FilterDiagnostics {
    Matrix whitened_H;                 // G or F
    Matrix whitened_H_I;               // G_I / F_I, truncated for patch kinds
    Matrix K_or_L;                     // matrix whose smallest eigenpairs pick the subspace
    Vector eigenvalues;                // full ascending spectrum of K_or_L
    linalg::EigenSubspace projector;   // selected subspace
    std::optional<double> j_value;     // predicted filter MSE, when computable
    bool j_exact = true;               // false for patch kinds (truncated interference)
    std::optional<double> c;           // tr(Q), when Q was available
};

struct SpatialFilter {
    Matrix W;  // l x m
    FilterKind kind = FilterKind::LCMV_R;
    Index rank = 0;
    FilterDiagnostics diagnostics;
};

struct RankSelection {
    std::vector<std::pair<Index, double>> j_curve;  // (r, predicted MSE), r = 1..l
    Index selected_rank = 0;
    bool tie_policy_applied = false;
};

namespace detail {

inline Matrix whiten(const Matrix& M, const char* name) {
    try {
        return linalg::inv_sqrt_pd(M);
    } catch (const NotPositiveDefinite& e) {
        throw SingularCovariance(std::string(name) + " covariance: " + e.what());
    } catch (const NotSymmetric& e) {
        throw SingularCovariance(std::string(name) + " covariance: " + e.what());
    }
}

// Everything the reduced-rank constructions share: whitened leadfields, the
// interference-complement projector, the full-rank filter and its gram matrix.
struct MvpCore {
    Matrix S;       // M^{-1/2}
    Matrix A;       // S H
    Matrix A_I;     // S H_I (possibly truncated, possibly empty)
    Matrix P_perp;  // projector onto the complement of range(A_I)
    Matrix W_full;  // pinv(P_perp A) P_perp S -- the matching full-rank filter
    Matrix base;    // pinv(P_perp A) pinv(P_perp A)^t
};

inline MvpCore build_core(const model::ForwardModel& fm, const Matrix& M, const Matrix& H_I_eff,
                          const char* mname) {
    if (M.rows() != fm.m() || M.cols() != fm.m())
        throw DimensionMismatch("covariance does not match sensor count");
    MvpCore core;
    core.S = whiten(M, mname);
    core.A = core.S * fm.H;
    core.A_I = core.S * H_I_eff;
    core.P_perp = linalg::proj_range(core.A_I, true);
    const Matrix PA = core.P_perp * core.A;
    if (linalg::rank_check(PA) < fm.l()) {
        if (H_I_eff.cols() == 0)
            throw RankDeficientLeadfield("whitened leadfield is rank deficient");
        throw CompositeRankDeficient("leadfield overlaps the interference subspace");
    }
    const Matrix W_dag = linalg::pinv(PA);
    core.W_full = W_dag * core.P_perp * core.S;
    core.base = symmetrize(W_dag * W_dag.transpose());
    return core;
}

struct Prepared {
    MvpCore core;
    Matrix K_sel;  // selection matrix (base, or base - 2Q for the MSE variant)
    Matrix corr;   // j(r) = sum of selected eigenvalues - tr(P corr) + c; empty if none
    std::optional<double> c;
    Matrix V;      // eigenvectors of K_sel, ascending eigenvalue order
    Vector d;      // eigenvalues of K_sel, ascending
    bool j_exact = true;
};

inline Prepared prepare(const model::ForwardModel& fm, const Matrix& M,
                        const std::optional<Matrix>& Q, const Matrix& H_I_eff, Variant variant,
                        bool j_exact, const char* mname) {
    Prepared p;
    p.core = build_core(fm, M, H_I_eff, mname);
    p.j_exact = j_exact;
    const Index l = fm.l();
    if (Q) {
        if (Q->rows() != l || Q->cols() != l)
            throw DimensionMismatch("Q must be l x l");
        require_symmetric(*Q, "Q");
        p.c = Q->trace();
    }
    switch (variant) {
        case Variant::MSE:
            if (!Q)
                throw MissingQ("MSE variant needs the source covariance");
            p.K_sel = symmetrize(p.core.base - 2.0 * symmetrize(*Q));
            break;
        case Variant::R:
            p.K_sel = p.core.base;
            if (Q)
                p.corr = 2.0 * symmetrize(*Q);
            break;
        case Variant::N:
            p.K_sel = p.core.base;
            if (Q)
                p.corr = symmetrize(*Q);
            break;
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(p.K_sel);
    if (es.info() != Eigen::Success)
        throw Error("selection-matrix eigendecomposition failed");
    p.V = es.eigenvectors();
    p.d = es.eigenvalues();
    return p;
}

inline std::optional<double> j_at(const Prepared& p, Index r) {
    if (!p.c)
        return std::nullopt;
    double j = p.d.head(r).sum() + *p.c;
    if (p.corr.size() > 0) {
        const Matrix Vr = p.V.leftCols(r);
        j -= (Vr.transpose() * p.corr * Vr).trace();
    }
    return j;
}

inline SpatialFilter finalize(const Prepared& p, Index r, FilterKind kind, Index l) {
    if (r < 1 || r > l)
        throw RankOutOfBounds("filter rank " + std::to_string(r) + " outside [1, " +
                              std::to_string(l) + "]");
    SpatialFilter f;
    f.kind = kind;
    f.rank = r;
    linalg::EigenSubspace sub;
    sub.basis = p.V.leftCols(r);
    sub.projector = sub.basis * sub.basis.transpose();
    sub.eigenvalues.assign(p.d.data(), p.d.data() + r);
    f.W = sub.projector * p.core.W_full;
    f.diagnostics.whitened_H = p.core.A;
    f.diagnostics.whitened_H_I = p.core.A_I;
    f.diagnostics.K_or_L = p.K_sel;
    f.diagnostics.eigenvalues = p.d;
    f.diagnostics.projector = std::move(sub);
    f.diagnostics.j_value = j_at(p, r);
    f.diagnostics.j_exact = p.j_exact;
    f.diagnostics.c = p.c;
    return f;
}

inline RankSelection select_from(const Prepared& p, Index l) {
    if (!p.c)
        throw MissingQ("rank selection needs the source covariance");
    RankSelection sel;
    sel.j_curve.reserve(l);
    double delta_sum = 0.0, corr_sum = 0.0;
    for (Index r = 1; r <= l; ++r) {
        delta_sum += p.d(r - 1);
        if (p.corr.size() > 0)
            corr_sum += p.V.col(r - 1).dot(p.corr * p.V.col(r - 1));
        sel.j_curve.emplace_back(r, delta_sum - corr_sum + *p.c);
    }
    double jmin = sel.j_curve.front().second;
    for (const auto& [r, j] : sel.j_curve)
        jmin = std::min(jmin, j);
    const double tie_tol = 1e-12 * std::max(1.0, std::abs(jmin));
    Index hits = 0;
    for (const auto& [r, j] : sel.j_curve) {
        if (j <= jmin + tie_tol) {
            if (hits == 0)
                sel.selected_rank = r;  // smallest r wins
            ++hits;
        }
    }
    sel.tie_policy_applied = hits > 1;
    return sel;
}

inline linalg::EigenSubspace identity_subspace(Index l) {
    linalg::EigenSubspace s;
    s.projector = Matrix::Identity(l, l);
    s.basis = Matrix::Identity(l, l);
    return s;
}

inline Matrix empty_like(const model::ForwardModel& fm) {
    return Matrix(fm.m(), 0);
}

// Effective interference leadfield for a patch constraint, plus exactness.
inline std::pair<Matrix, bool> patch_interference(const model::ForwardModel& fm, Index s) {
    if (fm.k() == 0)
        return {empty_like(fm), true};
    if (s < 1 || s > fm.k())
        throw PatchRankOutOfBounds("patch rank s = " + std::to_string(s) + " outside [1, " +
                                   std::to_string(fm.k()) + "]");
    if (s == fm.k())
        return {fm.H_I, true};
    return {linalg::truncated_svd(fm.H_I, s), false};
}

}  // namespace detail

// Minimum-variance unit-gain filter; mode names which covariance it was
// whitened with (identical results only when R is exact).
inline SpatialFilter lcmv(const model::ForwardModel& fm, const Matrix& M, Mode mode) {
    auto core = detail::build_core(fm, M, detail::empty_like(fm), mode == Mode::R ? "R" : "N");
    SpatialFilter f;
    f.kind = mode == Mode::R ? FilterKind::LCMV_R : FilterKind::LCMV_N;
    f.rank = fm.l();
    f.W = core.W_full;
    f.diagnostics.whitened_H = core.A;
    f.diagnostics.whitened_H_I = core.A_I;
    f.diagnostics.K_or_L = core.base;
    f.diagnostics.projector = detail::identity_subspace(fm.l());
    return f;
}

// Unit gain on H, zero gain on H_I. Degrades to LCMV when k = 0.
inline SpatialFilter nulling(const model::ForwardModel& fm, const Matrix& M, Mode mode) {
    auto core = detail::build_core(fm, M, fm.H_I, mode == Mode::R ? "R" : "N");
    SpatialFilter f;
    f.kind = mode == Mode::R ? FilterKind::NULLING_R : FilterKind::NULLING_N;
    f.rank = fm.l();
    f.W = core.W_full;
    f.diagnostics.whitened_H = core.A;
    f.diagnostics.whitened_H_I = core.A_I;
    f.diagnostics.K_or_L = core.base;
    f.diagnostics.projector = detail::identity_subspace(fm.l());
    return f;
}

// Reduced-rank interference-nulling filters. M must be R for variants MSE
// and R, and N for variant N.
inline SpatialFilter mvpure_int(Variant variant, const model::ForwardModel& fm, const Matrix& M,
                                const std::optional<Matrix>& Q, Index r) {
    const char* mname = variant == Variant::N ? "N" : "R";
    auto p = detail::prepare(fm, M, Q, fm.H_I, variant, true, mname);
    FilterKind kind = variant == Variant::MSE  ? FilterKind::MVP_INT_MSE
                      : variant == Variant::R ? FilterKind::MVP_INT_R
                                              : FilterKind::MVP_INT_N;
    return detail::finalize(p, r, kind, fm.l());
}

// Interference-free reduced-rank filters (the k = 0 specialization).
inline SpatialFilter mvpure_free(Variant variant, const model::ForwardModel& fm, const Matrix& M,
                                 const std::optional<Matrix>& Q, Index r) {
    const char* mname = variant == Variant::N ? "N" : "R";
    auto p = detail::prepare(fm, M, Q, detail::empty_like(fm), variant, true, mname);
    FilterKind kind = variant == Variant::MSE  ? FilterKind::MVP_FREE_MSE
                      : variant == Variant::R ? FilterKind::MVP_FREE_R
                                              : FilterKind::MVP_FREE_N;
    return detail::finalize(p, r, kind, fm.l());
}

// Patch constraints: null only the best rank-s approximation of H_I. The
// predicted MSE is approximate whenever s < k.
inline SpatialFilter mvpure_patch(Variant variant, const model::ForwardModel& fm, Index s,
                                  const Matrix& M, Index r,
                                  const std::optional<Matrix>& Q = std::nullopt) {
    if (variant == Variant::MSE)
        throw ConfigError("patch filters come in R and N variants only");
    auto [H_I_eff, exact] = detail::patch_interference(fm, s);
    const char* mname = variant == Variant::N ? "N" : "R";
    auto p = detail::prepare(fm, M, Q, H_I_eff, variant, exact, mname);
    FilterKind kind;
    if (r == fm.l())
        kind = variant == Variant::R ? FilterKind::NULLING_PATCH_R : FilterKind::NULLING_PATCH_N;
    else
        kind = variant == Variant::R ? FilterKind::MVP_PATCH_R : FilterKind::MVP_PATCH_N;
    return detail::finalize(p, r, kind, fm.l());
}

// Which reduced-rank family a kind belongs to, for rank selection and
// harness dispatch.
struct FamilyHandle {
    FilterKind kind;
    Index patch_s = 0;  // only read for patch kinds
};

namespace detail {

struct FamilyTraits {
    Variant variant;
    bool interference;
    bool patch;
};

inline FamilyTraits family_traits(FilterKind kind) {
    switch (kind) {
        case FilterKind::MVP_INT_MSE: return {Variant::MSE, true, false};
        case FilterKind::MVP_INT_R: return {Variant::R, true, false};
        case FilterKind::MVP_INT_N: return {Variant::N, true, false};
        case FilterKind::MVP_FREE_MSE: return {Variant::MSE, false, false};
        case FilterKind::MVP_FREE_R: return {Variant::R, false, false};
        case FilterKind::MVP_FREE_N: return {Variant::N, false, false};
        case FilterKind::MVP_PATCH_R: return {Variant::R, true, true};
        case FilterKind::MVP_PATCH_N: return {Variant::N, true, true};
        default:
            throw ConfigError("kind " + to_string(kind) + " is not a reduced-rank family");
    }
}

inline Prepared prepare_family(const FamilyHandle& family, const model::ForwardModel& fm,
                               const Matrix& M, const std::optional<Matrix>& Q) {
    const auto traits = family_traits(family.kind);
    const char* mname = traits.variant == Variant::N ? "N" : "R";
    Matrix H_I_eff;
    bool exact = true;
    if (traits.patch) {
        auto [h, e] = patch_interference(fm, family.patch_s);
        H_I_eff = std::move(h);
        exact = e;
    } else {
        H_I_eff = traits.interference ? fm.H_I : empty_like(fm);
    }
    return prepare(fm, M, Q, H_I_eff, traits.variant, exact, mname);
}

}  // namespace detail

// Evaluate the predicted-MSE curve over r = 1..l from one eigendecomposition
// and pick the argmin (ties go to the smallest rank).
inline RankSelection select_rank(const FamilyHandle& family, const model::ForwardModel& fm,
                                 const Matrix& M, const std::optional<Matrix>& Q) {
    auto p = detail::prepare_family(family, fm, M, Q);
    return detail::select_from(p, fm.l());
}

// LCMV post-multiplied by the projector onto the sig-dimensional leading
// eigenspace of R.
inline SpatialFilter eigenspace_lcmv(const model::ForwardModel& fm, const Matrix& R, Index sig) {
    if (sig < 1 || sig > fm.m())
        throw RankOutOfBounds("signal-subspace dimension outside [1, m]");
    SpatialFilter f = lcmv(fm, R, Mode::R);
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(R));
    if (es.info() != Eigen::Success)
        throw SingularCovariance("measurement covariance eigendecomposition failed");
    linalg::EigenSubspace sub;
    sub.basis = es.eigenvectors().rightCols(sig);
    sub.projector = sub.basis * sub.basis.transpose();
    sub.eigenvalues.assign(es.eigenvalues().data() + (fm.m() - sig),
                           es.eigenvalues().data() + fm.m());
    f.W = f.W * sub.projector;
    f.kind = FilterKind::EIG_LCMV;
    f.diagnostics.projector = std::move(sub);
    return f;
}

// Wiener filter; MSE-optimal when Q, R are the true covariances.
inline SpatialFilter mmse(const Matrix& Q, const model::ForwardModel& fm, const Matrix& R) {
    if (Q.rows() != fm.l() || Q.cols() != fm.l())
        throw DimensionMismatch("Q must be l x l");
    Eigen::LLT<Matrix> llt(symmetrize(R));
    if (llt.info() != Eigen::Success)
        throw SingularCovariance("measurement covariance is not positive definite");
    SpatialFilter f;
    f.kind = FilterKind::MMSE;
    f.rank = fm.l();
    // W = Q H^t R^{-1}, computed as (R^{-1} H Q^t)^t
    f.W = llt.solve(fm.H * Q.transpose()).transpose();
    f.diagnostics.projector = detail::identity_subspace(fm.l());
    f.diagnostics.c = Q.trace();
    return f;
}

inline SpatialFilter zero_forcing(const model::ForwardModel& fm) {
    if (linalg::rank_check(fm.H) < fm.l())
        throw RankDeficientLeadfield("leadfield is rank deficient");
    SpatialFilter f;
    f.kind = FilterKind::ZERO_FORCING;
    f.rank = fm.l();
    f.W = linalg::pinv(fm.H);
    f.diagnostics.projector = detail::identity_subspace(fm.l());
    return f;
}

inline Matrix apply_filter(const SpatialFilter& f, const Matrix& Y) {
    if (f.W.cols() != Y.rows())
        throw DimensionMismatch("filter expects " + std::to_string(f.W.cols()) +
                                " sensor rows, got " + std::to_string(Y.rows()));
    return f.W * Y;
}

struct BuildOptions {
    Index rank = 0;     // 0 = pick by predicted-MSE minimization (reduced-rank kinds)
    Index patch_s = 0;  // required for patch kinds when k > 0
    Index eig_sig = 0;  // required for EIG_LCMV
};

// One entry point for every kind in the roster. R and N are whatever
// covariances the caller trusts (analytic or estimated); Q feeds the MSE
// variants and rank selection.
inline SpatialFilter construct(FilterKind kind, const model::ForwardModel& fm, const Matrix& R,
                               const Matrix& N, const std::optional<Matrix>& Q,
                               const BuildOptions& opts = {}) {
    switch (kind) {
        case FilterKind::LCMV_R:
            return lcmv(fm, R, Mode::R);
        case FilterKind::LCMV_N:
            return lcmv(fm, N, Mode::N);
        case FilterKind::NULLING_R: {
            auto f = nulling(fm, R, Mode::R);
            f.kind = kind;
            return f;
        }
        case FilterKind::NULLING_N: {
            auto f = nulling(fm, N, Mode::N);
            f.kind = kind;
            return f;
        }
        case FilterKind::EIG_LCMV:
            return eigenspace_lcmv(fm, R, opts.eig_sig);
        case FilterKind::MMSE:
            if (!Q)
                throw MissingQ("MMSE needs the source covariance");
            return mmse(*Q, fm, R);
        case FilterKind::ZERO_FORCING:
            return zero_forcing(fm);
        case FilterKind::NULLING_PATCH_R:
            return mvpure_patch(Variant::R, fm, fm.k() == 0 ? 0 : opts.patch_s, R, fm.l(), Q);
        case FilterKind::NULLING_PATCH_N:
            return mvpure_patch(Variant::N, fm, fm.k() == 0 ? 0 : opts.patch_s, N, fm.l(), Q);
        default:
            break;
    }
    // reduced-rank families
    const auto traits = detail::family_traits(kind);
    const Matrix& M = traits.variant == Variant::N ? N : R;
    FamilyHandle family{kind, opts.patch_s};
    auto p = detail::prepare_family(family, fm, M, Q);
    Index r = opts.rank;
    if (r == 0)
        r = detail::select_from(p, fm.l()).selected_rank;
    auto f = detail::finalize(p, r, kind, fm.l());
    f.kind = kind;
    return f;
}

// CSV export: header row, one metadata row, then W row-major.
inline std::string to_csv(const SpatialFilter& f) {
    std::ostringstream out;
    out.precision(17);
    out << "kind,rank,j_value\n" << to_string(f.kind) << "," << f.rank << ",";
    if (f.diagnostics.j_value)
        out << *f.diagnostics.j_value;
    out << "\n";
    for (Index i = 0; i < f.W.rows(); ++i) {
        for (Index j = 0; j < f.W.cols(); ++j) {
            if (j > 0)
                out << ",";
            out << f.W(i, j);
        }
        out << "\n";
    }
    return out.str();
}

}  // namespace mvpure::filters
