#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "common.hpp"
#include "filters.hpp"
#include "forward.hpp"
#include "linalg.hpp"
#include "model.hpp"
#include "mvar.hpp"

namespace mvpure::harness {

// Sanity rows that live alongside the real filters in a roster.
inline constexpr const char* kZeroFilterName = "ZERO";
inline constexpr const char* kRandomFilterName = "RANDOM";

inline std::vector<std::string> default_roster() {
    std::vector<std::string> r;
    for (const auto& [kind, name] : filters::kKindNames)
        r.emplace_back(name);
    r.emplace_back(kZeroFilterName);
    r.emplace_back(kRandomFilterName);
    return r;
}

struct SnrPoint {
    double sinr_db = 0.0;
    double sbnr_db = 0.0;
    double smnr_db = 10.0;

    bool operator==(const SnrPoint&) const = default;
};

struct ExperimentConfig {
    std::vector<double> sinr_db{0.0};
    std::vector<double> sbnr_db{0.0};
    std::vector<double> smnr_db{10.0};
    Index sensors = 128;
    Index l = 13;
    Index k = 27;
    Index p = 27;
    Index n_runs = 100;
    Index n_trials = 100;
    Index samples_per_trial = 1000;
    Index mvar_order = 6;
    double mask_fraction = 0.8;
    Index patch_rank_s = 0;  // 0 = round(0.3 k), clamped to [1, k]
    Index eig_sig = 0;       // 0 = l + k, capped at the sensor count
    double perturb_shift_m = 0.005;
    double perturb_angle_rad = 3.14159265358979323846 / 32.0;
    bool use_analytic_q = false;  // false: recover Q from the estimated covariances
    std::vector<std::string> filter_roster = default_roster();
    std::uint64_t master_seed = 42;
};

inline bool is_sanity_name(const std::string& name) {
    return name == kZeroFilterName || name == kRandomFilterName;
}

inline Index resolved_patch_s(const ExperimentConfig& cfg) {
    if (cfg.k == 0)
        return 0;
    if (cfg.patch_rank_s != 0)
        return cfg.patch_rank_s;
    return std::clamp<Index>(std::llround(0.3 * static_cast<double>(cfg.k)), 1, cfg.k);
}

inline Index resolved_eig_sig(const ExperimentConfig& cfg) {
    if (cfg.eig_sig != 0)
        return cfg.eig_sig;
    return std::min(cfg.l + cfg.k, cfg.sensors);
}

inline void validate_config(const ExperimentConfig& cfg) {
    auto positive = [](Index v, const char* name) {
        if (v < 1)
            throw ConfigError(std::string(name) + " must be >= 1");
    };
    positive(cfg.l, "l");
    positive(cfg.sensors, "sensors");
    positive(cfg.n_runs, "n_runs");
    positive(cfg.n_trials, "n_trials");
    positive(cfg.mvar_order, "mvar_order");
    if (cfg.k < 0 || cfg.p < 0)
        throw ConfigError("k and p must be >= 0");
    if (cfg.sensors <= cfg.l + cfg.k)
        throw ConfigError("sensors must exceed l + k");
    if (cfg.samples_per_trial < 2 || cfg.samples_per_trial % 2 != 0)
        throw ConfigError("samples_per_trial must be even (pre/post split)");
    if (!(cfg.mask_fraction >= 0.0 && cfg.mask_fraction <= 1.0))
        throw ConfigError("mask_fraction must lie in [0, 1]");
    if (cfg.patch_rank_s < 0 || cfg.patch_rank_s > cfg.k)
        throw ConfigError("patch_rank_s must lie in [0, k]");
    if (cfg.eig_sig < 0 || cfg.eig_sig > cfg.sensors)
        throw ConfigError("eig_sig must lie in [0, sensors]");
    if (cfg.perturb_shift_m < 0.0 || cfg.perturb_angle_rad < 0.0)
        throw ConfigError("perturbation bounds must be nonnegative");
    for (const auto* list : {&cfg.sinr_db, &cfg.sbnr_db, &cfg.smnr_db}) {
        if (list->empty())
            throw ConfigError("each SNR list needs at least one value");
        for (double v : *list)
            if (!std::isfinite(v))
                throw ConfigError("SNR values must be finite");
    }
    if (cfg.filter_roster.empty())
        throw ConfigError("filter_roster must not be empty");
    for (size_t i = 0; i < cfg.filter_roster.size(); ++i) {
        const auto& name = cfg.filter_roster[i];
        if (!is_sanity_name(name))
            filters::kind_from_string(name);  // throws on unknown names
        for (size_t j = i + 1; j < cfg.filter_roster.size(); ++j)
            if (cfg.filter_roster[j] == name)
                throw ConfigError("duplicate roster entry '" + name + "'");
    }
}

// Power ratios are sensor-space mean squares; target_db fixes
// 10 log10(P_signal / P_reference) after scaling.
inline double snr_scale_factor(const Matrix& signal, const Matrix& reference, double target_db) {
    const double p_sig = signal_power(signal);
    const double p_ref = signal_power(reference);
    if (p_ref <= 0.0)
        throw ZeroPowerReference("reference has zero power");
    if (p_sig <= 0.0)
        throw ZeroPowerReference("signal has zero power");
    return std::sqrt(p_ref / p_sig * std::pow(10.0, target_db / 10.0));
}

inline Matrix scale_to_snr(const Matrix& signal, const Matrix& reference, double target_db) {
    return snr_scale_factor(signal, reference, target_db) * signal;
}

struct TrialData {
    Matrix y_pre;   // sensors x T/2, background and measurement noise only
    Matrix y_act;   // sensors x T/2, everything
    Matrix sa;      // sources x T/2, ground truth
};

struct RunContext {
    model::ForwardModel fm_true;
    model::ForwardModel fm_pert;
    mvar::MvarModel sa_model;
    std::vector<TrialData> trials;
    double cond_H = 0.0;    // perturbed leadfields: the ones the filters see
    double cond_Hc = 0.0;
};

namespace detail {

// cortex analogue: an outer shell that perturbation cannot push out of the head
inline constexpr double kCortexMin = 0.70;
inline constexpr double kCortexMax = 0.88;
inline constexpr double kDeepMin = 0.10;
inline constexpr double kDeepMax = 0.40;

inline double condition_number(const Matrix& A) {
    Vector sv = linalg::singular_values(A);
    if (sv.size() == 0 || sv(sv.size() - 1) <= 0.0)
        return std::numeric_limits<double>::infinity();
    return sv(0) / sv(sv.size() - 1);
}

inline Matrix column_block(const Matrix& A, Index start, Index count) {
    return A.middleCols(start, count);
}

}  // namespace detail

// Everything random in a run derives from its seed, never from the SNR
// point, so sweeps reuse the same draws (common random numbers).
inline RunContext prepare_run(const ExperimentConfig& cfg, const SnrPoint& point,
                              std::uint64_t run_seed) {
    const Index m = cfg.sensors;
    const Index half = cfg.samples_per_trial / 2;

    Rng geo_rng(derive_seed(run_seed, 1));
    auto geom = forward::sample_sources(cfg.l + cfg.k, detail::kCortexMin, detail::kCortexMax,
                                        geo_rng);
    // background split mirrors the 7-shallow / 20-deep layout at p = 27 and
    // scales proportionally otherwise
    const Index shallow =
        cfg.p == 0 ? 0
                   : std::clamp<Index>(std::llround(static_cast<double>(cfg.p) * 7.0 / 27.0),
                                       0, cfg.p);
    auto bn_shallow =
        forward::sample_sources(shallow, detail::kCortexMin, detail::kCortexMax, geo_rng);
    auto bn_deep = forward::sample_sources(cfg.p - shallow, detail::kDeepMin, detail::kDeepMax,
                                           geo_rng);
    for (Index i = 0; i < shallow; ++i) {
        geom.positions.push_back(bn_shallow.positions[i]);
        geom.orientations.push_back(bn_shallow.orientations[i]);
    }
    for (Index i = 0; i < cfg.p - shallow; ++i) {
        geom.positions.push_back(bn_deep.positions[i]);
        geom.orientations.push_back(bn_deep.orientations[i]);
    }

    auto sensors = forward::fibonacci_sensors(m);
    Matrix lead_true = forward::spherical_leadfield(geom, sensors);
    auto perturbed = forward::perturb_geometry(geom, cfg.perturb_shift_m, cfg.perturb_angle_rad,
                                               derive_seed(run_seed, 2));
    Matrix lead_pert = forward::spherical_leadfield(perturbed, sensors);

    RunContext ctx;
    ctx.fm_true = model::make_forward_model(detail::column_block(lead_true, 0, cfg.l),
                                            detail::column_block(lead_true, cfg.l, cfg.k),
                                            detail::column_block(lead_true, cfg.l + cfg.k, cfg.p));
    ctx.fm_pert = model::make_forward_model(detail::column_block(lead_pert, 0, cfg.l),
                                            detail::column_block(lead_pert, cfg.l, cfg.k),
                                            detail::column_block(lead_pert, cfg.l + cfg.k, cfg.p));
    ctx.cond_H = detail::condition_number(ctx.fm_pert.H);
    ctx.cond_Hc = detail::condition_number(ctx.fm_pert.composite());

    ctx.sa_model = mvar::generate_mvar(cfg.l, cfg.mvar_order, cfg.mask_fraction,
                                       derive_seed(run_seed, 3));
    auto sa_trials = mvar::simulate_mvar(ctx.sa_model, half, cfg.n_trials,
                                         derive_seed(run_seed, 5));
    std::vector<model::SourceSignal> bn_trials;
    if (cfg.p > 0) {
        auto bn_model = mvar::generate_mvar(cfg.p, cfg.mvar_order, cfg.mask_fraction,
                                            derive_seed(run_seed, 4));
        bn_trials = mvar::simulate_mvar(bn_model, cfg.samples_per_trial, cfg.n_trials,
                                        derive_seed(run_seed, 6));
    }

    ctx.trials.reserve(cfg.n_trials);
    for (Index t = 0; t < cfg.n_trials; ++t) {
        const Matrix sa_sens = ctx.fm_true.H * sa_trials[t].samples;

        Rng mn_rng(derive_seed(run_seed, 8, static_cast<std::uint64_t>(t)));
        const Matrix mn = gaussian_matrix(m, cfg.samples_per_trial, mn_rng);
        const double f_mn = snr_scale_factor(mn.rightCols(half), sa_sens, -point.smnr_db);

        Matrix y_pre = f_mn * mn.leftCols(half);
        Matrix y_act = sa_sens + f_mn * mn.rightCols(half);

        if (cfg.p > 0) {
            const Matrix bn_sens = ctx.fm_true.H_b * bn_trials[t].samples;
            const double f_bn = snr_scale_factor(bn_sens.rightCols(half), sa_sens, -point.sbnr_db);
            y_pre += f_bn * bn_sens.leftCols(half);
            y_act += f_bn * bn_sens.rightCols(half);
        }
        if (cfg.k > 0) {
            auto in_sig = mvar::derive_interference(
                sa_trials[t], cfg.k, derive_seed(run_seed, 7, static_cast<std::uint64_t>(t)));
            const Matrix in_sens = ctx.fm_true.H_I * in_sig.samples;
            y_act += snr_scale_factor(in_sens, sa_sens, -point.sinr_db) * in_sens;
        }

        ctx.trials.push_back({std::move(y_pre), std::move(y_act),
                              std::move(sa_trials[t].samples)});
    }
    return ctx;
}

struct FilterOutcome {
    std::string name;
    bool ok = false;
    std::string error;
    double recon_error = 0.0;
    std::optional<double> pdc_error;
    std::optional<double> j_value;
    std::optional<Index> selected_rank;
};

struct RunResult {
    SnrPoint snr;
    Index run = 0;
    std::uint64_t seed = 0;
    double cond_H = 0.0;
    double cond_Hc = 0.0;
    double elapsed_ms = 0.0;
    std::vector<FilterOutcome> filters;
};

namespace detail {

inline bool wants_interference_q(filters::FilterKind kind) {
    using filters::FilterKind;
    switch (kind) {
        case FilterKind::NULLING_R:
        case FilterKind::NULLING_N:
        case FilterKind::MVP_INT_MSE:
        case FilterKind::MVP_INT_R:
        case FilterKind::MVP_INT_N:
        case FilterKind::MVP_PATCH_R:
        case FilterKind::MVP_PATCH_N:
        case FilterKind::NULLING_PATCH_R:
        case FilterKind::NULLING_PATCH_N:
            return true;
        default:
            return false;
    }
}

struct QEstimates {
    std::optional<Matrix> q_free;
    std::optional<Matrix> q_int;
    std::string error_free;
    std::string error_int;
};

inline QEstimates make_q(const ExperimentConfig& cfg, const RunContext& ctx, const Matrix& R,
                         const Matrix& N) {
    QEstimates q;
    if (cfg.use_analytic_q) {
        Matrix analytic = mvar::stationary_covariance(ctx.sa_model);
        q.q_free = analytic;
        q.q_int = std::move(analytic);
        return q;
    }
    try {
        q.q_free = model::estimate_Q_free(ctx.fm_pert, R, N);
    } catch (const std::exception& e) {
        q.error_free = e.what();
    }
    try {
        q.q_int = model::estimate_Q_int(ctx.fm_pert, R, N);
    } catch (const std::exception& e) {
        q.error_int = e.what();
    }
    return q;
}

}  // namespace detail

inline RunResult execute_run(const ExperimentConfig& cfg, const SnrPoint& point, Index run_index,
                             std::uint64_t run_seed) {
    const auto t0 = std::chrono::steady_clock::now();
    RunResult res;
    res.snr = point;
    res.run = run_index;
    res.seed = run_seed;

    auto ctx = prepare_run(cfg, point, run_seed);
    res.cond_H = ctx.cond_H;
    res.cond_Hc = ctx.cond_Hc;

    Matrix N_hat = Matrix::Zero(cfg.sensors, cfg.sensors);
    Matrix R_hat = Matrix::Zero(cfg.sensors, cfg.sensors);
    for (const auto& trial : ctx.trials) {
        N_hat += model::sample_covariance(trial.y_pre);
        R_hat += model::sample_covariance(trial.y_act);
    }
    N_hat /= static_cast<double>(cfg.n_trials);
    R_hat /= static_cast<double>(cfg.n_trials);

    const auto q = detail::make_q(cfg, ctx, R_hat, N_hat);
    const auto pdc_true = mvar::pdc(ctx.sa_model);

    filters::BuildOptions opts;
    opts.patch_s = resolved_patch_s(cfg);
    opts.eig_sig = resolved_eig_sig(cfg);

    for (const auto& name : cfg.filter_roster) {
        FilterOutcome out;
        out.name = name;
        Matrix W;
        try {
            if (name == kZeroFilterName) {
                W = Matrix::Zero(cfg.l, cfg.sensors);
            } else if (name == kRandomFilterName) {
                Rng wrng(derive_seed(run_seed, 9));
                W = gaussian_matrix(cfg.l, cfg.sensors, wrng);
            } else {
                const auto kind = filters::kind_from_string(name);
                const bool wants_int = detail::wants_interference_q(kind);
                const auto& q_err = wants_int ? q.error_int : q.error_free;
                const auto& q_mat = wants_int ? q.q_int : q.q_free;
                if (!q_mat && !q_err.empty() &&
                    (kind == filters::FilterKind::MMSE ||
                     kind == filters::FilterKind::MVP_INT_MSE ||
                     kind == filters::FilterKind::MVP_FREE_MSE))
                    throw SingularCovariance("source covariance recovery failed: " + q_err);
                auto f = filters::construct(kind, ctx.fm_pert, R_hat, N_hat, q_mat, opts);
                W = f.W;
                out.j_value = f.diagnostics.j_value;
                out.selected_rank = f.rank;
            }
            double err2 = 0.0;
            std::vector<Matrix> recon;
            recon.reserve(ctx.trials.size());
            for (const auto& trial : ctx.trials) {
                recon.push_back(W * trial.y_act);
                err2 += (recon.back() - trial.sa).squaredNorm();
            }
            out.recon_error = std::sqrt(err2);
            out.ok = true;
            if (all_finite(recon.front())) {
                try {
                    auto fit = mvar::fit_mvar(recon, cfg.mvar_order);
                    out.pdc_error = mvar::pdc_error(pdc_true, mvar::pdc(fit));
                } catch (const std::exception&) {
                    // degenerate reconstruction: leave the cell empty
                }
            }
        } catch (const std::exception& e) {
            out.ok = false;
            out.error = e.what();
        }
        res.filters.push_back(std::move(out));
    }

    res.elapsed_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - t0)
                         .count();
    return res;
}

inline std::vector<SnrPoint> snr_grid(const ExperimentConfig& cfg) {
    std::vector<SnrPoint> grid;
    for (double si : cfg.sinr_db)
        for (double sb : cfg.sbnr_db)
            for (double sm : cfg.smnr_db)
                grid.push_back({si, sb, sm});
    return grid;
}

inline std::vector<std::uint64_t> run_seeds(const ExperimentConfig& cfg) {
    std::vector<std::uint64_t> seeds(cfg.n_runs);
    for (Index i = 0; i < cfg.n_runs; ++i)
        seeds[i] = derive_seed(cfg.master_seed, static_cast<std::uint64_t>(i));
    return seeds;
}

// Runs are embarrassingly parallel; results land in preallocated slots so
// the output order never depends on scheduling.
inline std::vector<RunResult> run_experiment(const ExperimentConfig& cfg, Index jobs = 1) {
    validate_config(cfg);
    const auto grid = snr_grid(cfg);
    const auto seeds = run_seeds(cfg);
    const size_t total = grid.size() * static_cast<size_t>(cfg.n_runs);
    std::vector<RunResult> results(total);

    std::atomic<size_t> cursor{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const size_t i = cursor.fetch_add(1);
            if (i >= total)
                return;
            const size_t combo = i / static_cast<size_t>(cfg.n_runs);
            const Index run = static_cast<Index>(i % static_cast<size_t>(cfg.n_runs));
            try {
                results[i] = execute_run(cfg, grid[combo], run, seeds[run]);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error)
                    first_error = std::current_exception();
                return;
            }
        }
    };

    const Index n_threads = std::clamp<Index>(jobs, 1, static_cast<Index>(total));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_threads);
        for (Index i = 0; i < n_threads; ++i)
            pool.emplace_back(worker);
        for (auto& th : pool)
            th.join();
    }
    if (first_error)
        std::rethrow_exception(first_error);
    return results;
}

struct SummaryRow {
    std::string name;
    SnrPoint snr;
    Index runs = 0;
    Index failures = 0;
    std::optional<double> recon_mean, recon_median, recon_std;
    std::optional<double> pdc_mean, pdc_median, pdc_std;
};

namespace detail {

struct Stats {
    double mean, median, std;
};

inline Stats stats(std::vector<double> v) {
    const double n = static_cast<double>(v.size());
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    std::sort(v.begin(), v.end());
    const size_t mid = v.size() / 2;
    const double median = v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
    double ss = 0.0;
    for (double x : v)
        ss += (x - mean) * (x - mean);
    const double sd = v.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    return {mean, median, sd};
}

}  // namespace detail

inline std::vector<SummaryRow> aggregate(const std::vector<RunResult>& results) {
    if (results.empty())
        throw EmptyResults("nothing to aggregate");
    std::vector<SummaryRow> rows;
    std::vector<std::vector<double>> recon, pdc;
    auto row_index = [&](const std::string& name, const SnrPoint& snr) {
        for (size_t i = 0; i < rows.size(); ++i)
            if (rows[i].name == name && rows[i].snr == snr)
                return i;
        rows.push_back({name, snr, 0, 0, {}, {}, {}, {}, {}, {}});
        recon.emplace_back();
        pdc.emplace_back();
        return rows.size() - 1;
    };
    for (const auto& run : results) {
        for (const auto& f : run.filters) {
            const size_t i = row_index(f.name, run.snr);
            ++rows[i].runs;
            if (!f.ok) {
                ++rows[i].failures;
                continue;
            }
            recon[i].push_back(f.recon_error);
            if (f.pdc_error)
                pdc[i].push_back(*f.pdc_error);
        }
    }
    for (size_t i = 0; i < rows.size(); ++i) {
        if (!recon[i].empty()) {
            auto s = detail::stats(recon[i]);
            rows[i].recon_mean = s.mean;
            rows[i].recon_median = s.median;
            rows[i].recon_std = s.std;
        }
        if (!pdc[i].empty()) {
            auto s = detail::stats(pdc[i]);
            rows[i].pdc_mean = s.mean;
            rows[i].pdc_median = s.median;
            rows[i].pdc_std = s.std;
        }
    }
    return rows;
}

namespace detail {

inline void put(std::ostream& out, const std::optional<double>& v) {
    if (v)
        out << *v;
}

inline std::string sanitize(std::string s) {
    for (char& c : s)
        if (c == ',' || c == '\n' || c == '\r')
            c = ';';
    return s;
}

}  // namespace detail

// One row per run x filter; the trailing elapsed_ms column is the only part
// exempt from the byte-identical determinism contract.
inline void write_results_csv(std::ostream& out, const std::vector<RunResult>& results) {
    out.precision(17);
    out << "sinr_db,sbnr_db,smnr_db,run,run_seed,filter,status,recon_error,pdc_error,"
           "selected_rank,j_value,cond_H,cond_Hc,elapsed_ms\n";
    for (const auto& run : results) {
        for (const auto& f : run.filters) {
            out << run.snr.sinr_db << "," << run.snr.sbnr_db << "," << run.snr.smnr_db << ","
                << run.run << "," << run.seed << "," << f.name << ","
                << (f.ok ? "ok" : detail::sanitize(f.error)) << ",";
            if (f.ok)
                out << f.recon_error;
            out << ",";
            detail::put(out, f.pdc_error);
            out << ",";
            if (f.selected_rank)
                out << *f.selected_rank;
            out << ",";
            detail::put(out, f.j_value);
            out << "," << run.cond_H << "," << run.cond_Hc << "," << run.elapsed_ms << "\n";
        }
    }
}

inline void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
    out.precision(17);
    out << "filter,sinr_db,sbnr_db,smnr_db,runs,failures,recon_mean,recon_median,recon_std,"
           "pdc_mean,pdc_median,pdc_std\n";
    for (const auto& r : rows) {
        out << r.name << "," << r.snr.sinr_db << "," << r.snr.sbnr_db << "," << r.snr.smnr_db
            << "," << r.runs << "," << r.failures << ",";
        detail::put(out, r.recon_mean);
        out << ",";
        detail::put(out, r.recon_median);
        out << ",";
        detail::put(out, r.recon_std);
        out << ",";
        detail::put(out, r.pdc_mean);
        out << ",";
        detail::put(out, r.pdc_median);
        out << ",";
        detail::put(out, r.pdc_std);
        out << "\n";
    }
}

inline constexpr int kConfigSchemaVersion = 1;

inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
    return nlohmann::json{{"schema_version", kConfigSchemaVersion},
                          {"sinr_db", cfg.sinr_db},
                          {"sbnr_db", cfg.sbnr_db},
                          {"smnr_db", cfg.smnr_db},
                          {"sensors", cfg.sensors},
                          {"l", cfg.l},
                          {"k", cfg.k},
                          {"p", cfg.p},
                          {"n_runs", cfg.n_runs},
                          {"n_trials", cfg.n_trials},
                          {"samples_per_trial", cfg.samples_per_trial},
                          {"mvar_order", cfg.mvar_order},
                          {"mask_fraction", cfg.mask_fraction},
                          {"patch_rank_s", cfg.patch_rank_s},
                          {"eig_sig", cfg.eig_sig},
                          {"perturb_shift_m", cfg.perturb_shift_m},
                          {"perturb_angle_rad", cfg.perturb_angle_rad},
                          {"use_analytic_q", cfg.use_analytic_q},
                          {"filter_roster", cfg.filter_roster},
                          {"master_seed", cfg.master_seed}};
}

namespace detail {

inline std::vector<double> snr_list(const nlohmann::json& v, const std::string& key) {
    try {
        if (v.is_number())
            return {v.get<double>()};
        return v.get<std::vector<double>>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError("'" + key + "' must be a number or a list of numbers");
    }
}

template <typename T>
inline T field(const nlohmann::json& v, const std::string& key) {
    try {
        return v.get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError("bad type for config key '" + key + "'");
    }
}

}  // namespace detail

// Strict schema: every key must be known, the version must match.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    if (!j.is_object())
        throw ConfigError("config root must be a JSON object");
    if (!j.contains("schema_version"))
        throw ConfigError("config is missing 'schema_version'");
    if (!j["schema_version"].is_number_integer() ||
        j["schema_version"].get<int>() != kConfigSchemaVersion)
        throw ConfigError("unsupported schema_version (expected " +
                          std::to_string(kConfigSchemaVersion) + ")");
    ExperimentConfig cfg;
    for (const auto& [key, value] : j.items()) {
        if (key == "schema_version")
            continue;
        else if (key == "sinr_db")
            cfg.sinr_db = detail::snr_list(value, key);
        else if (key == "sbnr_db")
            cfg.sbnr_db = detail::snr_list(value, key);
        else if (key == "smnr_db")
            cfg.smnr_db = detail::snr_list(value, key);
        else if (key == "sensors")
            cfg.sensors = detail::field<Index>(value, key);
        else if (key == "l")
            cfg.l = detail::field<Index>(value, key);
        else if (key == "k")
            cfg.k = detail::field<Index>(value, key);
        else if (key == "p")
            cfg.p = detail::field<Index>(value, key);
        else if (key == "n_runs")
            cfg.n_runs = detail::field<Index>(value, key);
        else if (key == "n_trials")
            cfg.n_trials = detail::field<Index>(value, key);
        else if (key == "samples_per_trial")
            cfg.samples_per_trial = detail::field<Index>(value, key);
        else if (key == "mvar_order")
            cfg.mvar_order = detail::field<Index>(value, key);
        else if (key == "mask_fraction")
            cfg.mask_fraction = detail::field<double>(value, key);
        else if (key == "patch_rank_s")
            cfg.patch_rank_s = detail::field<Index>(value, key);
        else if (key == "eig_sig")
            cfg.eig_sig = detail::field<Index>(value, key);
        else if (key == "perturb_shift_m")
            cfg.perturb_shift_m = detail::field<double>(value, key);
        else if (key == "perturb_angle_rad")
            cfg.perturb_angle_rad = detail::field<double>(value, key);
        else if (key == "use_analytic_q")
            cfg.use_analytic_q = detail::field<bool>(value, key);
        else if (key == "filter_roster")
            cfg.filter_roster = detail::field<std::vector<std::string>>(value, key);
        else if (key == "master_seed")
            cfg.master_seed = detail::field<std::uint64_t>(value, key);
        else
            throw ConfigError("unknown config key '" + key + "'");
    }
    return cfg;
}

inline nlohmann::json config_echo(const ExperimentConfig& cfg) {
    nlohmann::json echo = config_to_json(cfg);
    echo["resolved"] = {{"patch_rank_s", resolved_patch_s(cfg)},
                        {"eig_sig", resolved_eig_sig(cfg)},
                        {"run_seeds", run_seeds(cfg)}};
    return echo;
}

}  // namespace mvpure::harness
