#include "mvpure/harness.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mvpure/cli.hpp"

using namespace mvpure;
using namespace mvpure::harness;

namespace {

ExperimentConfig tiny_config() {
    ExperimentConfig cfg;
    cfg.sensors = 14;
    cfg.l = 3;
    cfg.k = 2;
    cfg.p = 2;
    cfg.n_runs = 2;
    cfg.n_trials = 3;
    cfg.samples_per_trial = 160;
    cfg.mvar_order = 2;
    cfg.filter_roster = {"LCMV_R", "ZERO_FORCING", "ZERO", "RANDOM"};
    cfg.master_seed = 7;
    return cfg;
}

// independently coded mean-square power
double slow_power(const Matrix& X) {
    double acc = 0.0;
    for (Index j = 0; j < X.cols(); ++j)
        for (Index i = 0; i < X.rows(); ++i)
            acc += X(i, j) * X(i, j);
    return acc / static_cast<double>(X.size());
}

std::string results_csv_without_timing(const std::vector<RunResult>& results) {
    std::ostringstream raw;
    write_results_csv(raw, results);
    std::istringstream in(raw.str());
    std::string line, out;
    while (std::getline(in, line)) {
        out += line.substr(0, line.rfind(','));
        out += '\n';
    }
    return out;
}

}  // namespace

TEST_CASE("scale_to_snr hits the requested power ratio", "[harness]") {
    Rng rng(11);
    Matrix ref = gaussian_matrix(6, 40, rng);
    Matrix sig = 3.7 * gaussian_matrix(6, 40, rng);

    Matrix eq = scale_to_snr(sig, ref, 0.0);
    CHECK(std::abs(signal_power(eq) / signal_power(ref) - 1.0) < 1e-10);

    Matrix plus20 = scale_to_snr(sig, ref, 20.0);
    CHECK(std::abs(signal_power(plus20) / signal_power(ref) - 100.0) / 100.0 < 1e-9);

    // re-measuring with an independent power routine
    Matrix minus7 = scale_to_snr(sig, ref, -7.0);
    const double measured = 10.0 * std::log10(slow_power(minus7) / slow_power(ref));
    CHECK(std::abs(measured - (-7.0)) < 1e-12);

    CHECK_THROWS_AS(scale_to_snr(sig, Matrix::Zero(6, 40), 0.0), ZeroPowerReference);
    CHECK_THROWS_AS(scale_to_snr(Matrix::Zero(6, 40), ref, 0.0), ZeroPowerReference);
}

TEST_CASE("config json round trip and strict schema", "[harness]") {
    auto cfg = tiny_config();
    cfg.sinr_db = {0.0, 12.5};
    cfg.use_analytic_q = true;
    auto back = config_from_json(config_to_json(cfg));
    CHECK(back.sinr_db == cfg.sinr_db);
    CHECK(back.sensors == cfg.sensors);
    CHECK(back.n_trials == cfg.n_trials);
    CHECK(back.mask_fraction == cfg.mask_fraction);
    CHECK(back.use_analytic_q);
    CHECK(back.filter_roster == cfg.filter_roster);
    CHECK(back.master_seed == cfg.master_seed);

    auto j = config_to_json(cfg);
    j["no_such_knob"] = 1;
    CHECK_THROWS_AS(config_from_json(j), ConfigError);

    j = config_to_json(cfg);
    j["schema_version"] = 999;
    CHECK_THROWS_AS(config_from_json(j), ConfigError);
    j.erase("schema_version");
    CHECK_THROWS_AS(config_from_json(j), ConfigError);

    // scalar and list spellings both work for the SNR knobs
    auto scalar = config_from_json({{"schema_version", 1}, {"smnr_db", 10.0}});
    CHECK(scalar.smnr_db == std::vector<double>{10.0});
    auto list = config_from_json({{"schema_version", 1}, {"smnr_db", {0.0, 10.0}}});
    CHECK(list.smnr_db.size() == 2);
}

TEST_CASE("validate_config rejects broken settings", "[harness]") {
    CHECK_NOTHROW(validate_config(tiny_config()));
    CHECK_NOTHROW(validate_config(ExperimentConfig{}));

    auto bad = tiny_config();
    bad.samples_per_trial = 161;
    CHECK_THROWS_AS(validate_config(bad), ConfigError);

    bad = tiny_config();
    bad.filter_roster.clear();
    CHECK_THROWS_AS(validate_config(bad), ConfigError);

    bad = tiny_config();
    bad.filter_roster = {"LCMV_R", "LCMV_R"};
    CHECK_THROWS_AS(validate_config(bad), ConfigError);

    bad = tiny_config();
    bad.filter_roster = {"NOT_A_FILTER"};
    CHECK_THROWS_AS(validate_config(bad), ConfigError);

    bad = tiny_config();
    bad.sensors = bad.l + bad.k;
    CHECK_THROWS_AS(validate_config(bad), ConfigError);

    bad = tiny_config();
    bad.patch_rank_s = bad.k + 1;
    CHECK_THROWS_AS(validate_config(bad), ConfigError);

    bad = tiny_config();
    bad.sinr_db = {};
    CHECK_THROWS_AS(validate_config(bad), ConfigError);
}

TEST_CASE("auto-resolved patch rank and eigenspace dimension", "[harness]") {
    ExperimentConfig cfg;
    CHECK(resolved_patch_s(cfg) == 8);  // 30% of k = 27
    CHECK(resolved_eig_sig(cfg) == 40);

    cfg.k = 10;
    CHECK(resolved_patch_s(cfg) == 3);
    cfg.patch_rank_s = 5;
    CHECK(resolved_patch_s(cfg) == 5);
    cfg.k = 0;
    CHECK(resolved_patch_s(cfg) == 0);

    cfg = ExperimentConfig{};
    cfg.sensors = 30;  // cap: the subspace cannot exceed the sensor count
    CHECK(resolved_eig_sig(cfg) == 30);
    cfg.eig_sig = 12;
    CHECK(resolved_eig_sig(cfg) == 12);
}

TEST_CASE("zero-forcing on a clean unperturbed instance is near-exact", "[harness]") {
    ExperimentConfig cfg;
    cfg.sensors = 16;
    cfg.l = 3;
    cfg.k = 0;
    cfg.p = 0;
    cfg.n_runs = 2;
    cfg.n_trials = 3;
    cfg.samples_per_trial = 200;
    cfg.mvar_order = 2;
    cfg.smnr_db = {300.0};  // effectively noiseless
    cfg.perturb_shift_m = 0.0;
    cfg.perturb_angle_rad = 0.0;
    cfg.filter_roster = {"ZERO_FORCING"};
    auto results = run_experiment(cfg);
    REQUIRE(results.size() == 2);
    for (const auto& run : results) {
        REQUIRE(run.filters.size() == 1);
        REQUIRE(run.filters[0].ok);
        CHECK(run.filters[0].recon_error < 1e-6);
    }
}

TEST_CASE("zero filter reports exactly the signal norm", "[harness]") {
    auto cfg = tiny_config();
    cfg.filter_roster = {"ZERO"};
    auto results = run_experiment(cfg);
    const auto grid = snr_grid(cfg);
    for (const auto& run : results) {
        auto ctx = prepare_run(cfg, grid[0], run.seed);
        double e2 = 0.0;
        for (const auto& trial : ctx.trials)
            e2 += trial.sa.squaredNorm();
        CHECK(run.filters[0].recon_error == std::sqrt(e2));
        CHECK_FALSE(run.filters[0].pdc_error.has_value());  // nothing to fit
    }
}

TEST_CASE("identical seeds give identical results, jobs notwithstanding", "[harness]") {
    auto cfg = tiny_config();
    cfg.sinr_db = {0.0, 20.0};
    auto a = run_experiment(cfg, 1);
    auto b = run_experiment(cfg, 3);
    CHECK(results_csv_without_timing(a) == results_csv_without_timing(b));

    // sweeps reuse the same draws at every SNR point
    REQUIRE(a.size() == 2 * static_cast<size_t>(cfg.n_runs));
    for (Index r = 0; r < cfg.n_runs; ++r) {
        CHECK(a[r].seed == a[cfg.n_runs + r].seed);
        CHECK(a[r].cond_H == a[cfg.n_runs + r].cond_H);
        CHECK(a[r].cond_Hc == a[cfg.n_runs + r].cond_Hc);
    }

    for (const auto& run : a)
        for (const auto& f : run.filters) {
            if (!f.ok)
                continue;
            CHECK(f.recon_error >= 0.0);
            if (f.selected_rank)
                CHECK((*f.selected_rank >= 1 && *f.selected_rank <= cfg.l));
        }
}

TEST_CASE("rank-deficient covariance fails the filter, not the run", "[harness]") {
    auto cfg = tiny_config();
    cfg.n_trials = 1;
    cfg.samples_per_trial = 20;  // 10 active samples for 14 sensors
    cfg.n_runs = 1;
    cfg.filter_roster = {"LCMV_R", "ZERO_FORCING"};
    auto results = run_experiment(cfg);
    REQUIRE(results.size() == 1);
    const auto& fs = results[0].filters;
    CHECK_FALSE(fs[0].ok);
    CHECK_FALSE(fs[0].error.empty());
    CHECK(fs[1].ok);

    auto rows = aggregate(results);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].failures == 1);
    CHECK_FALSE(rows[0].recon_mean.has_value());
    CHECK(rows[1].failures == 0);
}

TEST_CASE("aggregate statistics", "[harness]") {
    CHECK_THROWS_AS(aggregate({}), EmptyResults);

    RunResult r1, r2;
    r1.snr = r2.snr = {0.0, 0.0, 10.0};
    FilterOutcome f;
    f.name = "LCMV_R";
    f.ok = true;
    f.recon_error = 1.0;
    f.pdc_error = 0.4;
    r1.filters.push_back(f);
    f.recon_error = 3.0;
    f.pdc_error = 0.2;
    r2.filters.push_back(f);

    auto one = aggregate({r1});
    REQUIRE(one.size() == 1);
    CHECK(one[0].recon_mean == 1.0);
    CHECK(one[0].recon_median == 1.0);
    CHECK(one[0].recon_std == 0.0);

    auto two = aggregate({r1, r2});
    CHECK(two[0].runs == 2);
    CHECK(*two[0].recon_mean == 2.0);
    CHECK(*two[0].recon_median == 2.0);
    CHECK(std::abs(*two[0].recon_std - std::sqrt(2.0)) < 1e-15);
    CHECK(std::abs(*two[0].pdc_mean - 0.3) < 1e-15);
}

TEST_CASE("aggregate means match independent recomputation", "[harness]") {
    auto cfg = tiny_config();
    cfg.n_runs = 5;
    auto results = run_experiment(cfg);
    auto rows = aggregate(results);
    for (const auto& row : rows) {
        if (!row.recon_mean)
            continue;
        double acc = 0.0;
        Index n = 0;
        for (const auto& run : results)
            for (const auto& f : run.filters)
                if (f.name == row.name && f.ok) {
                    acc += f.recon_error;
                    ++n;
                }
        REQUIRE(n == row.runs - row.failures);
        CHECK(std::abs(*row.recon_mean - acc / static_cast<double>(n)) < 1e-12);
    }
}

TEST_CASE("summary has one row per filter per SNR point", "[harness]") {
    auto cfg = tiny_config();
    cfg.sinr_db = {0.0, 10.0, 20.0};
    auto rows = aggregate(run_experiment(cfg));
    CHECK(rows.size() == cfg.filter_roster.size() * 3);
    for (const auto& row : rows)
        CHECK(row.runs == cfg.n_runs);
}

TEST_CASE("config echo carries resolved values and seeds", "[harness]") {
    auto cfg = tiny_config();
    auto echo = config_echo(cfg);
    CHECK(echo["resolved"]["patch_rank_s"].get<Index>() == resolved_patch_s(cfg));
    CHECK(echo["resolved"]["eig_sig"].get<Index>() == resolved_eig_sig(cfg));
    CHECK(echo["resolved"]["run_seeds"].size() == static_cast<size_t>(cfg.n_runs));
    CHECK(echo["resolved"]["run_seeds"][0].get<std::uint64_t>() ==
          derive_seed(cfg.master_seed, 0));
}

TEST_CASE("cli entry point", "[harness][cli]") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "mvpure_cli_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const auto cfg_path = (dir / "cfg.json").string();
    {
        auto cfg = tiny_config();
        std::ofstream out(cfg_path);
        out << config_to_json(cfg).dump(2);
    }
    std::ostringstream out, err;

    CHECK(cli::cli_main({"validate", "--config", cfg_path}, out, err) == 0);
    CHECK(cli::cli_main({}, out, err) == 2);                      // subcommand required
    CHECK(cli::cli_main({"run", "--config", cfg_path}, out, err) == 2);  // --out missing
    CHECK(cli::cli_main({"run", "--config", (dir / "nope.json").string(), "--out",
                         (dir / "o").string()},
                        out, err) == 2);

    const auto bad_path = (dir / "bad.json").string();
    std::ofstream(bad_path) << "{ not json";
    CHECK(cli::cli_main({"validate", "--config", bad_path}, out, err) == 1);

    const auto out_dir = (dir / "out").string();
    CHECK(cli::cli_main({"run", "--config", cfg_path, "--out", out_dir, "--jobs", "2",
                         "--filters", "LCMV_R,ZERO"},
                        out, err) == 0);
    CHECK(fs::exists(fs::path(out_dir) / "results.csv"));
    CHECK(fs::exists(fs::path(out_dir) / "summary.csv"));
    CHECK(fs::exists(fs::path(out_dir) / "config-echo.json"));

    // sweep: one summary row per (filter, value) pair
    const auto sweep_dir = (dir / "sweep").string();
    CHECK(cli::cli_main({"sweep", "--config", cfg_path, "--out", sweep_dir, "--param",
                         "sinr_db", "--values", "0,10", "--filters", "LCMV_R,ZERO_FORCING"},
                        out, err) == 0);
    std::ifstream summary(fs::path(sweep_dir) / "summary.csv");
    std::string line;
    Index rows = 0;
    while (std::getline(summary, line))
        ++rows;
    CHECK(rows == 1 + 2 * 2);

    fs::remove_all(dir);
}
