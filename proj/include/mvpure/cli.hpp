#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "common.hpp"
#include "harness.hpp"

namespace mvpure::cli {

inline harness::ExperimentConfig demo_config() {
    harness::ExperimentConfig cfg;
    cfg.sensors = 32;
    cfg.l = 4;
    cfg.k = 6;
    cfg.p = 6;
    cfg.n_runs = 5;
    cfg.n_trials = 10;
    cfg.samples_per_trial = 400;
    cfg.mvar_order = 3;
    return cfg;
}

inline harness::ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config parse failure: " + std::string(e.what()));
    }
    return harness::config_from_json(j);
}

inline void write_outputs(const harness::ExperimentConfig& cfg,
                          const std::vector<harness::RunResult>& results,
                          const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::ofstream results_csv(out_dir / "results.csv");
    harness::write_results_csv(results_csv, results);
    std::ofstream summary_csv(out_dir / "summary.csv");
    harness::write_summary_csv(summary_csv, harness::aggregate(results));
    std::ofstream echo(out_dir / "config-echo.json");
    echo << harness::config_echo(cfg).dump(2) << "\n";
}

inline void run_and_write(const harness::ExperimentConfig& cfg, const std::string& out_dir,
                          Index jobs, std::ostream& log) {
    harness::validate_config(cfg);
    auto results = harness::run_experiment(cfg, jobs);
    write_outputs(cfg, results, out_dir);
    size_t rows = 0;
    for (const auto& r : results)
        rows += r.filters.size();
    log << "wrote " << out_dir << "/results.csv (" << rows << " rows), summary.csv, "
        << "config-echo.json\n";
}

// args = command line without the program name. Usage problems exit 2,
// anything that fails at runtime exits 1.
inline int cli_main(std::vector<std::string> args, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
    CLI::App app{"seeded benchmark of source-reconstruction spatial filters"};
    app.require_subcommand(1);

    std::string config_path, out_dir, sweep_param;
    std::uint64_t seed = 0;
    Index jobs = 1;
    std::vector<std::string> roster;
    std::vector<double> sweep_values;

    auto add_common = [&](CLI::App* cmd, bool config_required) {
        auto* c = cmd->add_option("--config", config_path, "JSON config file")
                      ->check(CLI::ExistingFile);
        if (config_required)
            c->required();
        cmd->add_option("--seed", seed, "override master_seed");
        cmd->add_option("--jobs", jobs, "parallel run count")->check(CLI::PositiveNumber);
        cmd->add_option("--filters", roster, "comma-separated roster override")->delimiter(',');
        return cmd;
    };

    auto* run_cmd = add_common(app.add_subcommand("run", "execute the configured experiment"),
                               true);
    run_cmd->add_option("--out", out_dir, "output directory")->required();

    auto* sweep_cmd = add_common(
        app.add_subcommand("sweep", "run with one SNR list replaced by --values"), true);
    sweep_cmd->add_option("--out", out_dir, "output directory")->required();
    sweep_cmd->add_option("--param", sweep_param, "which list to sweep")
        ->required()
        ->check(CLI::IsMember({"sinr_db", "sbnr_db", "smnr_db"}));
    sweep_cmd->add_option("--values", sweep_values, "comma-separated dB values")
        ->required()
        ->delimiter(',');

    auto* validate_cmd = app.add_subcommand("validate", "schema-check a config and exit");
    validate_cmd->add_option("--config", config_path, "JSON config file")
        ->required()
        ->check(CLI::ExistingFile);

    auto* demo_cmd = add_common(app.add_subcommand("demo", "small built-in configuration"),
                                false);
    demo_cmd->add_option("--out", out_dir, "output directory");

    try {
        std::reverse(args.begin(), args.end());  // CLI11's vector overload wants them reversed
        app.parse(std::move(args));
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return 2;
    }

    try {
        harness::ExperimentConfig cfg;
        if (demo_cmd->parsed()) {
            cfg = demo_config();
            if (out_dir.empty())
                out_dir = "demo_out";
        } else {
            cfg = load_config(config_path);
        }
        if (app.get_subcommand()->count("--seed") > 0)
            cfg.master_seed = seed;
        if (!roster.empty())
            cfg.filter_roster = roster;
        if (sweep_cmd->parsed()) {
            if (sweep_param == "sinr_db")
                cfg.sinr_db = sweep_values;
            else if (sweep_param == "sbnr_db")
                cfg.sbnr_db = sweep_values;
            else
                cfg.smnr_db = sweep_values;
        }
        if (validate_cmd->parsed()) {
            harness::validate_config(cfg);
            out << "config ok\n";
            return 0;
        }
        run_and_write(cfg, out_dir, jobs, out);
        return 0;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

inline int cli_main(int argc, char** argv) {
    return cli_main(std::vector<std::string>(argv + 1, argv + argc));
}

}  // namespace mvpure::cli
