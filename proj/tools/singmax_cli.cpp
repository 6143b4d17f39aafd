// Command line front end: run experiments from config files, emit plot data,
// validate configs, list presets. Exit codes: 0 all gates pass, 1 gate or
// solver failure, 2 usage/config error.

#include <CLI11.hpp>

#include "singmax/experiment.hpp"

int main(int argc, char** argv) {
    CLI::App app{"solver and verification harness for singular elliptic systems"};
    app.require_subcommand(1);

    std::string config_path, artifact_dir, output_override;

    auto* run = app.add_subcommand("run", "execute an experiment config");
    run->add_option("config", config_path, "INI config file")->required();
    run->add_option("-o,--output", output_override, "override the output directory");

    auto* plot = app.add_subcommand("plot-data", "emit plot-ready CSVs for a finished run");
    plot->add_option("dir", artifact_dir, "artifact directory of a completed run")->required();

    auto* validate = app.add_subcommand("validate-config", "parse and validate a config file");
    validate->add_option("config", config_path, "INI config file")->required();

    app.add_subcommand("list-presets", "list coefficient/potential presets and experiment kinds");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (app.got_subcommand("run")) {
            singmax::ExperimentConfig cfg;
            try {
                cfg = singmax::ExperimentConfig::from_file(config_path);
            } catch (const std::exception& e) {
                std::cerr << "configuration error: " << e.what() << "\n";
                return 2;
            }
            if (!output_override.empty()) cfg.output_dir = output_override;
            return singmax::run_experiment(cfg, std::cout);
        }
        if (app.got_subcommand("plot-data")) {
            singmax::emit_plot_data(artifact_dir);
            std::cout << "plot data written to " << artifact_dir << "/plot\n";
            return 0;
        }
        if (app.got_subcommand("validate-config")) {
            try {
                const singmax::ExperimentConfig cfg = singmax::ExperimentConfig::from_file(config_path);
                std::cout << cfg.echo().dump(2) << "\n";
                return 0;
            } catch (const std::exception& e) {
                std::cerr << "configuration error: " << e.what() << "\n";
                return 2;
            }
        }
        singmax::list_presets(std::cout);
        return 0;
    } catch (const singmax::config_error& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
