// Command-line front end. Subcommands pick the mode; a flat key = value
// config file (plus IRNET_* environment overrides) supplies everything else.
// Exit codes: 0 success, 2 invalid configuration or usage, 3 numerical abort.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "irnet/config.hpp"
#include "irnet/runner.hpp"

namespace {

struct CliArgs {
    std::string config_path;
    std::string seeds;
    std::string out_dir;
    int workers = 0;
};

void add_common_options(CLI::App* cmd, CliArgs& args) {
    cmd->add_option("--config", args.config_path, "path to a key = value config file");
    cmd->add_option("--seed", args.seeds, "comma-separated run seeds (overrides run.seeds)");
    cmd->add_option("--out", args.out_dir, "output directory (overrides run.output_dir)");
    cmd->add_option("--workers", args.workers, "parallel workers (overrides run.workers)");
}

irnet::RunConfig assemble(const CliArgs& args, irnet::RunMode mode) {
    irnet::ConfigMap map;
    if (!args.config_path.empty()) map = irnet::load_config_file(args.config_path);
    irnet::apply_env_overrides(map);
    // CLI flags outrank both the file and the environment.
    if (!args.seeds.empty()) map["run.seeds"] = args.seeds;
    if (!args.out_dir.empty()) map["run.output_dir"] = args.out_dir;
    if (args.workers > 0) map["run.workers"] = std::to_string(args.workers);
    return irnet::build_run_config(irnet::ConfigReader(std::move(map)), mode);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"iterative label refinement for noisy partial-label data"};
    app.require_subcommand(1);

    CliArgs args;
    auto* train = app.add_subcommand("train", "train a classifier with label correction");
    auto* theory = app.add_subcommand("theory", "run the level-set refinement simulation");
    auto* sweep = app.add_subcommand("sweep", "train over a grid of refinement settings");
    add_common_options(train, args);
    add_common_options(theory, args);
    add_common_options(sweep, args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    irnet::RunMode mode = irnet::RunMode::Train;
    if (theory->parsed()) mode = irnet::RunMode::TheorySim;
    if (sweep->parsed()) mode = irnet::RunMode::Sweep;

    try {
        const auto cfg = assemble(args, mode);
        return irnet::run_mode(cfg, std::cout);
    } catch (const irnet::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const irnet::NumericalError& e) {
        std::cerr << "numerical abort: " << e.what() << "\n";
        return 3;
    }
}
