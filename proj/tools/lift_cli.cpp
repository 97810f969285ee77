#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "lift/harness.hpp"

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read config file: " + path);
    std::ostringstream oss;
    oss << in.rdbuf();
    return oss.str();
}

lift::ExperimentConfig load_config(const std::string& path) {
    return lift::parse_config(read_file(path));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"LIFT: low-rank informed sparse fine-tuning"};
    app.require_subcommand(1);

    std::string config_path;
    auto* run_cmd = app.add_subcommand("run", "Run the experiment described by a config");
    run_cmd->add_option("config", config_path, "JSON config file")->required();

    std::string study_config_path;
    auto* study_cmd =
        app.add_subcommand("spectral-study", "Random-matrix spectral/Frobenius noise study");
    study_cmd->add_option("config", study_config_path, "JSON config file")->required();

    std::string validate_path;
    auto* validate_cmd = app.add_subcommand("validate", "Parse and echo a config");
    validate_cmd->add_option("config", validate_path, "JSON config file")->required();

    std::string ckpt_path, inspect_strategy = "weight-magnitude";
    std::uint64_t inspect_k = 1024;
    int inspect_rank = 16;
    auto* inspect_cmd =
        app.add_subcommand("mask-inspect", "Print mask overlap tables for a checkpoint");
    inspect_cmd->add_option("ckpt", ckpt_path, "checkpoint file")->required();
    inspect_cmd->add_option("--strategy", inspect_strategy,
                            "selection strategy to compare against the references");
    inspect_cmd->add_option("--k", inspect_k, "mask cardinality");
    inspect_cmd->add_option("--rank", inspect_rank, "rank for lift-based strategies");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) {
            return lift::run_experiment(load_config(config_path));
        }
        if (study_cmd->parsed()) {
            auto config = load_config(study_config_path);
            config.kind = lift::ExperimentKind::SpectralStudy;
            return lift::run_experiment(config);
        }
        if (validate_cmd->parsed()) {
            std::cout << lift::serialize_config(load_config(validate_path));
            return 0;
        }
        if (inspect_cmd->parsed()) {
            const auto ckpt = lift::load_checkpoint(ckpt_path);
            std::cout << lift::mask_inspect(ckpt, inspect_strategy, inspect_k,
                                            inspect_rank);
            return 0;
        }
    } catch (const lift::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
