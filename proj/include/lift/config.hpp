#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lift/analysis.hpp"
#include "lift/toymodel.hpp"

namespace lift {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class ExperimentKind { ToyPipeline, SpectralStudy, PerturbEval, MaskInspect };

struct SpectralStudyConfig {
    std::vector<std::pair<Eigen::Index, Eigen::Index>> dims = {{1024, 1024}};
    double noise_std = 0.1;
    int trials = 10;
    std::vector<PerturbationSpec> specs;
};

struct PerturbEvalConfig {
    double noise_std = 0.01;
    std::vector<PerturbationSpec> specs;
};

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::ToyPipeline;
    std::uint64_t seed = 0;
    std::string output_dir = "out";

    PipelineConfig pipeline;
    SpectralStudyConfig spectral;
    PerturbEvalConfig perturb_eval;
};

// Parse the JSON config document; unknown keys and out-of-range values
// are rejected with the offending key named in the message.
ExperimentConfig parse_config(const std::string& text);

// Fully resolved config (all defaults filled), suitable for echoing into
// the run's output directory. parse_config(serialize_config(c)) == c.
std::string serialize_config(const ExperimentConfig& config);

std::string experiment_kind_name(ExperimentKind kind);

// Named strategy parser shared with the CLI ("lift", "weight-magnitude",
// "gradient-magnitude", "movement", "random", "lift-structured").
SelectionStrategy parse_strategy_name(const std::string& name, int rank,
                                      const std::string& rank_variant,
                                      std::uint64_t seed, int block = 4);

}  // namespace lift
