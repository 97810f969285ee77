#pragma once

#include <filesystem>
#include <string>

#include "lift/checkpoint.hpp"
#include "lift/config.hpp"

namespace lift {

// Output root override; relative output_dir values resolve under it.
inline constexpr const char* kOutputRootEnv = "LIFT_OUTPUT_ROOT";

std::filesystem::path resolve_output_dir(const ExperimentConfig& config);

// Write one metrics series as CSV with the fixed column set step,metric,value.
void write_metrics_csv(const MetricsLog& log, const std::filesystem::path& path);

// Dispatch an experiment and write its artifacts (resolved config echo,
// CSV series, summary JSON). Returns the process exit code.
int run_experiment(const ExperimentConfig& config);

// Overlap table between a chosen strategy and the reference strategies,
// per weight matrix of a checkpoint. Returns formatted text.
std::string mask_inspect(const Checkpoint& ckpt, const std::string& strategy_name,
                         std::uint64_t k, int rank);

}  // namespace lift
