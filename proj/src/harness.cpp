#include "lift/harness.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "lift/analysis.hpp"
#include "lift/rng.hpp"

namespace lift {

using json = nlohmann::json;

namespace {

// Fixed-precision scientific formatting keeps CSV output byte-stable
// across runs and platforms.
std::string format_value(double v) {
    std::ostringstream oss;
    oss.precision(17);
    oss << std::scientific << v;
    return oss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

int run_toy_pipeline(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
    const auto result = run_pipeline(config.pipeline);

    json summary;
    summary["experiment"] = "toy-pipeline";
    summary["seed"] = config.seed;
    summary["pretrain_val_loss"] = result.pretrain_val_loss;

    Checkpoint ckpt;
    ckpt.matrices.push_back({"pretrained.w", result.pretrained.w});
    ckpt.matrices.push_back({"pretrained.a", result.pretrained.a});

    for (const auto& run : result.runs) {
        write_metrics_csv(run.log, out_dir / (run.name + ".csv"));
        summary["methods"][run.name] = {
            {"best_val_loss", run.best_val_loss},
            {"final_val_loss", run.final_val_loss},
            {"final_spectral_norm_w", run.final_spectral_norm_w},
        };
        ckpt.matrices.push_back({run.name + ".w", run.net.w});
        ckpt.matrices.push_back({run.name + ".a", run.net.a});
    }

    save_checkpoint(ckpt, out_dir / "nets.ckpt");
    write_text(out_dir / "summary.json", summary.dump(2) + "\n");
    return 0;
}

int run_spectral_study(const ExperimentConfig& config,
                       const std::filesystem::path& out_dir) {
    const auto table = spectral_delta_study(config.spectral.dims, config.spectral.specs,
                                            config.spectral.trials, config.seed);

    std::ostringstream csv;
    csv << "rows,cols,strategy,mean_spectral_delta,std_spectral_delta,"
           "mean_frobenius_delta,std_frobenius_delta,trials\n";
    json summary;
    summary["experiment"] = "spectral-study";
    summary["seed"] = config.seed;
    for (const auto& row : table) {
        csv << row.rows << ',' << row.cols << ',' << row.strategy << ','
            << format_value(row.mean_spectral_delta) << ','
            << format_value(row.std_spectral_delta) << ','
            << format_value(row.mean_frobenius_delta) << ','
            << format_value(row.std_frobenius_delta) << ',' << row.trials << '\n';
        summary["table"].push_back({{"rows", row.rows},
                                    {"cols", row.cols},
                                    {"strategy", row.strategy},
                                    {"mean_spectral_delta", row.mean_spectral_delta},
                                    {"mean_frobenius_delta", row.mean_frobenius_delta}});
    }
    write_text(out_dir / "spectral_study.csv", csv.str());
    write_text(out_dir / "summary.json", summary.dump(2) + "\n");
    return 0;
}

int run_perturb_eval(const ExperimentConfig& config,
                     const std::filesystem::path& out_dir) {
    // train the toy net once, then evaluate each perturbation strategy on it
    PipelineConfig pipeline = config.pipeline;
    pipeline.methods.clear();
    pipeline.methods.push_back({"full", true, {}, {}});
    const auto trained = run_pipeline(pipeline);

    const auto dataset = make_finetune_dataset(pipeline.n_ft, pipeline.d, pipeline.seed);
    std::vector<PerturbationSpec> specs = config.perturb_eval.specs;
    for (std::size_t i = 0; i < specs.size(); ++i)
        specs[i].seed = sub_seed(config.seed ^ i, "perturb_eval.spec");
    const auto table = perturbation_eval_toy(trained.runs.at(0).net, dataset, specs);

    std::ostringstream csv;
    csv << "strategy,loss_unperturbed,loss_perturbed\n";
    json summary;
    summary["experiment"] = "perturb-eval";
    summary["seed"] = config.seed;
    for (const auto& row : table) {
        csv << row.strategy << ',' << format_value(row.loss_unperturbed) << ','
            << format_value(row.loss_perturbed) << '\n';
        summary["table"].push_back({{"strategy", row.strategy},
                                    {"loss_unperturbed", row.loss_unperturbed},
                                    {"loss_perturbed", row.loss_perturbed}});
    }
    write_text(out_dir / "perturb_eval.csv", csv.str());
    write_text(out_dir / "summary.json", summary.dump(2) + "\n");
    return 0;
}

}  // namespace

std::filesystem::path resolve_output_dir(const ExperimentConfig& config) {
    std::filesystem::path dir = config.output_dir;
    if (const char* root = std::getenv(kOutputRootEnv); root && *root && dir.is_relative())
        dir = std::filesystem::path(root) / dir;
    return dir;
}

void write_metrics_csv(const MetricsLog& log, const std::filesystem::path& path) {
    std::ostringstream csv;
    csv << "step,metric,value\n";
    for (const auto& rec : log.records)
        csv << rec.step << ',' << rec.name << ',' << format_value(rec.value) << '\n';
    write_text(path, csv.str());
}

int run_experiment(const ExperimentConfig& config) {
    const auto out_dir = resolve_output_dir(config);
    std::filesystem::create_directories(out_dir);
    write_text(out_dir / "resolved_config.json", serialize_config(config));

    switch (config.kind) {
        case ExperimentKind::ToyPipeline:
            return run_toy_pipeline(config, out_dir);
        case ExperimentKind::SpectralStudy:
            return run_spectral_study(config, out_dir);
        case ExperimentKind::PerturbEval:
            return run_perturb_eval(config, out_dir);
        case ExperimentKind::MaskInspect:
            throw ConfigError(
                "mask-inspect runs via the mask-inspect subcommand on a checkpoint");
    }
    return 2;
}

std::string mask_inspect(const Checkpoint& ckpt, const std::string& strategy_name,
                         std::uint64_t k, int rank) {
    const auto chosen = parse_strategy_name(strategy_name, rank, "largest", 0);
    if (chosen.needs_gradient())
        throw ConfigError("mask-inspect supports weight-only strategies");

    std::ostringstream out;
    out << "matrix,k,vs_lift,vs_weight_magnitude,vs_random\n";
    for (const auto& [name, w] : ckpt.matrices) {
        const auto k_eff = std::min<std::uint64_t>(k, static_cast<std::uint64_t>(w.size()));
        const int p = static_cast<int>(std::min(w.rows(), w.cols()));
        auto lift_strategy = SelectionStrategy::lift(RankSelection::largest(std::min(rank, p)));
        auto local = chosen;
        local.rank_selection.r = std::min(local.rank_selection.r, p);

        const Mask base = select_mask(w, nullptr, local, k_eff);
        const Mask lift_mask = select_mask(w, nullptr, lift_strategy, k_eff);
        const Mask wm = select_mask(w, nullptr, SelectionStrategy::weight_magnitude(), k_eff);
        const Mask rnd = select_mask(w, nullptr, SelectionStrategy::random(0), k_eff);
        out << name << ',' << k_eff << ',' << overlap_ratio(base, lift_mask) << ','
            << overlap_ratio(base, wm) << ',' << overlap_ratio(base, rnd) << '\n';
    }
    return out.str();
}

}  // namespace lift
