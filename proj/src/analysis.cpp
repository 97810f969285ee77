#include "lift/analysis.hpp"

#include <cmath>
#include <stdexcept>

#include "lift/rng.hpp"

namespace lift {

PerturbResult perturb(const Matrix& w, const PerturbationSpec& spec) {
    if (spec.noise_std <= 0) throw LinalgError("perturb: noise_std must be > 0");
    const auto k = resolve_budget(spec.budget, w.rows(), w.cols());
    Mask mask = select_mask(w, nullptr, spec.strategy, k);
    Rng rng(sub_seed(spec.seed, "perturb.noise"));
    Matrix out = w;
    for (auto pos : mask.positions())
        out(mask.row_of(pos), mask.col_of(pos)) += spec.noise_std * rng.next_gaussian();
    return PerturbResult{std::move(out), std::move(mask)};
}

std::vector<SpectralDeltaRow> spectral_delta_study(
    const std::vector<std::pair<Eigen::Index, Eigen::Index>>& dims,
    const std::vector<PerturbationSpec>& specs, int trials, std::uint64_t master_seed) {
    if (trials < 1) throw LinalgError("spectral_delta_study: trials must be >= 1");
    std::vector<SpectralDeltaRow> table;
    for (const auto& [rows, cols] : dims) {
        for (const auto& spec : specs) {
            std::vector<double> sdeltas, fdeltas;
            for (int trial = 0; trial < trials; ++trial) {
                // per-trial seed derived from the master so trials can run
                // in any order or in parallel
                const auto trial_seed =
                    sub_seed(master_seed ^ static_cast<std::uint64_t>(trial),
                             "spectral_study.trial");
                Rng rng(trial_seed);
                const Matrix w = rng.gaussian_matrix(rows, cols);
                PerturbationSpec trial_spec = spec;
                trial_spec.seed = trial_seed;
                const auto perturbed = perturb(w, trial_spec);

                sdeltas.push_back(spectral_norm(perturbed.perturbed) - spectral_norm(w));
                fdeltas.push_back(frobenius_norm(perturbed.perturbed) - frobenius_norm(w));
            }
            const auto mean_std = [](const std::vector<double>& xs) {
                double mean = 0;
                for (double x : xs) mean += x;
                mean /= static_cast<double>(xs.size());
                double var = 0;
                for (double x : xs) var += (x - mean) * (x - mean);
                var /= static_cast<double>(xs.size());
                return std::pair<double, double>(mean, std::sqrt(var));
            };
            const auto [smean, sstd] = mean_std(sdeltas);
            const auto [fmean, fstd] = mean_std(fdeltas);
            table.push_back({rows, cols, spec.name, smean, sstd, fmean, fstd, trials});
        }
    }
    return table;
}

AlignmentResult alignment_score_detail(const Matrix& w_before, const Matrix& w_after,
                                       int n_top) {
    if (w_before.rows() != w_after.rows() || w_before.cols() != w_after.cols())
        throw LinalgError("alignment_score: shape mismatch");
    const int p = static_cast<int>(std::min(w_before.rows(), w_before.cols()));
    if (n_top < 1 || n_top > p) throw LinalgError("alignment_score: n_top out of range");

    const auto before = svd(w_before);
    const auto after = svd(w_after);

    const Matrix v_before = before.v.leftCols(n_top);   // cols x n_top
    const Matrix v_after = after.v.leftCols(n_top);

    // projections of each fine-tuned vector onto the reference subspace
    const Matrix proj = v_after.transpose() * v_before;  // n_top x n_top
    const double score = proj.array().square().sum() / static_cast<double>(n_top);

    bool degenerate = false;
    const double tol = 1e-12;
    for (const auto& f : {before, after}) {
        if (n_top < static_cast<int>(f.singular_values.size())) {
            const double hi = f.singular_values(n_top - 1);
            const double lo = f.singular_values(n_top);
            if (std::abs(hi - lo) <= tol * std::max(1.0, hi)) degenerate = true;
        }
    }
    return AlignmentResult{score, n_top, degenerate};
}

double alignment_score(const Matrix& w_before, const Matrix& w_after, int n_top) {
    return alignment_score_detail(w_before, w_after, n_top).score;
}

int update_rank(const Matrix& w_before, const Matrix& w_after,
                double threshold_multiplier) {
    if (w_before.rows() != w_after.rows() || w_before.cols() != w_after.cols())
        throw LinalgError("update_rank: shape mismatch");
    return numerical_rank(w_after - w_before, threshold_multiplier);
}

std::vector<PerturbationEvalRow> perturbation_eval_toy(
    const ToyNet& net, const RegressionDataset& dataset,
    const std::vector<PerturbationSpec>& specs) {
    const Matrix xv = dataset.x_rows(dataset.val_rows);
    const Matrix yv = dataset.y_rows(dataset.val_rows);
    const double base = mse_loss(net, xv, yv);

    std::vector<PerturbationEvalRow> table;
    for (const auto& spec : specs) {
        ToyNet perturbed_net = net;
        perturbed_net.w = perturb(net.w, spec).perturbed;
        table.push_back({spec.name, base, mse_loss(perturbed_net, xv, yv)});
    }
    return table;
}

}  // namespace lift
