#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lift/masking.hpp"
#include "lift/toymodel.hpp"

namespace lift {

struct PerturbationSpec {
    std::string name;
    SelectionStrategy strategy{};
    BudgetSpec budget{};
    double noise_std = 0.01;
    std::uint64_t seed = 0;
};

struct PerturbResult {
    Matrix perturbed;
    Mask mask;
};

// Add i.i.d. Gaussian noise of the given std to exactly the mask support.
PerturbResult perturb(const Matrix& w, const PerturbationSpec& spec);

struct SpectralDeltaRow {
    Eigen::Index rows, cols;
    std::string strategy;
    double mean_spectral_delta;
    double std_spectral_delta;
    double mean_frobenius_delta;
    double std_frobenius_delta;
    int trials;
};

// For each (dimension, strategy): seeded standard-normal matrices,
// perturb, record spectral and Frobenius norm change, average over trials.
std::vector<SpectralDeltaRow> spectral_delta_study(
    const std::vector<std::pair<Eigen::Index, Eigen::Index>>& dims,
    const std::vector<PerturbationSpec>& specs, int trials, std::uint64_t master_seed);

struct AlignmentResult {
    double score;           // mean over top vectors, in [0, 1]
    int n_top;
    bool degenerate_cut;    // sigma_{n_top} == sigma_{n_top+1} within tolerance
};

// Mean squared projection of w_after's top right singular vectors onto
// the subspace spanned by w_before's top right singular vectors.
AlignmentResult alignment_score_detail(const Matrix& w_before, const Matrix& w_after,
                                       int n_top = 128);
double alignment_score(const Matrix& w_before, const Matrix& w_after, int n_top = 128);

// Numerical rank of the update matrix w_after - w_before.
int update_rank(const Matrix& w_before, const Matrix& w_after,
                double threshold_multiplier = 10.0);

struct PerturbationEvalRow {
    std::string strategy;
    double loss_unperturbed;
    double loss_perturbed;
};

// Perturb W of a trained toy net per spec and report validation loss.
std::vector<PerturbationEvalRow> perturbation_eval_toy(
    const ToyNet& net, const RegressionDataset& dataset,
    const std::vector<PerturbationSpec>& specs);

}  // namespace lift
