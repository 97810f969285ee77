#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "lift/optimizer.hpp"

namespace lift {

struct ToyModelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Activation { Relu, Tanh };

// Two-layer regression network f(X) = act(X W) a.
struct ToyNet {
    Matrix w;  // d x h
    Matrix a;  // h x 1
    Activation activation = Activation::Relu;

    static ToyNet random_init(Eigen::Index d, Eigen::Index h, std::uint64_t seed,
                              Activation act = Activation::Relu);
};

struct RegressionDataset {
    Matrix x;  // n x d
    Matrix y;  // n x 1
    std::vector<Eigen::Index> train_rows;
    std::vector<Eigen::Index> val_rows;

    Matrix x_rows(const std::vector<Eigen::Index>& rows) const;
    Matrix y_rows(const std::vector<Eigen::Index>& rows) const;
};

struct EarlyStopConfig {
    std::uint64_t patience = 20;
    double min_delta = 0.0;
};

// Y = sum(X[:, 0:32]) + 0.1 * sum(sin(X[:, 32:64])) per row.
RegressionDataset make_pretrain_dataset(Eigen::Index n, Eigen::Index d,
                                        std::uint64_t seed);

// Y = 0.2 * x64 * x65 * x66 + 0.1 * sin(x67 * x68) per row,
// with an 80/20 train/validation split under the same seed.
RegressionDataset make_finetune_dataset(Eigen::Index n, Eigen::Index d,
                                        std::uint64_t seed);

Matrix forward(const ToyNet& net, const Matrix& x);

struct Gradients {
    Matrix dw;  // d x h
    Matrix da;  // h x 1
    double loss;
};

// MSE loss and analytic gradients; ReLU subgradient at 0 is 0.
Gradients backward(const ToyNet& net, const Matrix& x, const Matrix& y);

double mse_loss(const ToyNet& net, const Matrix& x, const Matrix& y);

struct MethodSpec {
    std::string name;
    bool full_finetune = false;  // dense AdamW on all parameters
    SelectionStrategy strategy{};
    BudgetSpec budget{};
};

struct PipelineConfig {
    Eigen::Index d = 512;
    Eigen::Index h = 128;
    Eigen::Index n_pre = 5000;
    Eigen::Index n_ft = 100;
    std::uint64_t seed = 0;
    Activation activation = Activation::Relu;

    AdamHyperparams pretrain_hp{};
    AdamHyperparams finetune_hp{};
    EarlyStopConfig early_stop{};

    std::vector<MethodSpec> methods;
};

struct MethodRun {
    std::string name;
    MetricsLog log;           // per-epoch train/val loss, grad norm, spectral norm
    double best_val_loss = 0;
    double final_val_loss = 0;
    double final_spectral_norm_w = 0;
    ToyNet net;
};

struct PipelineResult {
    ToyNet pretrained;
    double pretrain_val_loss = 0;
    std::vector<MethodRun> runs;
};

// Pre-train with dense AdamW on the pre-train set, then fine-tune one
// clone per method on the fine-tune set, logging the toy figure panels.
PipelineResult run_pipeline(const PipelineConfig& config);

}  // namespace lift
