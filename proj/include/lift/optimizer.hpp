#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lift/masking.hpp"

namespace lift {

struct OptimizerError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct AdamHyperparams {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    // Mask refresh period in steps. Values larger than total_steps never
    // trigger a refresh (fixed mask); kNever is the explicit sentinel.
    std::uint64_t update_mask_interval = 200;
    std::uint64_t total_steps = 1000;

    static constexpr std::uint64_t kNever = UINT64_MAX;

    void validate() const;
};

// Adam moments compacted to the mask: m and v hold one entry per selected
// position, in the mask's row-major iteration order.
struct SparseOptimizerState {
    Mask mask;
    Vector m;
    Vector v;
    std::uint64_t t = 0;

    explicit SparseOptimizerState(Mask mask_)
        : mask(std::move(mask_)),
          m(Vector::Zero(static_cast<Eigen::Index>(mask.k()))),
          v(Vector::Zero(static_cast<Eigen::Index>(mask.k()))) {}
};

// Gather g's entries at the mask positions, in mask order.
Vector compact(const Matrix& g, const Mask& mask);

// Scatter a compacted vector back to a dense zero-filled matrix.
Matrix scatter(const Vector& values, const Mask& mask);

// One masked AdamW step. Updates moments and the masked entries of theta
// in place; unmasked entries are untouched.
void step(SparseOptimizerState& state, Matrix& theta, const Matrix& g,
          const AdamHyperparams& hp);

// Recompute the mask and carry moments over: positions present in both
// masks keep their values, new positions start at zero.
void refresh_mask(SparseOptimizerState& state, const Matrix& theta, const Matrix* grad,
                  const SelectionStrategy& strategy, std::uint64_t k);

struct MetricRecord {
    std::uint64_t step;
    std::string name;
    double value;
};

struct MetricsLog {
    std::vector<MetricRecord> records;

    void add(std::uint64_t step, std::string name, double value) {
        records.push_back({step, std::move(name), value});
    }
};

struct TrainableParam {
    std::string name;
    Matrix theta;
    bool trainable = true;
};

// Gradients for each parameter at the given values, plus the loss.
using LossProvider = std::function<double(const std::vector<TrainableParam>&,
                                          std::vector<Matrix>& grads_out)>;

struct TrainResult {
    std::vector<TrainableParam> params;
    MetricsLog log;
};

// Called after each optimizer step; return false to stop training early.
using StepObserver =
    std::function<bool(std::uint64_t t, const std::vector<TrainableParam>& params)>;

// Algorithm: per trainable matrix, keep a sparse Adam state; every
// update_mask_interval steps recompute its mask from the current weights
// (and latest gradient for gradient-based strategies) with moment
// carry-over, then take a masked step.
TrainResult train_loop(std::vector<TrainableParam> params, const LossProvider& loss,
                       const SelectionStrategy& strategy, const BudgetSpec& budget,
                       const AdamHyperparams& hp, const StepObserver& observer = {});

}  // namespace lift
