#include "lift/optimizer.hpp"

#include <algorithm>
#include <cmath>

namespace lift {

void AdamHyperparams::validate() const {
    if (lr <= 0) throw OptimizerError("lr must be > 0");
    if (beta1 < 0 || beta1 >= 1) throw OptimizerError("beta1 must be in [0, 1)");
    if (beta2 < 0 || beta2 >= 1) throw OptimizerError("beta2 must be in [0, 1)");
    if (eps <= 0) throw OptimizerError("eps must be > 0");
    if (weight_decay < 0) throw OptimizerError("weight_decay must be >= 0");
    if (update_mask_interval == 0)
        throw OptimizerError("update_mask_interval must be >= 1");
}

Vector compact(const Matrix& g, const Mask& mask) {
    if (g.rows() != mask.rows() || g.cols() != mask.cols())
        throw OptimizerError("compact: shape mismatch");
    Vector out(static_cast<Eigen::Index>(mask.k()));
    Eigen::Index i = 0;
    for (auto pos : mask.positions()) out(i++) = g(mask.row_of(pos), mask.col_of(pos));
    return out;
}

Matrix scatter(const Vector& values, const Mask& mask) {
    if (values.size() != static_cast<Eigen::Index>(mask.k()))
        throw OptimizerError("scatter: length mismatch");
    Matrix out = Matrix::Zero(mask.rows(), mask.cols());
    Eigen::Index i = 0;
    for (auto pos : mask.positions()) out(mask.row_of(pos), mask.col_of(pos)) = values(i++);
    return out;
}

void step(SparseOptimizerState& state, Matrix& theta, const Matrix& g,
          const AdamHyperparams& hp) {
    const Mask& mask = state.mask;
    if (theta.rows() != mask.rows() || theta.cols() != mask.cols() ||
        g.rows() != mask.rows() || g.cols() != mask.cols())
        throw OptimizerError("step: shape mismatch");

    for (auto pos : mask.positions()) {
        if (!std::isfinite(g(mask.row_of(pos), mask.col_of(pos))))
            throw OptimizerError("step: non-finite gradient at (" +
                                 std::to_string(mask.row_of(pos)) + ", " +
                                 std::to_string(mask.col_of(pos)) + ")");
    }

    state.t += 1;
    const double t = static_cast<double>(state.t);
    const double bc1 = 1.0 - std::pow(hp.beta1, t);
    const double bc2 = 1.0 - std::pow(hp.beta2, t);

    Eigen::Index i = 0;
    for (auto pos : mask.positions()) {
        const Eigen::Index r = mask.row_of(pos), c = mask.col_of(pos);
        const double grad = g(r, c);
        state.m(i) = hp.beta1 * state.m(i) + (1.0 - hp.beta1) * grad;
        state.v(i) = hp.beta2 * state.v(i) + (1.0 - hp.beta2) * grad * grad;
        const double m_hat = state.m(i) / bc1;
        const double v_hat = state.v(i) / bc2;
        double update = hp.lr * m_hat / (std::sqrt(v_hat) + hp.eps);
        if (hp.weight_decay > 0) update += hp.lr * hp.weight_decay * theta(r, c);
        theta(r, c) -= update;
        ++i;
    }
}

void refresh_mask(SparseOptimizerState& state, const Matrix& theta, const Matrix* grad,
                  const SelectionStrategy& strategy, std::uint64_t k) {
    Mask next = select_mask(theta, grad, strategy, k);
    Vector m_next = Vector::Zero(static_cast<Eigen::Index>(next.k()));
    Vector v_next = Vector::Zero(static_cast<Eigen::Index>(next.k()));

    // both position lists are sorted; carry intersecting entries over
    const auto& old_pos = state.mask.positions();
    const auto& new_pos = next.positions();
    std::size_t io = 0, in = 0;
    while (io < old_pos.size() && in < new_pos.size()) {
        if (old_pos[io] < new_pos[in]) {
            ++io;
        } else if (new_pos[in] < old_pos[io]) {
            ++in;
        } else {
            m_next(static_cast<Eigen::Index>(in)) = state.m(static_cast<Eigen::Index>(io));
            v_next(static_cast<Eigen::Index>(in)) = state.v(static_cast<Eigen::Index>(io));
            ++io;
            ++in;
        }
    }
    state.mask = std::move(next);
    state.m = std::move(m_next);
    state.v = std::move(v_next);
}

TrainResult train_loop(std::vector<TrainableParam> params, const LossProvider& loss,
                       const SelectionStrategy& strategy, const BudgetSpec& budget,
                       const AdamHyperparams& hp, const StepObserver& observer) {
    hp.validate();

    std::vector<SparseOptimizerState> states;
    std::vector<std::uint64_t> budgets;
    for (const auto& p : params) {
        const auto k = resolve_budget(budget, p.theta.rows(), p.theta.cols());
        budgets.push_back(k);
        // gradient-based strategies need a gradient for the initial mask;
        // fall back to weight magnitude on the pre-update weights there
        if (p.trainable && !strategy.needs_gradient()) {
            states.emplace_back(select_mask(
                p.theta, nullptr,
                strategy.clamped_for(p.theta.rows(), p.theta.cols()), k));
        } else {
            states.emplace_back(Mask(p.theta.rows(), p.theta.cols(), {}));
        }
    }

    MetricsLog log;
    std::vector<Matrix> grads;
    bool have_initial_masks = !strategy.needs_gradient();

    for (std::uint64_t t = 1; t <= hp.total_steps; ++t) {
        grads.clear();
        const double loss_value = loss(params, grads);
        if (grads.size() != params.size())
            throw OptimizerError("train_loop: loss provider returned wrong gradient count");

        if (!have_initial_masks) {
            for (std::size_t i = 0; i < params.size(); ++i) {
                if (!params[i].trainable) continue;
                const auto& th = params[i].theta;
                states[i] = SparseOptimizerState(select_mask(
                    th, &grads[i], strategy.clamped_for(th.rows(), th.cols()),
                    budgets[i]));
            }
            have_initial_masks = true;
        } else if (hp.update_mask_interval != AdamHyperparams::kNever &&
                   t % hp.update_mask_interval == 0) {
            for (std::size_t i = 0; i < params.size(); ++i) {
                if (!params[i].trainable) continue;
                const auto& th = params[i].theta;
                refresh_mask(states[i], th, &grads[i],
                             strategy.clamped_for(th.rows(), th.cols()), budgets[i]);
            }
        }

        double grad_sq = 0.0, update_sq = 0.0;
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (!params[i].trainable) continue;
            grad_sq += grads[i].squaredNorm();
            const Matrix before = params[i].theta;
            // the sparse states are stepped under one global step counter,
            // so t advances uniformly across matrices
            step(states[i], params[i].theta, grads[i], hp);
            update_sq += (params[i].theta - before).squaredNorm();
        }

        log.add(t, "loss", loss_value);
        log.add(t, "grad_norm", std::sqrt(grad_sq));
        log.add(t, "update_norm", std::sqrt(update_sq));

        if (observer && !observer(t, params)) break;
    }

    return TrainResult{std::move(params), std::move(log)};
}

}  // namespace lift
