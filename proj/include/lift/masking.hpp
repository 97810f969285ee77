#pragma once

#include <cstdint>
#include <algorithm>
#include <optional>
#include <stdexcept>
#include <vector>

#include "lift/linalg.hpp"

namespace lift {

struct MaskError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Binary fine-tuning mask over one matrix. Selected positions are kept
// sorted by row-major position; this order is the layout contract for
// compacted optimizer state.
class Mask {
public:
    Mask(Eigen::Index rows, Eigen::Index cols, std::vector<std::uint64_t> positions);

    Eigen::Index rows() const { return rows_; }
    Eigen::Index cols() const { return cols_; }
    std::size_t k() const { return positions_.size(); }

    // Row-major positions, sorted ascending.
    const std::vector<std::uint64_t>& positions() const { return positions_; }

    Eigen::Index row_of(std::uint64_t pos) const {
        return static_cast<Eigen::Index>(pos / static_cast<std::uint64_t>(cols_));
    }
    Eigen::Index col_of(std::uint64_t pos) const {
        return static_cast<Eigen::Index>(pos % static_cast<std::uint64_t>(cols_));
    }

    bool contains(Eigen::Index row, Eigen::Index col) const;

    Matrix to_dense() const;  // 0/1 matrix

    friend bool operator==(const Mask&, const Mask&) = default;

private:
    Eigen::Index rows_, cols_;
    std::vector<std::uint64_t> positions_;
};

enum class SelectionKind {
    Lift,
    WeightMagnitude,
    GradientMagnitude,
    MovementScore,
    Random,
    LiftStructured,
};

struct SelectionStrategy {
    SelectionKind kind = SelectionKind::Lift;
    RankSelection rank_selection{};  // Lift / LiftStructured
    std::uint64_t seed = 0;          // Random
    int block = 4;                   // LiftStructured

    static SelectionStrategy lift(RankSelection rs) {
        return {SelectionKind::Lift, rs, 0, 4};
    }
    static SelectionStrategy weight_magnitude() {
        return {SelectionKind::WeightMagnitude, {}, 0, 4};
    }
    static SelectionStrategy gradient_magnitude() {
        return {SelectionKind::GradientMagnitude, {}, 0, 4};
    }
    static SelectionStrategy movement_score() {
        return {SelectionKind::MovementScore, {}, 0, 4};
    }
    static SelectionStrategy random(std::uint64_t seed) {
        return {SelectionKind::Random, {}, seed, 4};
    }
    static SelectionStrategy lift_structured(RankSelection rs, int block = 4) {
        return {SelectionKind::LiftStructured, rs, 0, block};
    }

    bool needs_gradient() const {
        return kind == SelectionKind::GradientMagnitude ||
               kind == SelectionKind::MovementScore;
    }

    // Rank capped at min(rows, cols) so one strategy can drive matrices of
    // different shapes (e.g. a network's weight matrix and its head vector).
    SelectionStrategy clamped_for(Eigen::Index rows, Eigen::Index cols) const {
        SelectionStrategy s = *this;
        const int p = static_cast<int>(std::min(rows, cols));
        s.rank_selection.r = std::min(s.rank_selection.r, p);
        if (s.rank_selection.variant == RankVariant::Hybrid && s.rank_selection.r < 2)
            s.rank_selection.variant = RankVariant::Largest;
        return s;
    }
};

// Trainable-parameter budget: either an exact count or the parameter
// count of a rank-rho LoRA adapter, k = rho * (m + n).
struct BudgetSpec {
    std::optional<std::uint64_t> k_exact;
    std::optional<std::uint64_t> lora_rank_equivalent;

    static BudgetSpec exact(std::uint64_t k) { return {k, std::nullopt}; }
    static BudgetSpec lora_rank(std::uint64_t rho) { return {std::nullopt, rho}; }
};

std::uint64_t resolve_budget(const BudgetSpec& spec, Eigen::Index rows, Eigen::Index cols);

Mask select_mask(const Matrix& w, const Matrix* grad, const SelectionStrategy& strategy,
                 std::uint64_t k);

double overlap_ratio(const Mask& a, const Mask& b);

// Top-k |entries| of an explicit score matrix; ties break toward the
// lower row-major position. Shared by several strategies and by tests.
Mask top_k_abs(const Matrix& scores, std::uint64_t k);

}  // namespace lift
