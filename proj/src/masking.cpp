#include "lift/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "lift/rng.hpp"

namespace lift {

Mask::Mask(Eigen::Index rows, Eigen::Index cols, std::vector<std::uint64_t> positions)
    : rows_(rows), cols_(cols), positions_(std::move(positions)) {
    if (rows_ < 1 || cols_ < 1) throw MaskError("mask shape must be positive");
    std::sort(positions_.begin(), positions_.end());
    const auto dup = std::adjacent_find(positions_.begin(), positions_.end());
    if (dup != positions_.end()) throw MaskError("duplicate mask position");
    const auto total = static_cast<std::uint64_t>(rows_) * static_cast<std::uint64_t>(cols_);
    if (!positions_.empty() && positions_.back() >= total)
        throw MaskError("mask position out of range");
}

bool Mask::contains(Eigen::Index row, Eigen::Index col) const {
    const auto pos = static_cast<std::uint64_t>(row) * static_cast<std::uint64_t>(cols_) +
                     static_cast<std::uint64_t>(col);
    return std::binary_search(positions_.begin(), positions_.end(), pos);
}

Matrix Mask::to_dense() const {
    Matrix m = Matrix::Zero(rows_, cols_);
    for (auto pos : positions_) m(row_of(pos), col_of(pos)) = 1.0;
    return m;
}

std::uint64_t resolve_budget(const BudgetSpec& spec, Eigen::Index rows, Eigen::Index cols) {
    if (rows < 1 || cols < 1) throw MaskError("resolve_budget: shape must be positive");
    const auto total = static_cast<std::uint64_t>(rows) * static_cast<std::uint64_t>(cols);
    std::uint64_t k = 0;
    if (spec.k_exact) {
        k = *spec.k_exact;
    } else if (spec.lora_rank_equivalent) {
        k = *spec.lora_rank_equivalent *
            (static_cast<std::uint64_t>(rows) + static_cast<std::uint64_t>(cols));
    } else {
        throw MaskError("resolve_budget: empty budget spec");
    }
    if (k == 0) throw MaskError("resolve_budget: zero budget");
    return std::min(k, total);
}

namespace {

// sort by score descending, row-major position breaks ties
struct ScoredPos {
    double score;
    std::uint64_t pos;
};

std::vector<std::uint64_t> top_k_positions(std::vector<ScoredPos>& entries, std::uint64_t k) {
    const auto cmp = [](const ScoredPos& a, const ScoredPos& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.pos < b.pos;
    };
    auto mid = entries.begin() + static_cast<std::ptrdiff_t>(k);
    std::nth_element(entries.begin(), mid - 1, entries.end(), cmp);
    std::sort(entries.begin(), mid, cmp);
    std::vector<std::uint64_t> out;
    out.reserve(k);
    for (auto it = entries.begin(); it != mid; ++it) out.push_back(it->pos);
    return out;
}

std::vector<ScoredPos> abs_scores(const Matrix& w) {
    std::vector<ScoredPos> entries;
    entries.reserve(static_cast<std::size_t>(w.size()));
    for (Eigen::Index i = 0; i < w.rows(); ++i)
        for (Eigen::Index j = 0; j < w.cols(); ++j)
            entries.push_back({std::abs(w(i, j)),
                               static_cast<std::uint64_t>(i) *
                                       static_cast<std::uint64_t>(w.cols()) +
                                   static_cast<std::uint64_t>(j)});
    return entries;
}

Mask structured_lift_mask(const Matrix& w, const SelectionStrategy& strategy,
                          std::uint64_t k) {
    const Matrix approx = low_rank_approx(w, strategy.rank_selection);
    const int b = strategy.block;
    if (b < 1) throw MaskError("structured selection: block size must be >= 1");
    const Eigen::Index block_rows = (w.rows() + b - 1) / b;
    const Eigen::Index block_cols = (w.cols() + b - 1) / b;

    struct Block {
        double score;
        Eigen::Index br, bc;
        std::uint64_t count;
    };
    std::vector<Block> blocks;
    blocks.reserve(static_cast<std::size_t>(block_rows * block_cols));
    for (Eigen::Index br = 0; br < block_rows; ++br) {
        for (Eigen::Index bc = 0; bc < block_cols; ++bc) {
            const Eigen::Index r0 = br * b, c0 = bc * b;
            const Eigen::Index nr = std::min<Eigen::Index>(b, w.rows() - r0);
            const Eigen::Index nc = std::min<Eigen::Index>(b, w.cols() - c0);
            blocks.push_back({approx.block(r0, c0, nr, nc).cwiseAbs().sum(), br, bc,
                              static_cast<std::uint64_t>(nr * nc)});
        }
    }
    std::sort(blocks.begin(), blocks.end(), [&](const Block& a, const Block& c) {
        if (a.score != c.score) return a.score > c.score;
        return a.br * block_cols + a.bc < c.br * block_cols + c.bc;
    });

    std::vector<std::uint64_t> positions;
    positions.reserve(k);
    std::uint64_t covered = 0;
    for (const auto& blk : blocks) {
        if (covered >= k) break;
        const Eigen::Index r0 = blk.br * b, c0 = blk.bc * b;
        const Eigen::Index nr = std::min<Eigen::Index>(b, w.rows() - r0);
        const Eigen::Index nc = std::min<Eigen::Index>(b, w.cols() - c0);
        const bool marginal = covered + blk.count > k;
        if (!marginal) {
            for (Eigen::Index i = r0; i < r0 + nr; ++i)
                for (Eigen::Index j = c0; j < c0 + nc; ++j)
                    positions.push_back(static_cast<std::uint64_t>(i) *
                                            static_cast<std::uint64_t>(w.cols()) +
                                        static_cast<std::uint64_t>(j));
            covered += blk.count;
        } else {
            // keep only the highest-|value| entries of the marginal block
            std::vector<ScoredPos> inside;
            for (Eigen::Index i = r0; i < r0 + nr; ++i)
                for (Eigen::Index j = c0; j < c0 + nc; ++j)
                    inside.push_back({std::abs(approx(i, j)),
                                      static_cast<std::uint64_t>(i) *
                                              static_cast<std::uint64_t>(w.cols()) +
                                          static_cast<std::uint64_t>(j)});
            auto kept = top_k_positions(inside, k - covered);
            positions.insert(positions.end(), kept.begin(), kept.end());
            covered = k;
        }
    }
    return Mask(w.rows(), w.cols(), std::move(positions));
}

}  // namespace

Mask top_k_abs(const Matrix& scores, std::uint64_t k) {
    const auto total = static_cast<std::uint64_t>(scores.size());
    if (k < 1 || k > total) throw MaskError("top_k_abs: k out of range");
    auto entries = abs_scores(scores);
    return Mask(scores.rows(), scores.cols(), top_k_positions(entries, k));
}

Mask select_mask(const Matrix& w, const Matrix* grad, const SelectionStrategy& strategy,
                 std::uint64_t k) {
    const auto total = static_cast<std::uint64_t>(w.size());
    if (k < 1 || k > total)
        throw MaskError("select_mask: k must be in [1, " + std::to_string(total) + "]");
    if (strategy.needs_gradient()) {
        if (grad == nullptr)
            throw MaskError("select_mask: strategy requires a gradient matrix");
        if (grad->rows() != w.rows() || grad->cols() != w.cols())
            throw MaskError("select_mask: gradient shape mismatch");
    }

    switch (strategy.kind) {
        case SelectionKind::Lift:
            return top_k_abs(low_rank_approx(w, strategy.rank_selection), k);
        case SelectionKind::WeightMagnitude:
            return top_k_abs(w, k);
        case SelectionKind::GradientMagnitude:
            return top_k_abs(*grad, k);
        case SelectionKind::MovementScore: {
            // s = -w .* g, largest scores retained (signed, not |s|)
            std::vector<ScoredPos> entries;
            entries.reserve(static_cast<std::size_t>(w.size()));
            for (Eigen::Index i = 0; i < w.rows(); ++i)
                for (Eigen::Index j = 0; j < w.cols(); ++j)
                    entries.push_back({-w(i, j) * (*grad)(i, j),
                                       static_cast<std::uint64_t>(i) *
                                               static_cast<std::uint64_t>(w.cols()) +
                                           static_cast<std::uint64_t>(j)});
            return Mask(w.rows(), w.cols(), top_k_positions(entries, k));
        }
        case SelectionKind::Random: {
            // Fisher-Yates prefix over all positions
            std::vector<std::uint64_t> idx(total);
            std::iota(idx.begin(), idx.end(), 0);
            Rng rng(strategy.seed);
            for (std::uint64_t i = 0; i < k; ++i) {
                const auto j = i + rng.next_index(total - i);
                std::swap(idx[i], idx[j]);
            }
            idx.resize(k);
            return Mask(w.rows(), w.cols(), std::move(idx));
        }
        case SelectionKind::LiftStructured:
            return structured_lift_mask(w, strategy, k);
    }
    throw MaskError("select_mask: unknown strategy");
}

double overlap_ratio(const Mask& a, const Mask& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw MaskError("overlap_ratio: shape mismatch");
    if (a.k() != b.k()) throw MaskError("overlap_ratio: budget mismatch");
    std::vector<std::uint64_t> common;
    std::set_intersection(a.positions().begin(), a.positions().end(),
                          b.positions().begin(), b.positions().end(),
                          std::back_inserter(common));
    return static_cast<double>(common.size()) / static_cast<double>(a.k());
}

}  // namespace lift
