#include "lift/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "lift/rng.hpp"

namespace lift {

void check_finite(const Matrix& w, const char* what) {
    if (!w.allFinite())
        throw LinalgError(std::string(what) + ": non-finite entry");
}

SvdFactors svd(const Matrix& w) {
    check_finite(w, "svd input");
    // BDCSVD falls back to Jacobi internally for small matrices.
    Eigen::BDCSVD<Matrix> solver(w, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (solver.info() != Eigen::Success)
        throw LinalgError("svd: decomposition did not converge");
    return SvdFactors{solver.matrixU(), solver.singularValues(), solver.matrixV()};
}

std::vector<int> selected_triplets(const RankSelection& sel, int p) {
    if (sel.r < 1 || sel.r > p)
        throw LinalgError("rank selection r out of range [1, " + std::to_string(p) + "]");
    std::vector<int> keep;
    keep.reserve(static_cast<std::size_t>(sel.r));
    switch (sel.variant) {
        case RankVariant::Largest:
            for (int i = 0; i < sel.r; ++i) keep.push_back(i);
            break;
        case RankVariant::Smallest:
            for (int i = p - sel.r; i < p; ++i) keep.push_back(i);
            break;
        case RankVariant::Random: {
            // Fisher-Yates prefix on [0, p)
            std::vector<int> idx(static_cast<std::size_t>(p));
            std::iota(idx.begin(), idx.end(), 0);
            Rng rng(sel.seed);
            for (int i = 0; i < sel.r; ++i) {
                const auto j = i + static_cast<int>(rng.next_index(
                                       static_cast<std::uint64_t>(p - i)));
                std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
            }
            keep.assign(idx.begin(), idx.begin() + sel.r);
            std::sort(keep.begin(), keep.end());
            break;
        }
        case RankVariant::Hybrid: {
            if (sel.r < 2) throw LinalgError("hybrid rank selection needs r >= 2");
            const int n_large = (sel.r + 1) / 2;
            const int n_small = sel.r / 2;
            for (int i = 0; i < n_large; ++i) keep.push_back(i);
            for (int i = p - n_small; i < p; ++i) keep.push_back(i);
            std::sort(keep.begin(), keep.end());
            keep.erase(std::unique(keep.begin(), keep.end()), keep.end());
            break;
        }
    }
    return keep;
}

Matrix low_rank_approx(const Matrix& w, const RankSelection& sel) {
    const auto f = svd(w);
    const int p = static_cast<int>(f.singular_values.size());
    const auto keep = selected_triplets(sel, p);
    Matrix out = Matrix::Zero(w.rows(), w.cols());
    for (int i : keep)
        out.noalias() += f.singular_values(i) * f.u.col(i) * f.v.col(i).transpose();
    return out;
}

double spectral_norm(const Matrix& w, double tol, int max_iter) {
    if (tol <= 0) throw LinalgError("spectral_norm: tol must be > 0");
    check_finite(w, "spectral_norm input");
    if (w.size() == 0 || w.isZero(0.0)) return 0.0;
    if (std::min(w.rows(), w.cols()) <= 128)
        return svd(w).singular_values(0);

    // Power iteration on the Gram matrix, applied as two mat-vecs per step.
    const Eigen::Index n = w.cols();
    Vector x = Vector::Ones(n) / std::sqrt(static_cast<double>(n));
    double sigma = 0.0;
    bool restarted = false;
    for (int it = 0; it < max_iter; ++it) {
        Vector y = w.transpose() * (w * x);
        const double norm = y.norm();
        if (norm == 0.0) {
            if (restarted) return 0.0;
            // deterministic all-ones start landed in the null space
            Rng rng(0x5eed);
            x = rng.gaussian_matrix(n, 1).col(0).normalized();
            restarted = true;
            continue;
        }
        const double sigma_new = std::sqrt(norm);
        x = y / norm;
        if (std::abs(sigma_new - sigma) <= tol * std::max(1.0, sigma_new))
            return (w * x).norm();
        sigma = sigma_new;
    }
    throw LinalgError("spectral_norm: no convergence after " +
                      std::to_string(max_iter) + " iterations");
}

double frobenius_norm(const Matrix& w) { return w.norm(); }

int numerical_rank(const Matrix& w, double threshold_multiplier) {
    if (threshold_multiplier < 1.0)
        throw LinalgError("numerical_rank: threshold multiplier must be >= 1");
    const auto sv = svd(w).singular_values;
    if (sv.size() == 0) return 0;
    const double eps = std::numeric_limits<double>::epsilon();
    const double tau = threshold_multiplier *
                       static_cast<double>(std::max(w.rows(), w.cols())) * sv(0) * eps;
    int rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv(i) > tau) ++rank;
    return rank;
}

}  // namespace lift
