#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace lift {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct LinalgError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thin SVD of a real matrix: w = u * diag(singular_values) * v^T with
// p = min(rows, cols) columns in u and v, singular values non-increasing.
struct SvdFactors {
    Matrix u;
    Vector singular_values;
    Matrix v;

    Matrix reconstruct() const {
        return u * singular_values.asDiagonal() * v.transpose();
    }
};

enum class RankVariant { Largest, Smallest, Random, Hybrid };

// Which singular triplets a rank reduction keeps.
struct RankSelection {
    RankVariant variant = RankVariant::Largest;
    int r = 1;
    std::uint64_t seed = 0;  // used by Random only

    static RankSelection largest(int r) { return {RankVariant::Largest, r, 0}; }
    static RankSelection smallest(int r) { return {RankVariant::Smallest, r, 0}; }
    static RankSelection random(int r, std::uint64_t seed) {
        return {RankVariant::Random, r, seed};
    }
    static RankSelection hybrid(int r) { return {RankVariant::Hybrid, r, 0}; }
};

void check_finite(const Matrix& w, const char* what);

SvdFactors svd(const Matrix& w);

// Indices (into the non-increasing singular value sequence) kept by a
// selection, sorted ascending. Ties break toward the lower index.
std::vector<int> selected_triplets(const RankSelection& sel, int p);

Matrix low_rank_approx(const Matrix& w, const RankSelection& sel);

// Largest singular value. Power iteration on w^T w for large matrices,
// direct SVD below a size cutoff. Throws on non-convergence.
double spectral_norm(const Matrix& w, double tol = 1e-10, int max_iter = 10000);

double frobenius_norm(const Matrix& w);

// Number of singular values above threshold_multiplier * max(m,n) * sigma_max * eps.
int numerical_rank(const Matrix& w, double threshold_multiplier = 10.0);

}  // namespace lift
