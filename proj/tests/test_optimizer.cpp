#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "lift/optimizer.hpp"
#include "lift/rng.hpp"

using namespace lift;

namespace {

// Independent dense Adam(W) reference. Runs full Adam over every entry;
// the caller zeroes unmasked gradients to emulate the masked run.
struct DenseAdamOracle {
    Matrix m, v;
    std::uint64_t t = 0;

    explicit DenseAdamOracle(Eigen::Index rows, Eigen::Index cols)
        : m(Matrix::Zero(rows, cols)), v(Matrix::Zero(rows, cols)) {}

    void step(Matrix& theta, const Matrix& g, const AdamHyperparams& hp) {
        t += 1;
        const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(t));
        for (Eigen::Index i = 0; i < theta.rows(); ++i) {
            for (Eigen::Index j = 0; j < theta.cols(); ++j) {
                m(i, j) = hp.beta1 * m(i, j) + (1.0 - hp.beta1) * g(i, j);
                v(i, j) = hp.beta2 * v(i, j) + (1.0 - hp.beta2) * g(i, j) * g(i, j);
                const double m_hat = m(i, j) / bc1;
                const double v_hat = v(i, j) / bc2;
                double update = hp.lr * m_hat / (std::sqrt(v_hat) + hp.eps);
                if (hp.weight_decay > 0) update += hp.lr * hp.weight_decay * theta(i, j);
                theta(i, j) -= update;
            }
        }
    }
};

Mask random_mask(Rng& rng, Eigen::Index rows, Eigen::Index cols, std::uint64_t k) {
    std::vector<std::uint64_t> all(static_cast<std::size_t>(rows * cols));
    std::iota(all.begin(), all.end(), 0);
    for (std::uint64_t i = 0; i < k; ++i)
        std::swap(all[i], all[i + rng.next_index(all.size() - i)]);
    all.resize(k);
    return Mask(rows, cols, std::move(all));
}

}  // namespace

TEST_CASE("compact gathers in mask order") {
    Matrix g(2, 2);
    g << 1, 2, 3, 4;
    const Vector out = compact(g, Mask(2, 2, {1, 2}));
    CHECK(out(0) == 2);
    CHECK(out(1) == 3);

    const Vector full = compact(g, Mask(2, 2, {0, 1, 2, 3}));
    for (int i = 0; i < 4; ++i) CHECK(full(i) == i + 1);

    CHECK_THROWS_AS(compact(g, Mask(3, 2, {0})), OptimizerError);
}

TEST_CASE("compact matches dense-mask oracle") {
    Rng rng(41);
    const Matrix g = rng.gaussian_matrix(8, 8);
    const Mask mask = random_mask(rng, 8, 8, 10);

    // oracle: elementwise multiply by the dense 0/1 mask, then collect
    // selected positions in row-major order
    const Matrix masked = g.cwiseProduct(mask.to_dense());
    Vector expected(10);
    Eigen::Index n = 0;
    for (Eigen::Index i = 0; i < 8; ++i)
        for (Eigen::Index j = 0; j < 8; ++j)
            if (mask.contains(i, j)) expected(n++) = masked(i, j);
    CHECK((compact(g, mask) - expected).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("scatter is the inverse of compact on the mask support") {
    Rng rng(42);
    const Matrix g = rng.gaussian_matrix(6, 7);
    const Mask mask = random_mask(rng, 6, 7, 12);
    const Matrix dense = scatter(compact(g, mask), mask);
    CHECK((dense - g.cwiseProduct(mask.to_dense())).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("first step without momentum reduces to the bias-free formula") {
    AdamHyperparams hp;
    hp.lr = 0.1;
    hp.beta1 = 0.0;
    hp.beta2 = 0.0;
    hp.weight_decay = 0.0;

    Matrix theta = Matrix::Zero(1, 1);
    Matrix g(1, 1);
    g << 4.0;
    SparseOptimizerState state(Mask(1, 1, {0}));
    step(state, theta, g, hp);
    CHECK(theta(0, 0) == doctest::Approx(-0.1 * 4.0 / (4.0 + hp.eps)).epsilon(1e-14));
}

TEST_CASE("zero gradient leaves parameters unchanged") {
    AdamHyperparams hp;
    Matrix theta = Matrix::Ones(3, 3);
    const Matrix before = theta;
    SparseOptimizerState state(Mask(3, 3, {0, 4, 8}));
    step(state, theta, Matrix::Zero(3, 3), hp);
    CHECK((theta - before).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("bias correction: first-step m_hat equals the gradient") {
    AdamHyperparams hp;
    hp.beta1 = 0.9;
    Matrix theta = Matrix::Zero(1, 1);
    Matrix g(1, 1);
    g << 2.5;
    SparseOptimizerState state(Mask(1, 1, {0}));
    step(state, theta, g, hp);
    CHECK(state.m(0) / (1.0 - hp.beta1) == doctest::Approx(2.5).epsilon(1e-15));
}

TEST_CASE("NaN gradient is reported with its position") {
    AdamHyperparams hp;
    Matrix theta = Matrix::Zero(2, 2);
    Matrix g = Matrix::Zero(2, 2);
    g(1, 0) = std::nan("");
    SparseOptimizerState state(Mask(2, 2, {0, 2}));
    CHECK_THROWS_WITH_AS(step(state, theta, g, hp),
                         "step: non-finite gradient at (1, 0)", OptimizerError);
}

TEST_CASE("masked trajectory matches the dense Adam oracle over 50 steps") {
    Rng rng(43);
    const Mask mask = random_mask(rng, 6, 6, 8);
    const Matrix theta_star = rng.gaussian_matrix(6, 6);
    Matrix theta = rng.gaussian_matrix(6, 6);
    Matrix theta_dense = theta;
    const Matrix initial = theta;

    AdamHyperparams hp;
    hp.lr = 1e-2;
    hp.weight_decay = 0.01;
    SparseOptimizerState state(mask);
    DenseAdamOracle oracle(6, 6);

    for (int t = 0; t < 50; ++t) {
        const Matrix g = theta - theta_star;  // quadratic loss gradient
        step(state, theta, g, hp);

        const Matrix g_dense = (theta_dense - theta_star).cwiseProduct(mask.to_dense());
        oracle.step(theta_dense, g_dense, hp);
        // the oracle's unmasked entries never move because their gradient
        // and initial moments are zero and decay only acts through lr*wd*theta
        for (Eigen::Index i = 0; i < 6; ++i)
            for (Eigen::Index j = 0; j < 6; ++j)
                if (!mask.contains(i, j)) theta_dense(i, j) = initial(i, j);
    }

    for (Eigen::Index i = 0; i < 6; ++i) {
        for (Eigen::Index j = 0; j < 6; ++j) {
            if (mask.contains(i, j)) {
                CHECK(std::abs(theta(i, j) - theta_dense(i, j)) < 1e-12);
            } else {
                CHECK(theta(i, j) == initial(i, j));  // bit-identical
            }
        }
    }
}

TEST_CASE("refresh_mask carry-over") {
    Rng rng(44);
    const Matrix theta = rng.gaussian_matrix(10, 10);

    SUBCASE("identical new mask is a fixed point") {
        SparseOptimizerState state(
            select_mask(theta, nullptr, SelectionStrategy::weight_magnitude(), 12));
        state.m = rng.gaussian_matrix(12, 1).col(0);
        state.v = state.m.cwiseAbs();
        const Vector m_before = state.m, v_before = state.v;
        refresh_mask(state, theta, nullptr, SelectionStrategy::weight_magnitude(), 12);
        CHECK((state.m - m_before).cwiseAbs().maxCoeff() == 0.0);
        CHECK((state.v - v_before).cwiseAbs().maxCoeff() == 0.0);
    }

    SUBCASE("disjoint new mask resets moments") {
        // old mask holds the largest entries, new mask the random strategy;
        // force disjointness by building masks on disjoint halves
        SparseOptimizerState state(Mask(10, 10, {0, 1, 2}));
        state.m = Vector::Ones(3);
        state.v = Vector::Ones(3);
        Matrix scores = Matrix::Zero(10, 10);
        scores(5, 5) = 3;
        scores(6, 6) = 2;
        scores(7, 7) = 1;
        refresh_mask(state, scores, nullptr, SelectionStrategy::weight_magnitude(), 3);
        CHECK(state.m.cwiseAbs().maxCoeff() == 0.0);
        CHECK(state.v.cwiseAbs().maxCoeff() == 0.0);
    }

    SUBCASE("partial overlap matches the dense scatter/gather oracle") {
        const Mask old_mask = random_mask(rng, 10, 10, 12);
        SparseOptimizerState state(old_mask);
        state.m = rng.gaussian_matrix(12, 1).col(0);
        state.v = state.m.cwiseAbs();
        const Matrix m_dense = scatter(state.m, old_mask);
        const Matrix v_dense = scatter(state.v, old_mask);

        refresh_mask(state, theta, nullptr, SelectionStrategy::weight_magnitude(), 12);
        const Mask& new_mask = state.mask;

        CHECK((state.m - compact(m_dense, new_mask)).cwiseAbs().maxCoeff() == 0.0);
        CHECK((state.v - compact(v_dense, new_mask)).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("train_loop with T = 0 is a no-op") {
    AdamHyperparams hp;
    hp.total_steps = 0;
    std::vector<TrainableParam> params;
    params.push_back({"w", Matrix::Ones(3, 3), true});
    const auto result = train_loop(
        params,
        [](const std::vector<TrainableParam>& ps, std::vector<Matrix>& grads) {
            grads.push_back(Matrix::Zero(ps[0].theta.rows(), ps[0].theta.cols()));
            return 0.0;
        },
        SelectionStrategy::weight_magnitude(), BudgetSpec::exact(2), hp);
    CHECK((result.params[0].theta - Matrix::Ones(3, 3)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(result.log.records.empty());
}

TEST_CASE("full-mask train_loop bit-matches the dense AdamW oracle for 100 steps") {
    Rng rng(45);
    const Matrix theta_star = rng.gaussian_matrix(5, 4);
    const Matrix theta0 = rng.gaussian_matrix(5, 4);

    AdamHyperparams hp;
    hp.lr = 5e-3;
    hp.weight_decay = 0.02;
    hp.total_steps = 100;
    hp.update_mask_interval = AdamHyperparams::kNever;

    std::vector<TrainableParam> params;
    params.push_back({"w", theta0, true});
    const auto result = train_loop(
        params,
        [&](const std::vector<TrainableParam>& ps, std::vector<Matrix>& grads) {
            grads.push_back(ps[0].theta - theta_star);
            return 0.5 * (ps[0].theta - theta_star).squaredNorm();
        },
        SelectionStrategy::weight_magnitude(), BudgetSpec::exact(20), hp);

    Matrix theta_dense = theta0;
    DenseAdamOracle oracle(5, 4);
    for (int t = 0; t < 100; ++t) oracle.step(theta_dense, theta_dense - theta_star, hp);

    CHECK((result.params[0].theta - theta_dense).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("masked quadratic converges to the optimum on the mask support") {
    Rng rng(46);
    const Matrix theta_star = rng.gaussian_matrix(6, 6);
    const Matrix theta0 = rng.gaussian_matrix(6, 6);
    const Mask mask = random_mask(rng, 6, 6, 9);

    AdamHyperparams hp;
    hp.lr = 1e-2;
    hp.total_steps = 2000;
    hp.update_mask_interval = AdamHyperparams::kNever;

    SparseOptimizerState state(mask);
    Matrix theta = theta0;
    for (std::uint64_t t = 0; t < hp.total_steps; ++t) {
        const Matrix g = (theta - theta_star).cwiseProduct(mask.to_dense());
        step(state, theta, g, hp);
    }
    for (Eigen::Index i = 0; i < 6; ++i) {
        for (Eigen::Index j = 0; j < 6; ++j) {
            if (mask.contains(i, j)) {
                CHECK(std::abs(theta(i, j) - theta_star(i, j)) < 1e-6);
            } else {
                CHECK(theta(i, j) == theta0(i, j));
            }
        }
    }
}

TEST_CASE("frozen complement across refreshes") {
    Rng rng(47);
    const Matrix theta_star = rng.gaussian_matrix(8, 8);
    const Matrix theta0 = rng.gaussian_matrix(8, 8);

    AdamHyperparams hp;
    hp.lr = 1e-2;
    hp.total_steps = 120;
    hp.update_mask_interval = 25;

    std::vector<TrainableParam> params;
    params.push_back({"w", theta0, true});

    // track every position that was ever in an active mask
    std::vector<bool> ever_masked(64, false);
    Matrix last = theta0;
    const auto observer = [&](std::uint64_t, const std::vector<TrainableParam>& ps) {
        for (Eigen::Index i = 0; i < 8; ++i)
            for (Eigen::Index j = 0; j < 8; ++j)
                if (ps[0].theta(i, j) != last(i, j))
                    ever_masked[static_cast<std::size_t>(i * 8 + j)] = true;
        last = ps[0].theta;
        return true;
    };

    const auto result = train_loop(
        params,
        [&](const std::vector<TrainableParam>& ps, std::vector<Matrix>& grads) {
            grads.push_back(ps[0].theta - theta_star);
            return 0.5 * (ps[0].theta - theta_star).squaredNorm();
        },
        SelectionStrategy::weight_magnitude(), BudgetSpec::exact(10), hp, observer);

    int untouched = 0;
    for (Eigen::Index i = 0; i < 8; ++i) {
        for (Eigen::Index j = 0; j < 8; ++j) {
            if (!ever_masked[static_cast<std::size_t>(i * 8 + j)]) {
                CHECK(result.params[0].theta(i, j) == theta0(i, j));
                ++untouched;
            }
        }
    }
    CHECK(untouched > 0);  // the budget leaves most entries frozen
}

TEST_CASE("hyperparameter validation") {
    AdamHyperparams hp;
    hp.beta1 = 1.0;
    CHECK_THROWS_AS(hp.validate(), OptimizerError);
    hp = {};
    hp.update_mask_interval = 0;
    CHECK_THROWS_AS(hp.validate(), OptimizerError);
    hp = {};
    hp.eps = 0.0;
    CHECK_THROWS_AS(hp.validate(), OptimizerError);
}
