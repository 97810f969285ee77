#include "lift/toymodel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "lift/rng.hpp"

namespace lift {

namespace {

Matrix apply_activation(const Matrix& z, Activation act) {
    if (act == Activation::Relu) return z.cwiseMax(0.0);
    return z.array().tanh().matrix();
}

Matrix activation_derivative(const Matrix& z, Activation act) {
    if (act == Activation::Relu)
        return (z.array() > 0.0).cast<double>().matrix();  // subgradient 0 at 0
    return (1.0 - z.array().tanh().square()).matrix();
}

}  // namespace

ToyNet ToyNet::random_init(Eigen::Index d, Eigen::Index h, std::uint64_t seed,
                           Activation act) {
    Rng rng_w(sub_seed(seed, "toynet.w"));
    Rng rng_a(sub_seed(seed, "toynet.a"));
    ToyNet net;
    net.w = rng_w.gaussian_matrix(d, h) * std::sqrt(2.0 / static_cast<double>(d));
    net.a = rng_a.gaussian_matrix(h, 1) * std::sqrt(1.0 / static_cast<double>(h));
    net.activation = act;
    return net;
}

Matrix RegressionDataset::x_rows(const std::vector<Eigen::Index>& rows) const {
    Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
    return out;
}

Matrix RegressionDataset::y_rows(const std::vector<Eigen::Index>& rows) const {
    Matrix out(static_cast<Eigen::Index>(rows.size()), 1);
    for (std::size_t i = 0; i < rows.size(); ++i)
        out(static_cast<Eigen::Index>(i), 0) = y(rows[i], 0);
    return out;
}

RegressionDataset make_pretrain_dataset(Eigen::Index n, Eigen::Index d,
                                        std::uint64_t seed) {
    if (d < 64) throw ToyModelError("pretrain dataset needs d >= 64");
    Rng rng(sub_seed(seed, "dataset.pretrain"));
    RegressionDataset ds;
    ds.x = rng.gaussian_matrix(n, d);
    ds.y.resize(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        double v = ds.x.row(i).segment(0, 32).sum();
        v += 0.1 * ds.x.row(i).segment(32, 32).array().sin().sum();
        ds.y(i, 0) = v;
    }
    // 90/10 split for early stopping during pre-training
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    Rng split_rng(sub_seed(seed, "dataset.pretrain.split"));
    for (std::size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[split_rng.next_index(i)]);
    const auto n_train = static_cast<std::size_t>((n * 9) / 10);
    ds.train_rows.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    ds.val_rows.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
    return ds;
}

RegressionDataset make_finetune_dataset(Eigen::Index n, Eigen::Index d,
                                        std::uint64_t seed) {
    if (d < 69) throw ToyModelError("finetune dataset needs d >= 69");
    Rng rng(sub_seed(seed, "dataset.finetune"));
    RegressionDataset ds;
    ds.x = rng.gaussian_matrix(n, d);
    ds.y.resize(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = ds.x.row(i);
        ds.y(i, 0) = 0.2 * r(64) * r(65) * r(66) + 0.1 * std::sin(r(67) * r(68));
    }
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    Rng split_rng(sub_seed(seed, "dataset.finetune.split"));
    for (std::size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[split_rng.next_index(i)]);
    const auto n_train = static_cast<std::size_t>((n * 8) / 10);
    ds.train_rows.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    ds.val_rows.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
    return ds;
}

Matrix forward(const ToyNet& net, const Matrix& x) {
    if (x.cols() != net.w.rows()) throw ToyModelError("forward: input width mismatch");
    return apply_activation(x * net.w, net.activation) * net.a;
}

Gradients backward(const ToyNet& net, const Matrix& x, const Matrix& y) {
    if (x.cols() != net.w.rows() || y.rows() != x.rows() || y.cols() != 1)
        throw ToyModelError("backward: shape mismatch");
    const Eigen::Index n = x.rows();
    const Matrix z = x * net.w;                          // n x h
    const Matrix hidden = apply_activation(z, net.activation);
    const Matrix pred = hidden * net.a;                  // n x 1
    const Matrix err = pred - y;
    const double loss = err.squaredNorm() / static_cast<double>(n);

    const Matrix dpred = (2.0 / static_cast<double>(n)) * err;  // dL/dpred
    Gradients g;
    g.da = hidden.transpose() * dpred;
    const Matrix dz =
        (dpred * net.a.transpose()).cwiseProduct(activation_derivative(z, net.activation));
    g.dw = x.transpose() * dz;
    g.loss = loss;
    return g;
}

double mse_loss(const ToyNet& net, const Matrix& x, const Matrix& y) {
    return (forward(net, x) - y).squaredNorm() / static_cast<double>(x.rows());
}

namespace {

struct DenseAdamW {
    Matrix m, v;
    std::uint64_t t = 0;

    explicit DenseAdamW(const Matrix& shape_like)
        : m(Matrix::Zero(shape_like.rows(), shape_like.cols())),
          v(Matrix::Zero(shape_like.rows(), shape_like.cols())) {}

    void step(Matrix& theta, const Matrix& g, const AdamHyperparams& hp) {
        t += 1;
        const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(t));
        for (Eigen::Index i = 0; i < theta.rows(); ++i) {
            for (Eigen::Index j = 0; j < theta.cols(); ++j) {
                const double grad = g(i, j);
                m(i, j) = hp.beta1 * m(i, j) + (1.0 - hp.beta1) * grad;
                v(i, j) = hp.beta2 * v(i, j) + (1.0 - hp.beta2) * grad * grad;
                const double m_hat = m(i, j) / bc1;
                const double v_hat = v(i, j) / bc2;
                double update = hp.lr * m_hat / (std::sqrt(v_hat) + hp.eps);
                if (hp.weight_decay > 0) update += hp.lr * hp.weight_decay * theta(i, j);
                theta(i, j) -= update;
            }
        }
    }
};

struct EarlyStopper {
    EarlyStopConfig cfg;
    double best = std::numeric_limits<double>::infinity();
    std::uint64_t since_improvement = 0;

    // returns true when training should stop; `improved` is set when the
    // caller should snapshot the current parameters
    bool observe(double val_loss, bool& improved) {
        improved = val_loss < best - cfg.min_delta;
        if (val_loss < best) best = val_loss;
        if (improved)
            since_improvement = 0;
        else
            ++since_improvement;
        return since_improvement >= cfg.patience;
    }
};

// Dense AdamW training of both layers with per-epoch validation, early
// stopping, and best-parameter restore.
void train_dense(ToyNet& net, const Matrix& xt, const Matrix& yt, const Matrix& xv,
                 const Matrix& yv, const AdamHyperparams& hp, const EarlyStopConfig& es,
                 MetricsLog* log, bool log_spectral, double* best_val_out) {
    DenseAdamW opt_w(net.w), opt_a(net.a);
    EarlyStopper stopper{es};
    ToyNet best_net = net;
    double best_val = mse_loss(net, xv, yv);

    for (std::uint64_t epoch = 1; epoch <= hp.total_steps; ++epoch) {
        const Gradients g = backward(net, xt, yt);
        opt_w.step(net.w, g.dw, hp);
        opt_a.step(net.a, g.da, hp);

        const double val = mse_loss(net, xv, yv);
        if (log) {
            log->add(epoch, "train_loss", g.loss);
            log->add(epoch, "val_loss", val);
            log->add(epoch, "grad_norm",
                     std::sqrt(g.dw.squaredNorm() + g.da.squaredNorm()));
            if (log_spectral) log->add(epoch, "spectral_norm_w", spectral_norm(net.w));
        }
        bool improved = false;
        const bool stop = stopper.observe(val, improved);
        if (val < best_val) {
            best_val = val;
            best_net = net;
        }
        if (stop) break;
    }
    net = best_net;
    if (best_val_out) *best_val_out = best_val;
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& config) {
    const auto pre = make_pretrain_dataset(config.n_pre, config.d, config.seed);
    const auto ft = make_finetune_dataset(config.n_ft, config.d, config.seed);

    PipelineResult result;
    result.pretrained =
        ToyNet::random_init(config.d, config.h, config.seed, config.activation);

    {
        const Matrix xt = pre.x_rows(pre.train_rows), yt = pre.y_rows(pre.train_rows);
        const Matrix xv = pre.x_rows(pre.val_rows), yv = pre.y_rows(pre.val_rows);
        train_dense(result.pretrained, xt, yt, xv, yv, config.pretrain_hp,
                    config.early_stop, nullptr, false, &result.pretrain_val_loss);
    }

    const Matrix xt = ft.x_rows(ft.train_rows), yt = ft.y_rows(ft.train_rows);
    const Matrix xv = ft.x_rows(ft.val_rows), yv = ft.y_rows(ft.val_rows);

    for (const auto& method : config.methods) {
        MethodRun run;
        run.name = method.name;
        run.net = result.pretrained;

        if (method.full_finetune) {
            train_dense(run.net, xt, yt, xv, yv, config.finetune_hp, config.early_stop,
                        &run.log, true, &run.best_val_loss);
        } else {
            std::vector<TrainableParam> params;
            params.push_back({"w", run.net.w, true});
            params.push_back({"a", run.net.a, true});

            ToyNet& net = run.net;
            const auto eval_net = [&](const std::vector<TrainableParam>& ps) {
                ToyNet tmp = net;
                tmp.w = ps[0].theta;
                tmp.a = ps[1].theta;
                return tmp;
            };

            const LossProvider loss = [&](const std::vector<TrainableParam>& ps,
                                          std::vector<Matrix>& grads) {
                const ToyNet current = eval_net(ps);
                const Gradients g = backward(current, xt, yt);
                grads.push_back(g.dw);
                grads.push_back(g.da);
                return g.loss;
            };

            EarlyStopper stopper{config.early_stop};
            ToyNet best_net = run.net;
            double best_val = mse_loss(run.net, xv, yv);
            MetricsLog epoch_log;

            const StepObserver observer = [&](std::uint64_t epoch,
                                              const std::vector<TrainableParam>& ps) {
                const ToyNet current = eval_net(ps);
                const double val = mse_loss(current, xv, yv);
                epoch_log.add(epoch, "val_loss", val);
                epoch_log.add(epoch, "spectral_norm_w", spectral_norm(current.w));
                bool improved = false;
                const bool stop = stopper.observe(val, improved);
                if (val < best_val) {
                    best_val = val;
                    best_net = current;
                }
                return !stop;
            };

            auto trained = train_loop(std::move(params), loss, method.strategy,
                                      method.budget, config.finetune_hp, observer);
            // merge train-loop metrics (loss/grad_norm/update_norm) with the
            // per-epoch validation series
            run.log = std::move(trained.log);
            for (auto& rec : run.log.records)
                if (rec.name == "loss") rec.name = "train_loss";
            for (auto& rec : epoch_log.records) run.log.records.push_back(std::move(rec));
            std::stable_sort(run.log.records.begin(), run.log.records.end(),
                             [](const MetricRecord& a, const MetricRecord& b) {
                                 return a.step < b.step;
                             });
            run.net = best_net;
            run.best_val_loss = best_val;
        }

        run.final_val_loss = mse_loss(run.net, xv, yv);
        run.final_spectral_norm_w = spectral_norm(run.net.w);
        result.runs.push_back(std::move(run));
    }
    return result;
}

}  // namespace lift
