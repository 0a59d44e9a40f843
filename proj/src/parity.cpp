#include "supmeter/parity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "supmeter/adam.hpp"
#include "supmeter/errors.hpp"

namespace supmeter::tasks {

void ParityConfig::validate() const {
    if (n_tasks == 0 || bits_per_task == 0) throw ConfigError("parity: n_tasks and bits_per_task must be positive");
    if (n_samples < 2) throw ConfigError("parity: need at least two samples");
}

ParityData gen_parity(const ParityConfig& cfg, Rng& rng) {
    cfg.validate();
    const std::size_t n = cfg.n_samples;
    const std::size_t data_bits = cfg.n_tasks * cfg.bits_per_task;
    ParityData d;
    d.X = Matrix(cfg.input_dim(), n);
    d.y.resize(n);
    d.task.resize(n);
    for (std::size_t s = 0; s < n; ++s) {
        const auto t = static_cast<std::size_t>(rng.below(cfg.n_tasks));
        d.task[s] = t;
        d.X(t, s) = 1.0;
        for (std::size_t k = 0; k < data_bits; ++k) {
            d.X(cfg.n_tasks + k, s) = static_cast<double>(rng.below(2));
        }
        unsigned ones = 0;
        for (std::size_t k = 0; k < cfg.bits_per_task; ++k) {
            ones += d.X(cfg.n_tasks + t * cfg.bits_per_task + k, s) != 0.0 ? 1U : 0U;
        }
        d.y[s] = static_cast<double>(ones % 2U);
    }

    // Stratified 80/20 split over (task, label) strata.
    std::vector<std::vector<std::size_t>> strata(cfg.n_tasks * 2);
    for (std::size_t s = 0; s < n; ++s) {
        strata[d.task[s] * 2 + static_cast<std::size_t>(d.y[s])].push_back(s);
    }
    for (auto& stratum : strata) {
        rng.shuffle(stratum);
        const auto n_train = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(stratum.size())));
        d.train.insert(d.train.end(), stratum.begin(), stratum.begin() + static_cast<std::ptrdiff_t>(n_train));
        d.test.insert(d.test.end(), stratum.begin() + static_cast<std::ptrdiff_t>(n_train), stratum.end());
    }
    std::sort(d.train.begin(), d.train.end());
    std::sort(d.test.begin(), d.test.end());
    return d;
}

void MlpConfig::validate() const {
    if (input_dim == 0 || hidden == 0) throw ConfigError("mlp: dimensions must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("mlp: dropout must lie in [0, 1)");
    if (!(lr > 0.0)) throw ConfigError("mlp: lr must be positive");
    if (batch == 0) throw ConfigError("mlp: batch must be positive");
}

ParityMlp init_mlp(const MlpConfig& cfg, Rng& rng) {
    ParityMlp m{Matrix(cfg.hidden, cfg.input_dim), std::vector<double>(cfg.hidden),
                Matrix(1, cfg.hidden), std::vector<double>(1)};
    const double b_in = 1.0 / std::sqrt(static_cast<double>(cfg.input_dim));
    const double b_h = 1.0 / std::sqrt(static_cast<double>(cfg.hidden));
    for (double& w : m.W1.data()) w = rng.uniform(-b_in, b_in);
    for (double& b : m.b1) b = rng.uniform(-b_in, b_in);
    for (double& w : m.W2.data()) w = rng.uniform(-b_h, b_h);
    m.b2[0] = rng.uniform(-b_h, b_h);
    return m;
}

Matrix dropout_mask(Rng& rng, std::size_t rows, std::size_t cols, double rate) {
    Matrix mask(rows, cols);
    const double keep_scale = 1.0 / (1.0 - rate);
    for (double& v : mask.data()) v = rng.uniform() < rate ? 0.0 : keep_scale;
    return mask;
}

namespace {

Matrix pre_activation(const ParityMlp& model, const Matrix& X) {
    if (X.rows() != model.W1.cols()) {
        throw ShapeError("parity mlp: input has " + std::to_string(X.rows()) + " rows, expected " +
                         std::to_string(model.W1.cols()));
    }
    Matrix pre = matmul(model.W1, X);
    add_column_broadcast(pre, model.b1);
    return pre;
}

double bce_with_logits(double logit, double y) {
    return std::max(logit, 0.0) - logit * y + std::log1p(std::exp(-std::abs(logit)));
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

Matrix extract_hidden(const ParityMlp& model, const Matrix& X, HiddenStage stage) {
    Matrix pre = pre_activation(model, X);
    if (stage == HiddenStage::post_relu) {
        for (double& v : pre.data()) v = v > 0.0 ? v : 0.0;
    }
    return pre;
}

Matrix logits(const ParityMlp& model, const Matrix& X) {
    Matrix out = matmul(model.W2, extract_hidden(model, X, HiddenStage::post_relu));
    for (double& v : out.data()) v += model.b2[0];
    return out;
}

double accuracy(const ParityMlp& model, const Matrix& X, std::span<const double> y) {
    const Matrix l = logits(model, X);
    std::size_t correct = 0;
    for (std::size_t s = 0; s < y.size(); ++s) {
        const double pred = l(0, s) > 0.0 ? 1.0 : 0.0;
        correct += pred == y[s] ? 1U : 0U;
    }
    return y.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(y.size());
}

MlpGradients loss_and_grad(const ParityMlp& model, const Matrix& X, std::span<const double> y,
                           const Matrix* dropout_scale) {
    const std::size_t B = X.cols();
    if (y.size() != B) throw ShapeError("parity mlp: label count does not match batch");
    Matrix hidden = pre_activation(model, X);
    if (dropout_scale != nullptr) {
        if (dropout_scale->rows() != hidden.rows() || dropout_scale->cols() != B)
            throw ShapeError("parity mlp: dropout mask shape");
        hidden = hadamard(hidden, *dropout_scale);
    }
    for (double& v : hidden.data()) v = v > 0.0 ? v : 0.0;
    Matrix out = matmul(model.W2, hidden);

    const double inv_b = 1.0 / static_cast<double>(B);
    MlpGradients g;
    Matrix dlogit(1, B);
    double total = 0.0;
    for (std::size_t s = 0; s < B; ++s) {
        const double l = out(0, s) + model.b2[0];
        total += bce_with_logits(l, y[s]);
        dlogit(0, s) = (sigmoid(l) - y[s]) * inv_b;
    }
    g.loss = total * inv_b;
    g.grad_b2 = row_sums(dlogit);
    g.grad_W2 = matmul_nt(dlogit, hidden);
    Matrix dpre = matmul_tn(model.W2, dlogit);  // h x B
    for (std::size_t j = 0; j < dpre.rows(); ++j) {
        auto dr = dpre.row(j);
        auto hr = hidden.row(j);
        for (std::size_t s = 0; s < B; ++s) {
            double v = hr[s] > 0.0 ? dr[s] : 0.0;
            if (dropout_scale != nullptr) v *= (*dropout_scale)(j, s);
            dr[s] = v;
        }
    }
    g.grad_b1 = row_sums(dpre);
    g.grad_W1 = matmul_nt(dpre, X);
    return g;
}

MlpTrainResult train_parity_mlp(const MlpConfig& cfg, const ParityData& data) {
    cfg.validate();
    if (data.X.rows() != cfg.input_dim) throw ShapeError("train_parity_mlp: input_dim mismatch");
    if (data.train.empty()) throw ConfigError("train_parity_mlp: empty training split");

    Rng init_rng(derive_seed(cfg.seed, "mlp-init"));
    Rng order_rng(derive_seed(cfg.seed, "mlp-order"));
    Rng drop_rng(derive_seed(cfg.seed, "mlp-dropout"));

    MlpTrainResult r;
    r.model = init_mlp(cfg, init_rng);
    AdamOptions opts;
    opts.lr = cfg.lr;
    AdamState s_w1(cfg.hidden, cfg.input_dim, opts), s_b1(cfg.hidden, 1, opts);
    AdamState s_w2(1, cfg.hidden, opts), s_b2(1, 1, opts);

    std::vector<std::size_t> order = data.train;
    std::vector<double> yb;
    std::uint64_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        order_rng.shuffle(order);
        const bool last = epoch + 1 == cfg.epochs;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
            const std::size_t count = std::min(cfg.batch, order.size() - start);
            std::span<const std::size_t> idx(order.data() + start, count);
            const Matrix Xb = gather_columns(data.X, idx);
            yb.resize(count);
            for (std::size_t k = 0; k < count; ++k) yb[k] = data.y[idx[k]];

            MlpGradients g;
            if (cfg.dropout > 0.0) {
                const Matrix mask = dropout_mask(drop_rng, cfg.hidden, count, cfg.dropout);
                if (last) {
                    r.last_epoch_units += mask.size();
                    r.last_epoch_dropped += static_cast<std::uint64_t>(
                        std::count(mask.data().begin(), mask.data().end(), 0.0));
                }
                g = loss_and_grad(r.model, Xb, yb, &mask);
            } else {
                g = loss_and_grad(r.model, Xb, yb, nullptr);
            }
            if (!std::isfinite(g.loss)) throw DivergenceError("parity MLP training", step);
            adam_step(r.model.W1, g.grad_W1, s_w1);
            adam_step(std::span<double>(r.model.b1), g.grad_b1, s_b1);
            adam_step(r.model.W2, g.grad_W2, s_w2);
            adam_step(std::span<double>(r.model.b2), g.grad_b2, s_b2);
            r.final_loss = g.loss;
            ++step;
        }
    }

    auto split_eval = [&](const std::vector<std::size_t>& idx) {
        const Matrix Xs = gather_columns(data.X, idx);
        std::vector<double> ys(idx.size());
        for (std::size_t k = 0; k < idx.size(); ++k) ys[k] = data.y[idx[k]];
        return accuracy(r.model, Xs, ys);
    };
    r.train_accuracy = split_eval(data.train);
    r.test_accuracy = data.test.empty() ? 0.0 : split_eval(data.test);
    return r;
}

nlohmann::json to_json(const ParityConfig& cfg) {
    return {{"n_tasks", cfg.n_tasks},
            {"bits_per_task", cfg.bits_per_task},
            {"n_samples", cfg.n_samples},
            {"seed", cfg.seed}};
}

nlohmann::json to_json(const MlpConfig& cfg) {
    return {{"input_dim", cfg.input_dim}, {"hidden", cfg.hidden}, {"dropout", cfg.dropout},
            {"lr", cfg.lr},               {"epochs", cfg.epochs}, {"batch", cfg.batch},
            {"seed", cfg.seed}};
}

ParityConfig parity_config_from_json(const nlohmann::json& j, ParityConfig base) {
    base.n_tasks = j.value("n_tasks", base.n_tasks);
    base.bits_per_task = j.value("bits_per_task", base.bits_per_task);
    base.n_samples = j.value("n_samples", base.n_samples);
    base.seed = j.value("seed", base.seed);
    return base;
}

MlpConfig mlp_config_from_json(const nlohmann::json& j, MlpConfig base) {
    base.input_dim = j.value("input_dim", base.input_dim);
    base.hidden = j.value("hidden", base.hidden);
    base.dropout = j.value("dropout", base.dropout);
    base.lr = j.value("lr", base.lr);
    base.epochs = j.value("epochs", base.epochs);
    base.batch = j.value("batch", base.batch);
    base.seed = j.value("seed", base.seed);
    return base;
}

}  // namespace supmeter::tasks
