#include "supmeter/toymodel.hpp"

#include <cmath>
#include <string>

#include "supmeter/adam.hpp"
#include "supmeter/errors.hpp"
#include "supmeter/json_io.hpp"

namespace supmeter::toy {

void ToyConfig::validate() const {
    if (M == 0 || N == 0) throw ConfigError("toy: M and N must be positive");
    if (!(sparsity >= 0.0 && sparsity < 1.0)) throw ConfigError("toy: sparsity must lie in [0, 1)");
    if (!(importance_decay > 0.0 && importance_decay <= 1.0))
        throw ConfigError("toy: importance_decay must lie in (0, 1]");
    if (!(lr > 0.0)) throw ConfigError("toy: lr must be positive");
    if (batch == 0) throw ConfigError("toy: batch must be positive");
}

std::vector<double> importance_weights(const ToyConfig& cfg) {
    std::vector<double> w(cfg.M);
    double v = 1.0;
    for (auto& wi : w) {
        wi = v;
        v *= cfg.importance_decay;
    }
    return w;
}

Matrix sample_features(const ToyConfig& cfg, Rng& rng, std::size_t count) {
    Matrix f(cfg.M, count);
    // Column-major draw order so a sample's features are contiguous in the stream.
    for (std::size_t s = 0; s < count; ++s) {
        for (std::size_t i = 0; i < cfg.M; ++i) {
            const bool active = rng.uniform() >= cfg.sparsity;
            f(i, s) = active ? rng.uniform() : 0.0;
        }
    }
    return f;
}

ForwardResult forward(const ToyModel& model, const Matrix& features) {
    if (features.rows() != model.W.cols()) {
        throw ShapeError("toy::forward: features have " + std::to_string(features.rows()) +
                         " rows, model expects " + std::to_string(model.W.cols()));
    }
    ForwardResult out;
    out.hidden = matmul(model.W, features);
    out.output = matmul_tn(model.W, out.hidden);
    add_column_broadcast(out.output, model.b);
    for (double& v : out.output.data()) v = v > 0.0 ? v : 0.0;
    return out;
}

double loss(const ToyModel& model, const Matrix& features, const std::vector<double>& importance) {
    const auto fwd = forward(model, features);
    const std::size_t B = features.cols();
    double total = 0.0;
    for (std::size_t i = 0; i < features.rows(); ++i) {
        auto f = features.row(i);
        auto fp = fwd.output.row(i);
        double acc = 0.0;
        for (std::size_t s = 0; s < B; ++s) {
            const double d = f[s] - fp[s];
            acc += d * d;
        }
        total += importance[i] * acc;
    }
    return total / static_cast<double>(B);
}

ToyGradients loss_and_grad(const ToyModel& model, const Matrix& features,
                           const std::vector<double>& importance) {
    if (importance.size() != features.rows()) throw ShapeError("toy::loss_and_grad: importance length");
    const auto fwd = forward(model, features);
    const std::size_t M = features.rows();
    const std::size_t B = features.cols();
    const double inv_b = 1.0 / static_cast<double>(B);

    // delta = dL/d(pre-activation), M x B. f' > 0 exactly where the ReLU passes.
    Matrix delta(M, B);
    double total = 0.0;
    for (std::size_t i = 0; i < M; ++i) {
        auto f = features.row(i);
        auto fp = fwd.output.row(i);
        auto d = delta.row(i);
        double acc = 0.0;
        for (std::size_t s = 0; s < B; ++s) {
            const double r = fp[s] - f[s];
            acc += r * r;
            d[s] = fp[s] > 0.0 ? 2.0 * importance[i] * r * inv_b : 0.0;
        }
        total += importance[i] * acc;
    }

    ToyGradients g;
    g.loss = total * inv_b;
    g.grad_b = row_sums(delta);
    // Readout path: pre = Wᵀx + b  ->  x δᵀ.  Encoding path: x = W f  ->  (W δ) fᵀ.
    g.grad_W = matmul_nt(fwd.hidden, delta);
    g.grad_W += matmul_nt(matmul(model.W, delta), features);
    return g;
}

ToyModel init_model(const ToyConfig& cfg, Rng& rng) {
    ToyModel m{Matrix(cfg.N, cfg.M), std::vector<double>(cfg.M, 0.0)};
    const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.M));
    for (double& w : m.W.data()) w = rng.uniform(-bound, bound);
    return m;
}

ToyTrainResult train(const ToyConfig& cfg) {
    cfg.validate();
    Rng rng(derive_seed(cfg.seed, "toy-train"));
    Rng eval_rng(derive_seed(cfg.seed, "toy-eval"));
    const auto importance = importance_weights(cfg);
    const Matrix eval_batch = sample_features(cfg, eval_rng, 4096);

    ToyTrainResult result;
    result.model = init_model(cfg, rng);
    result.initial_loss = loss(result.model, eval_batch, importance);

    AdamOptions opts;
    opts.lr = cfg.lr;
    AdamState sw(cfg.N, cfg.M, opts);
    AdamState sb(cfg.M, 1, opts);

    const std::size_t plateau_start = cfg.steps - cfg.steps / 10;
    double plateau_ref = result.initial_loss;
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        if (step == plateau_start) plateau_ref = loss(result.model, eval_batch, importance);
        const Matrix batch = sample_features(cfg, rng, cfg.batch);
        auto g = loss_and_grad(result.model, batch, importance);
        if (!std::isfinite(g.loss)) throw DivergenceError("toy model training", step);
        adam_step(result.model.W, g.grad_W, sw);
        adam_step(std::span<double>(result.model.b), g.grad_b, sb);
    }
    result.final_loss = loss(result.model, eval_batch, importance);
    if (!std::isfinite(result.final_loss) || !all_finite(result.model.W))
        throw DivergenceError("toy model training", cfg.steps);
    const double denom = std::max(std::abs(plateau_ref), 1e-300);
    result.plateaued = std::abs(result.final_loss - plateau_ref) / denom < 1e-4;
    return result;
}

Matrix interference_matrix(const ToyModel& model) { return matmul_tn(model.W, model.W); }

double psi_frobenius(const ToyModel& model) {
    return frobenius_sq(model.W) / static_cast<double>(model.W.rows());
}

nlohmann::json to_json(const ToyConfig& cfg) {
    return {{"M", cfg.M},
            {"N", cfg.N},
            {"sparsity", cfg.sparsity},
            {"importance_decay", cfg.importance_decay},
            {"lr", cfg.lr},
            {"steps", cfg.steps},
            {"batch", cfg.batch},
            {"seed", cfg.seed}};
}

ToyConfig config_from_json(const nlohmann::json& j, ToyConfig base) {
    base.M = j.value("M", base.M);
    base.N = j.value("N", base.N);
    base.sparsity = j.value("sparsity", base.sparsity);
    base.importance_decay = j.value("importance_decay", base.importance_decay);
    base.lr = j.value("lr", base.lr);
    base.steps = j.value("steps", base.steps);
    base.batch = j.value("batch", base.batch);
    base.seed = j.value("seed", base.seed);
    return base;
}

nlohmann::json checkpoint_json(const ToyConfig& cfg, const ToyModel& model, double final_loss) {
    return {{"config", to_json(cfg)},
            {"W", matrix_to_json(model.W)},
            {"b", model.b},
            {"final_loss", final_loss}};
}

ToyModel model_from_checkpoint(const nlohmann::json& j) {
    ToyModel m{matrix_from_json(j.at("W")), vector_from_json(j.at("b"))};
    if (m.b.size() != m.W.cols()) throw IoError("toy checkpoint: b length does not match W");
    return m;
}

}  // namespace supmeter::toy
