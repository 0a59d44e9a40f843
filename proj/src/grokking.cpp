#include "supmeter/grokking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "supmeter/activations.hpp"
#include "supmeter/adam.hpp"
#include "supmeter/errors.hpp"
#include "supmeter/json_io.hpp"

namespace supmeter::tasks {

void GrokConfig::validate() const {
    if (modulus < 2) throw ConfigError("grok: modulus must be at least 2");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("grok: train_fraction must lie in (0, 1)");
    if (embed_dim == 0 || hidden == 0) throw ConfigError("grok: dimensions must be positive");
    if (batch == 0 || checkpoint_every == 0) throw ConfigError("grok: batch and checkpoint_every must be positive");
    if (!(lr > 0.0) || !(weight_decay >= 0.0)) throw ConfigError("grok: bad optimizer settings");
}

GrokSplit make_split(const GrokConfig& cfg) {
    const std::size_t total = cfg.modulus * cfg.modulus;
    std::vector<std::size_t> pairs(total);
    std::iota(pairs.begin(), pairs.end(), std::size_t{0});
    Rng rng(derive_seed(cfg.seed, "grok-split"));
    rng.shuffle(pairs);
    const auto n_train = static_cast<std::size_t>(std::llround(cfg.train_fraction * static_cast<double>(total)));
    GrokSplit split;
    split.train.assign(pairs.begin(), pairs.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.test.assign(pairs.begin() + static_cast<std::ptrdiff_t>(n_train), pairs.end());
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

GrokModel init_grok(const GrokConfig& cfg, Rng& rng) {
    const std::size_t p = cfg.modulus, d = cfg.embed_dim, h = cfg.hidden;
    GrokModel m;
    m.shared_embedding = cfg.shared_embedding;
    m.embed_a = Matrix(p, d);
    for (double& v : m.embed_a.data()) v = rng.normal();
    if (!cfg.shared_embedding) {
        m.embed_b = Matrix(p, d);
        for (double& v : m.embed_b.data()) v = rng.normal();
    }
    const double bd = 1.0 / std::sqrt(static_cast<double>(d));
    const double bh = 1.0 / std::sqrt(static_cast<double>(h));
    m.W1 = Matrix(h, d);
    m.W2 = Matrix(h, d);
    m.W3 = Matrix(p, h);
    for (double& v : m.W1.data()) v = rng.uniform(-bd, bd);
    for (double& v : m.W2.data()) v = rng.uniform(-bd, bd);
    for (double& v : m.W3.data()) v = rng.uniform(-bh, bh);
    return m;
}

namespace {

// d x B block of embedding rows for one operand.
Matrix gather_embeddings(const Matrix& table, std::span<const std::size_t> pairs, std::size_t p, bool first) {
    const std::size_t d = table.cols();
    Matrix out(d, pairs.size());
    for (std::size_t s = 0; s < pairs.size(); ++s) {
        const std::size_t tok = first ? pairs[s] / p : pairs[s] % p;
        if (tok >= table.rows()) throw ShapeError("grok: token out of range");
        auto row = table.row(tok);
        for (std::size_t k = 0; k < d; ++k) out(k, s) = row[k];
    }
    return out;
}

}  // namespace

GrokForward forward(const GrokModel& model, std::span<const std::size_t> pairs) {
    const std::size_t p = model.W3.rows();
    for (std::size_t pair : pairs) {
        if (pair >= p * p) throw ShapeError("grok: pair index out of range");
    }
    const Matrix ea = gather_embeddings(model.embed_a, pairs, p, true);
    const Matrix eb = gather_embeddings(model.table_b(), pairs, p, false);
    GrokForward f;
    f.pre = matmul(model.W1, ea);
    f.pre += matmul(model.W2, eb);
    f.hidden = gelu(f.pre);
    f.logits = matmul(model.W3, f.hidden);
    return f;
}

Matrix hidden_activations(const GrokModel& model, std::span<const std::size_t> pairs) {
    return forward(model, pairs).hidden;
}

GrokGradients loss_and_grad(const GrokModel& model, std::span<const std::size_t> pairs) {
    const std::size_t p = model.W3.rows();
    const std::size_t B = pairs.size();
    const GrokForward f = forward(model, pairs);
    const double inv_b = 1.0 / static_cast<double>(B);

    Matrix dlogits(p, B);
    double total = 0.0;
    for (std::size_t s = 0; s < B; ++s) {
        const std::size_t target = (pairs[s] / p + pairs[s] % p) % p;
        double mx = f.logits(0, s);
        for (std::size_t c = 1; c < p; ++c) mx = std::max(mx, f.logits(c, s));
        double z = 0.0;
        for (std::size_t c = 0; c < p; ++c) z += std::exp(f.logits(c, s) - mx);
        const double log_z = mx + std::log(z);
        total += log_z - f.logits(target, s);
        for (std::size_t c = 0; c < p; ++c) {
            const double prob = std::exp(f.logits(c, s) - log_z);
            dlogits(c, s) = (prob - (c == target ? 1.0 : 0.0)) * inv_b;
        }
    }

    GrokGradients g;
    g.loss = total * inv_b;
    g.W3 = matmul_nt(dlogits, f.hidden);
    Matrix dpre = matmul_tn(model.W3, dlogits);
    for (std::size_t i = 0; i < dpre.size(); ++i) dpre.data()[i] *= gelu_grad(f.pre.data()[i]);

    const Matrix ea = gather_embeddings(model.embed_a, pairs, p, true);
    const Matrix eb = gather_embeddings(model.table_b(), pairs, p, false);
    g.W1 = matmul_nt(dpre, ea);
    g.W2 = matmul_nt(dpre, eb);

    const Matrix dea = matmul_tn(model.W1, dpre);  // d x B
    const Matrix deb = matmul_tn(model.W2, dpre);
    const std::size_t d = model.embed_a.cols();
    g.embed_a = Matrix(p, d);
    if (!model.shared_embedding) g.embed_b = Matrix(p, d);
    Matrix& target_b = model.shared_embedding ? g.embed_a : g.embed_b;
    for (std::size_t s = 0; s < B; ++s) {
        auto ra = g.embed_a.row(pairs[s] / p);
        for (std::size_t k = 0; k < d; ++k) ra[k] += dea(k, s);
        auto rb = target_b.row(pairs[s] % p);
        for (std::size_t k = 0; k < d; ++k) rb[k] += deb(k, s);
    }
    return g;
}

double accuracy(const GrokModel& model, std::span<const std::size_t> pairs) {
    if (pairs.empty()) return 0.0;
    const std::size_t p = model.W3.rows();
    const GrokForward f = forward(model, pairs);
    std::size_t correct = 0;
    for (std::size_t s = 0; s < pairs.size(); ++s) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < p; ++c)
            if (f.logits(c, s) > f.logits(best, s)) best = c;
        correct += best == (pairs[s] / p + pairs[s] % p) % p ? 1U : 0U;
    }
    return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

GrokRun train_grok(const GrokConfig& cfg) {
    cfg.validate();
    GrokRun run;
    run.split = make_split(cfg);
    Rng init_rng(derive_seed(cfg.seed, "grok-init"));
    Rng order_rng(derive_seed(cfg.seed, "grok-order"));
    GrokModel model = init_grok(cfg, init_rng);

    AdamOptions opts;
    opts.lr = cfg.lr;
    if (cfg.decoupled_weight_decay) opts.weight_decay = cfg.weight_decay;
    const double l2 = cfg.decoupled_weight_decay ? 0.0 : cfg.weight_decay;
    AdamState s_ea(model.embed_a.rows(), model.embed_a.cols(), opts);
    AdamState s_eb(model.embed_b.rows(), model.embed_b.cols(), opts);
    AdamState s_w1(model.W1.rows(), model.W1.cols(), opts);
    AdamState s_w2(model.W2.rows(), model.W2.cols(), opts);
    AdamState s_w3(model.W3.rows(), model.W3.cols(), opts);

    std::vector<std::size_t> order = run.split.train;
    std::size_t cursor = order.size();
    std::vector<std::size_t> batch;
    double last_loss = 0.0;
    for (std::size_t step = 1; step <= cfg.steps; ++step) {
        batch.clear();
        while (batch.size() < cfg.batch) {
            if (cursor == order.size()) {
                order_rng.shuffle(order);
                cursor = 0;
            }
            const std::size_t take = std::min(cfg.batch - batch.size(), order.size() - cursor);
            batch.insert(batch.end(), order.begin() + static_cast<std::ptrdiff_t>(cursor),
                         order.begin() + static_cast<std::ptrdiff_t>(cursor + take));
            cursor += take;
        }
        GrokGradients g = loss_and_grad(model, batch);
        if (!std::isfinite(g.loss)) throw DivergenceError("grokking MLP training", step);
        if (l2 > 0.0) {
            g.embed_a += l2 * model.embed_a;
            if (!model.shared_embedding) g.embed_b += l2 * model.embed_b;
            g.W1 += l2 * model.W1;
            g.W2 += l2 * model.W2;
            g.W3 += l2 * model.W3;
        }
        last_loss = g.loss;
        adam_step(model.embed_a, g.embed_a, s_ea);
        if (!model.shared_embedding) adam_step(model.embed_b, g.embed_b, s_eb);
        adam_step(model.W1, g.W1, s_w1);
        adam_step(model.W2, g.W2, s_w2);
        adam_step(model.W3, g.W3, s_w3);

        if (step % cfg.checkpoint_every == 0) {
            GrokCheckpoint ck;
            ck.step = step;
            ck.model = model;
            ck.train_acc = accuracy(model, run.split.train);
            ck.test_acc = accuracy(model, run.split.test);
            ck.train_loss = last_loss;
            run.checkpoints.push_back(std::move(ck));
        }
    }
    return run;
}

nlohmann::json to_json(const GrokConfig& cfg) {
    return {{"modulus", cfg.modulus},
            {"train_fraction", cfg.train_fraction},
            {"embed_dim", cfg.embed_dim},
            {"hidden", cfg.hidden},
            {"steps", cfg.steps},
            {"lr", cfg.lr},
            {"batch", cfg.batch},
            {"weight_decay", cfg.weight_decay},
            {"checkpoint_every", cfg.checkpoint_every},
            {"seed", cfg.seed},
            {"shared_embedding", cfg.shared_embedding},
            {"decoupled_weight_decay", cfg.decoupled_weight_decay}};
}

GrokConfig grok_config_from_json(const nlohmann::json& j, GrokConfig base) {
    base.modulus = j.value("modulus", base.modulus);
    base.train_fraction = j.value("train_fraction", base.train_fraction);
    base.embed_dim = j.value("embed_dim", base.embed_dim);
    base.hidden = j.value("hidden", base.hidden);
    base.steps = j.value("steps", base.steps);
    base.lr = j.value("lr", base.lr);
    base.batch = j.value("batch", base.batch);
    base.weight_decay = j.value("weight_decay", base.weight_decay);
    base.checkpoint_every = j.value("checkpoint_every", base.checkpoint_every);
    base.seed = j.value("seed", base.seed);
    base.shared_embedding = j.value("shared_embedding", base.shared_embedding);
    base.decoupled_weight_decay = j.value("decoupled_weight_decay", base.decoupled_weight_decay);
    return base;
}

nlohmann::json checkpoint_json(const GrokCheckpoint& ck) {
    nlohmann::json params = {{"embed_a", matrix_to_json(ck.model.embed_a)},
                             {"W1", matrix_to_json(ck.model.W1)},
                             {"W2", matrix_to_json(ck.model.W2)},
                             {"W3", matrix_to_json(ck.model.W3)}};
    if (!ck.model.shared_embedding) params["embed_b"] = matrix_to_json(ck.model.embed_b);
    return {{"step", ck.step}, {"train_acc", ck.train_acc}, {"test_acc", ck.test_acc}, {"params", params}};
}

}  // namespace supmeter::tasks
