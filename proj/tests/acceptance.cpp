// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails. Thresholds come from the manifest.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "supmeter/errors.hpp"
#include "supmeter/experiments.hpp"
#include "supmeter/gradcheck.hpp"
#include "supmeter/grokking.hpp"
#include "supmeter/parity.hpp"
#include "supmeter/report.hpp"
#include "supmeter/sae.hpp"
#include "supmeter/supmetric.hpp"
#include "supmeter/toymodel.hpp"

using namespace supmeter;
using nlohmann::json;

namespace {

struct Outcome {
    bool pass = true;
    std::vector<std::string> notes;

    void expect(bool ok, const std::string& what) {
        pass = pass && ok;
        notes.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
    }
};

std::string num(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

struct Context {
    json manifest;
    json criteria;
    json unit;
    double scale = 0.25;
    std::filesystem::path out;
    std::size_t threads = 1;
};

harness::RunOptions run_options(const Context& ctx, const std::filesystem::path& dir) {
    harness::RunOptions o;
    o.seed = ctx.manifest.value("seed", std::uint64_t{0});
    o.scale = ctx.scale;
    o.out_dir = dir;
    o.threads = ctx.threads;
    o.log = [](const std::string& s) { std::cerr << "  " << s << '\n'; };
    return o;
}

json experiment_overrides(const Context& ctx, const char* name) {
    const json& e = ctx.manifest.value("experiments", json::object());
    return e.contains(name) ? e.at(name) : json::object();
}

Outcome from_evaluation(const harness::Evaluation& ev) {
    Outcome o;
    for (const auto& c : ev.checks) o.expect(c.pass, c.name + ": " + num(c.value) + " (" + c.rule + ")");
    if (ev.checks.empty()) o.expect(false, "no checks evaluated");
    return o;
}

// ---------------------------------------------------------------- 1-4: experiments

Outcome criterion_toy(const Context& ctx) {
    const auto p = harness::toy_validation_params(ctx.scale, experiment_overrides(ctx, "toy_validation"));
    const auto t = harness::exp_toy_validation(p, run_options(ctx, ctx.out / "runs"));
    return from_evaluation(harness::evaluate_toy_validation(t, ctx.criteria.at("toy_validation")));
}

Outcome criterion_dict(const Context& ctx) {
    const auto p = harness::dict_scaling_params(ctx.scale, experiment_overrides(ctx, "dict_scaling"));
    const auto t = harness::exp_dict_scaling(p, run_options(ctx, ctx.out / "runs"));
    return from_evaluation(harness::evaluate_dict_scaling(t, ctx.criteria.at("dict_scaling")));
}

Outcome criterion_dropout(const Context& ctx) {
    const auto p = harness::dropout_params(ctx.scale, experiment_overrides(ctx, "dropout"));
    const auto t = harness::exp_dropout(p, run_options(ctx, ctx.out / "runs"));
    return from_evaluation(harness::evaluate_dropout(t, ctx.criteria.at("dropout")));
}

Outcome criterion_grokking(const Context& ctx) {
    const auto p = harness::grokking_params(ctx.scale, experiment_overrides(ctx, "grokking"));
    const auto t = harness::exp_grokking(p, run_options(ctx, ctx.out / "runs"));
    return from_evaluation(harness::evaluate_grokking(t, ctx.criteria.at("grokking")));
}

// ---------------------------------------------------------------- 5: metric properties

metric::FeatureDistribution dist_of(std::vector<double> p) {
    metric::FeatureDistribution d;
    d.p = std::move(p);
    d.total_budget = 1.0;
    d.sample_count = 1;
    return d;
}

/// Code matrix with a random number of dead features and heavy-tailed mass.
Matrix random_codes(Rng& rng, std::size_t D, std::size_t S) {
    Matrix Z(D, S);
    for (std::size_t i = 0; i < D; ++i) {
        if (rng.bernoulli(0.2)) continue;
        const double scale = std::exp(3.0 * rng.normal());
        for (std::size_t s = 0; s < S; ++s)
            if (rng.bernoulli(0.5)) Z(i, s) = scale * rng.uniform();
    }
    Z(rng.below(D), rng.below(S)) = 1.0;  // never entirely dead
    return Z;
}

Outcome criterion_metric(const Context& ctx) {
    Outcome o;
    Rng rng(derive_seed(0, "acceptance-metric"));
    const std::size_t n = ctx.unit.at("random_distributions");
    std::size_t bound_bad = 0, mono_bad = 0, perm_bad = 0, scale_bad = 0;
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t D = 1 + rng.below(64);
        const Matrix Z = random_codes(rng, D, 1 + rng.below(8));
        const auto dist = metric::feature_probabilities(Z);
        const double F = metric::effective_features(dist);
        bound_bad += (F >= 1.0 && F <= static_cast<double>(D)) ? 0U : 1U;
        const double h0 = metric::hill_number(dist, 0.0), h2 = metric::hill_number(dist, 2.0);
        mono_bad += (h0 >= F && F >= h2) ? 0U : 1U;

        std::vector<std::size_t> perm(D);
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm);
        Matrix P(D, Z.cols());
        for (std::size_t i = 0; i < D; ++i)
            for (std::size_t s = 0; s < Z.cols(); ++s) P(i, s) = Z(perm[i], s);
        perm_bad += metric::effective_features(metric::feature_probabilities(P)) == F ? 0U : 1U;

        const double c = std::ldexp(1.0, static_cast<int>(rng.below(20)) - 10);
        scale_bad += metric::effective_features(metric::feature_probabilities(c * Z)) == F ? 0U : 1U;
    }
    o.expect(bound_bad == 0, "1 <= F <= D on " + std::to_string(n) + " random distributions (" +
                                 std::to_string(bound_bad) + " violations)");
    o.expect(mono_bad == 0, "hill(0) >= hill(1) >= hill(2) (" + std::to_string(mono_bad) + " violations)");
    o.expect(perm_bad == 0, "permutation invariance exact (" + std::to_string(perm_bad) + " mismatches)");
    o.expect(scale_bad == 0, "scale invariance exact (" + std::to_string(scale_bad) + " mismatches)");

    const double tol = ctx.unit.at("additivity_tol");
    double worst = 0.0;
    for (int k = 0; k < 200; ++k) {
        std::vector<double> p(1 + rng.below(12)), q(1 + rng.below(12));
        double sp = 0.0, sq = 0.0;
        for (double& v : p) sp += (v = rng.uniform() + 1e-3);
        for (double& v : q) sq += (v = rng.uniform() + 1e-3);
        std::vector<double> pq;
        for (double a : p)
            for (double b : q) pq.push_back((a / sp) * (b / sq));
        for (double& v : p) v /= sp;
        for (double& v : q) v /= sq;
        const double lhs = metric::effective_features(dist_of(pq));
        const double rhs = metric::effective_features(dist_of(p)) * metric::effective_features(dist_of(q));
        worst = std::max(worst, std::abs(lhs - rhs) / rhs);
    }
    o.expect(worst <= tol, "F(p x q) = F(p) F(q), worst relative error " + num(worst));

    bool uniform_ok = true;
    for (std::size_t D : {1, 2, 3, 7, 40, 1000, 4096}) {
        Matrix Z(D, 3);
        for (std::size_t i = 0; i < D; ++i) Z(i, 1) = 0.25;
        uniform_ok = uniform_ok && metric::effective_features(metric::feature_probabilities(Z)) ==
                                       static_cast<double>(D);
    }
    o.expect(uniform_ok, "uniform distribution gives F = D exactly");

    // Channel budgets summed directly from the NCHW buffer.
    metric::Tensor4 t{3, 5, 4, 2, {}};
    t.data.resize(3 * 5 * 4 * 2);
    for (double& v : t.data) v = rng.bernoulli(0.4) ? 0.0 : rng.normal();
    std::vector<double> budget(5, 0.0);
    for (std::size_t i = 0; i < t.data.size(); ++i) budget[(i / 8) % 5] += std::abs(t.data[i]);
    const double total = std::accumulate(budget.begin(), budget.end(), 0.0);
    const auto cnn = metric::cnn_feature_probabilities(t);
    double cnn_err = 0.0;
    for (std::size_t c = 0; c < 5; ++c) cnn_err = std::max(cnn_err, std::abs(cnn.p[c] - budget[c] / total));
    o.expect(cnn_err <= 1e-15, "CNN channel aggregation matches the reshape oracle (max error " + num(cnn_err) + ")");

    // Rank demo: a trained SAE's reconstructions stay in the N-dim input space.
    Matrix X(6, 600);
    for (std::size_t s = 0; s < 600; ++s) {
        const std::size_t k = rng.below(6);
        X(k, s) = rng.uniform(0.5, 1.5);
        X((k + 1) % 6, s) = 0.3 * rng.uniform();
    }
    sae::SaeConfig cfg;
    cfg.N = 6;
    cfg.D = 24;
    cfg.epochs = 50;
    cfg.seed = 3;
    const auto fitted = sae::train(cfg, X);
    const Matrix Z = sae::encode(fitted.sae, X);
    const Matrix lifted = matmul(fitted.sae.W_enc, sae::decode(fitted.sae, Z));
    const auto r_lifted = sae::numerical_rank(sae::covariance_spectrum(lifted));
    const auto r_codes = sae::numerical_rank(sae::covariance_spectrum(Z));
    o.expect(r_lifted <= 6, "covariance rank of lifted reconstructions " + std::to_string(r_lifted) + " <= N = 6");
    o.expect(r_codes > 6, "covariance rank of codes " + std::to_string(r_codes) + " > N = 6");
    return o;
}

// ---------------------------------------------------------------- 6: gradients

double min_abs(const Matrix& m) {
    double best = INFINITY;
    for (double v : m.data()) best = std::min(best, std::abs(v));
    return best;
}

Matrix as_row(const std::vector<double>& v) {
    Matrix m(1, v.size());
    std::copy(v.begin(), v.end(), m.data().begin());
    return m;
}

std::vector<double> from_row(const Matrix& m) { return {m.data().begin(), m.data().end()}; }

Outcome criterion_gradients(const Context& ctx) {
    Outcome o;
    const double tol = ctx.unit.at("gradient_rel_tol");
    const std::size_t points = ctx.unit.at("gradient_points");
    Rng rng(derive_seed(0, "acceptance-gradients"));

    {
        toy::ToyConfig cfg;
        cfg.sparsity = 0.5;
        const auto w = toy::importance_weights(cfg);
        double worst = 0.0;
        for (std::size_t k = 0; k < points;) {
            toy::ToyModel m = toy::init_model(cfg, rng);
            for (double& b : m.b) b = rng.uniform(-0.3, 0.3);
            const Matrix f = toy::sample_features(cfg, rng, 16);
            Matrix pre = matmul_tn(m.W, matmul(m.W, f));
            add_column_broadcast(pre, m.b);
            if (min_abs(pre) < 1e-4) continue;
            const auto g = toy::loss_and_grad(m, f, w);
            worst = std::max(worst, grad_check(
                                        [&](const Matrix& W) {
                                            auto c = m;
                                            c.W = W;
                                            return toy::loss(c, f, w);
                                        },
                                        g.grad_W, m.W));
            worst = std::max(worst, grad_check(
                                        [&](const Matrix& b) {
                                            auto c = m;
                                            c.b = from_row(b);
                                            return toy::loss(c, f, w);
                                        },
                                        as_row(g.grad_b), as_row(m.b)));
            ++k;
        }
        o.expect(worst < tol, "toy model: worst relative error " + num(worst));
    }
    {
        sae::SaeConfig cfg;
        cfg.N = 5;
        cfg.D = 12;
        const double l1 = 0.1;
        double worst = 0.0;
        for (std::size_t k = 0; k < points;) {
            sae::SparseAutoencoder s = sae::init_sae(cfg, rng);
            for (double& b : s.b) b = rng.uniform(-0.2, 0.2);
            Matrix X(5, 10);
            for (double& v : X.data()) v = rng.normal();
            Matrix pre = matmul(s.W_enc, X);
            add_column_broadcast(pre, s.b);
            if (min_abs(pre) < 1e-4) continue;
            const auto g = sae::loss_and_grad(s, X, l1);
            worst = std::max(worst, grad_check(
                                        [&](const Matrix& W) {
                                            auto c = s;
                                            c.W_enc = W;
                                            return sae::evaluate(c, X, l1).loss;
                                        },
                                        g.grad_W, s.W_enc));
            worst = std::max(worst, grad_check(
                                        [&](const Matrix& b) {
                                            auto c = s;
                                            c.b = from_row(b);
                                            return sae::evaluate(c, X, l1).loss;
                                        },
                                        as_row(g.grad_b), as_row(s.b)));
            ++k;
        }
        o.expect(worst < tol, "SAE: worst relative error " + num(worst));
    }
    {
        tasks::ParityConfig pc;
        pc.n_samples = 64;
        Rng data_rng(derive_seed(0, "acceptance-parity"));
        const auto d = tasks::gen_parity(pc, data_rng);
        tasks::MlpConfig cfg;
        cfg.hidden = 12;
        double worst = 0.0;
        for (std::size_t k = 0; k < points;) {
            const auto m = tasks::init_mlp(cfg, rng);
            std::vector<std::size_t> idx(8);
            for (auto& i : idx) i = rng.below(64);
            const Matrix X = gather_columns(d.X, idx);
            std::vector<double> y;
            for (auto i : idx) y.push_back(d.y[i]);
            Matrix pre = matmul(m.W1, X);
            add_column_broadcast(pre, m.b1);
            if (min_abs(pre) < 1e-4) continue;
            const Matrix mask = tasks::dropout_mask(rng, 12, 8, 0.25);
            const Matrix* mp = k % 2 ? &mask : nullptr;
            const auto g = tasks::loss_and_grad(m, X, y, mp);
            auto with = [&](auto edit) {
                auto c = m;
                edit(c);
                return tasks::loss_and_grad(c, X, y, mp).loss;
            };
            worst = std::max(worst, grad_check([&](const Matrix& W) { return with([&](auto& c) { c.W1 = W; }); },
                                               g.grad_W1, m.W1));
            worst = std::max(worst, grad_check([&](const Matrix& W) { return with([&](auto& c) { c.W2 = W; }); },
                                               g.grad_W2, m.W2));
            worst = std::max(worst,
                             grad_check([&](const Matrix& b) { return with([&](auto& c) { c.b1 = from_row(b); }); },
                                        as_row(g.grad_b1), as_row(m.b1)));
            worst = std::max(worst,
                             grad_check([&](const Matrix& b) { return with([&](auto& c) { c.b2 = from_row(b); }); },
                                        as_row(g.grad_b2), as_row(m.b2)));
            ++k;
        }
        o.expect(worst < tol, "parity MLP: worst relative error " + num(worst));
    }
    {
        tasks::GrokConfig cfg;
        cfg.modulus = 13;
        cfg.embed_dim = 5;
        cfg.hidden = 8;
        double worst = 0.0;
        for (std::size_t k = 0; k < points; ++k) {
            const auto m = tasks::init_grok(cfg, rng);
            std::vector<std::size_t> pairs(6);
            for (auto& p : pairs) p = rng.below(13 * 13);
            const auto g = tasks::loss_and_grad(m, pairs);
            auto with = [&](auto edit) {
                auto c = m;
                edit(c);
                return tasks::loss_and_grad(c, pairs).loss;
            };
            worst = std::max(worst, grad_check([&](const Matrix& W) { return with([&](auto& c) { c.W1 = W; }); },
                                               g.W1, m.W1));
            worst = std::max(worst, grad_check([&](const Matrix& W) { return with([&](auto& c) { c.W2 = W; }); },
                                               g.W2, m.W2));
            worst = std::max(worst, grad_check([&](const Matrix& W) { return with([&](auto& c) { c.W3 = W; }); },
                                               g.W3, m.W3));
            worst = std::max(worst, grad_check([&](const Matrix& E) { return with([&](auto& c) { c.embed_a = E; }); },
                                               g.embed_a, m.embed_a));
            worst = std::max(worst, grad_check([&](const Matrix& E) { return with([&](auto& c) { c.embed_b = E; }); },
                                               g.embed_b, m.embed_b));
        }
        o.expect(worst < tol, "grokking MLP: worst relative error " + num(worst));
    }
    return o;
}

// ---------------------------------------------------------------- 7: optimality

Outcome criterion_optimality(const Context& ctx) {
    Outcome o;
    toy::ToyConfig tc;
    tc.sparsity = ctx.unit.at("optimality_sparsity");
    tc.seed = derive_seed(0, "acceptance-optimality");
    const auto trained = toy::train(tc);
    Rng act_rng(derive_seed(tc.seed, "activations"));
    const Matrix X = matmul(trained.model.W, toy::sample_features(tc, act_rng, 10000));
    sae::SaeConfig sc;
    sc.N = tc.N;
    sc.D = 40;
    sc.l1 = 0.1;
    sc.seed = derive_seed(tc.seed, "sae");
    const auto fitted = sae::train(sc, X);
    Rng init_rng(derive_seed(sc.seed, "sae-train"));
    const auto after = sae::optimality_residual(fitted.sae, X, sc.l1);
    const auto before = sae::optimality_residual(sae::init_sae(sc, init_rng), X, sc.l1);
    const double limit = ctx.unit.at("optimality_median_max");
    o.expect(after.has_value() && after->median < limit,
             "trained SAE median residual " + (after ? num(after->median) : std::string("n/a")) + " < " +
                 num(limit));
    o.expect(after && before && after->median < before->median,
             "below the untrained SAE's median " + (before ? num(before->median) : std::string("n/a")));
    return o;
}

// ---------------------------------------------------------------- 8: determinism

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome criterion_determinism(const Context& ctx) {
    Outcome o;
    const auto threads = ctx.unit.at("determinism_threads").get<std::vector<std::size_t>>();
    const json toy_small = {
        {"n_models", 6}, {"activation_samples", 1000}, {"toy", {{"steps", 500}}}, {"sae", {{"epochs", 10}}}};
    const json dict_small = {{"parity", {{"n_samples", 600}}},
                             {"mlp", {{"hidden", 16}, {"epochs", 20}}},
                             {"factors", {1, 2}},
                             {"l1s", {0.1, 10.0}},
                             {"instances", 2},
                             {"sae", {{"epochs", 10}}}};
    const json drop_small = {{"parity", {{"n_samples", 600}}},
                             {"mlp", {{"epochs", 20}}},
                             {"hs", {8, 16}},
                             {"rates", {0.0, 0.5}},
                             {"seeds", 2},
                             {"sae", {{"epochs", 10}}}};
    const json grok_small = {
        {"grok", {{"modulus", 13}, {"steps", 600}, {"checkpoint_every", 100}, {"hidden", 16}, {"embed_dim", 6}, {"batch", 32}}},
        {"sae", {{"epochs", 10}}}};

    struct Exp {
        const char* file;
        std::function<void(const harness::RunOptions&)> run;
    };
    const std::vector<Exp> exps = {
        {"toy_validation.csv",
         [&](const auto& opts) { harness::exp_toy_validation(harness::toy_validation_params(1.0, toy_small), opts); }},
        {"dict_scaling.csv",
         [&](const auto& opts) { harness::exp_dict_scaling(harness::dict_scaling_params(1.0, dict_small), opts); }},
        {"dropout.csv", [&](const auto& opts) { harness::exp_dropout(harness::dropout_params(1.0, drop_small), opts); }},
        {"grokking.csv",
         [&](const auto& opts) { harness::exp_grokking(harness::grokking_params(1.0, grok_small), opts); }},
    };
    const auto base = ctx.out / "determinism";
    std::filesystem::remove_all(base);
    for (const auto& e : exps) {
        std::vector<std::string> outputs;
        std::size_t run = 0;
        for (int repeat = 0; repeat < 2; ++repeat)
            for (std::size_t th : threads) {
                harness::RunOptions opts;
                opts.seed = 11;
                opts.threads = th;
                opts.out_dir = base / ("run" + std::to_string(run++));
                e.run(opts);
                outputs.push_back(slurp(opts.out_dir / e.file));
            }
        const bool same = std::all_of(outputs.begin(), outputs.end(),
                                      [&](const std::string& s) { return !s.empty() && s == outputs.front(); });
        o.expect(same, std::string(e.file) + ": " + std::to_string(outputs.size()) +
                           " fresh runs over thread counts byte-identical");
    }
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance run"};
    std::string manifest_path = SUPMETER_MANIFEST, out = "acceptance_out";
    std::vector<int> only;
    double scale = 0.0;
    std::size_t threads = 0;
    app.add_option("--manifest", manifest_path)->check(CLI::ExistingFile);
    app.add_option("--out", out, "Working directory; experiment tables are cached here between runs");
    app.add_option("--only", only, "Criterion numbers to run (default: all)");
    app.add_option("--scale", scale, "Override the manifest's acceptance scale")->check(CLI::IsMember({0.25, 0.5, 1.0}));
    app.add_option("--threads", threads, "Workers for the experiment sweeps (default: hardware threads)");
    CLI11_PARSE(app, argc, argv);

    Context ctx;
    try {
        ctx.manifest = harness::load_manifest(manifest_path);
        ctx.scale = scale > 0.0 ? scale : ctx.manifest.at("acceptance_scale").get<double>();
        ctx.criteria = harness::criteria_for(ctx.manifest, ctx.scale);
        ctx.unit = ctx.manifest.at("unit");
    } catch (const std::exception& e) {
        std::cerr << "manifest: " << e.what() << '\n';
        return 2;
    }
    ctx.out = out;
    ctx.threads = threads > 0 ? threads : std::max(1U, std::thread::hardware_concurrency());
    std::filesystem::create_directories(ctx.out);

    struct Criterion {
        int id;
        const char* name;
        Outcome (*fn)(const Context&);
    };
    const Criterion all[] = {
        {1, "toy validation", criterion_toy},
        {2, "dictionary scaling", criterion_dict},
        {3, "dropout", criterion_dropout},
        {4, "grokking", criterion_grokking},
        {5, "metric properties", criterion_metric},
        {6, "gradients", criterion_gradients},
        {7, "optimality diagnostic", criterion_optimality},
        {8, "determinism", criterion_determinism},
    };
    const std::set<int> selected(only.begin(), only.end());
    std::vector<std::string> summary;
    bool ok = true;
    for (const auto& c : all) {
        if (!selected.empty() && !selected.count(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome res;
        try {
            res = c.fn(ctx);
        } catch (const std::exception& e) {
            res.expect(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::ostringstream line;
        line << (res.pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name << ") [" << num(secs)
             << " s]";
        std::cout << line.str() << '\n';
        for (const auto& n : res.notes) std::cout << "    " << n << '\n';
        std::cout.flush();
        summary.push_back(line.str());
        ok = ok && res.pass;
    }
    std::cout << "\nsummary (scale " << num(ctx.scale) << "):\n";
    for (const auto& s : summary) std::cout << "  " << s << '\n';
    return ok ? 0 : 1;
}
