#include "supmeter/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <set>

#include "supmeter/errors.hpp"
#include "supmeter/supmetric.hpp"

namespace supmeter::harness {

namespace {

using nlohmann::json;

void log_line(const RunOptions& opts, const std::string& msg) {
    if (opts.log) opts.log(msg);
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (j.is_null()) return;
    if (!j.is_object()) throw ConfigError(where + ": overrides must be a JSON object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& item : j.items()) {
        if (!ok.count(item.key())) throw ConfigError(where + ": unknown field '" + item.key() + "'");
    }
}

template <class T>
void take(const json& j, const char* key, T& field) {
    if (j.contains(key)) field = j.at(key).get<T>();
}

const json& section(const json& j, const char* key) {
    static const json empty = json::object();
    return j.is_object() && j.contains(key) ? j.at(key) : empty;
}

std::size_t preset(double scale, std::size_t full, std::size_t half, std::size_t quarter) {
    if (scale == 1.0) return full;
    if (scale == 0.5) return half;
    if (scale == 0.25) return quarter;
    throw ConfigError("scale must be one of 0.25, 0.5, 1.0");
}

std::string stage_name(tasks::HiddenStage s) { return s == tasks::HiddenStage::pre_relu ? "pre_relu" : "post_relu"; }

tasks::HiddenStage stage_from(const json& j, tasks::HiddenStage base) {
    if (!j.contains("stage")) return base;
    const auto s = j.at("stage").get<std::string>();
    if (s == "pre_relu") return tasks::HiddenStage::pre_relu;
    if (s == "post_relu") return tasks::HiddenStage::post_relu;
    throw ConfigError("stage must be pre_relu or post_relu");
}

json without_seed(json j) {
    j.erase("seed");
    return j;
}

std::string num(double v) { return format_number(v); }
std::string num(std::size_t v) { return format_number(static_cast<std::uint64_t>(v)); }

/// Encodes X with an SAE trained by sae::train, honoring its standardize flag.
Matrix sae_input(const sae::SaeConfig& cfg, const Matrix& X) {
    return cfg.standardize ? sae::standardize_rows(X) : X;
}

/// Measures an SAE code; a fully dead code becomes a "dead" row with F = 0.
void record_measurement(CellOutput& out, const Matrix& Z, std::size_t neurons) {
    try {
        const auto rep = metric::make_report(metric::feature_probabilities(Z), neurons);
        out.values["F"] = num(rep.F);
        out.values["psi"] = num(rep.psi);
        out.values["H"] = num(rep.H);
        out.values["hill_q0"] = num(rep.hill_q0);
        out.values["hill_q2"] = num(rep.hill_q2);
        out.values["dead_count"] = num(rep.dead_count);
    } catch (const DeadRepresentationError&) {
        out.status = "dead";
        out.values["F"] = "0";
        out.values["psi"] = "0";
        out.values["dead_count"] = num(Z.rows());
    }
}

std::size_t dict_size(double factor, std::size_t h, std::size_t cap) {
    const auto d = static_cast<std::size_t>(std::llround(factor * static_cast<double>(h)));
    return std::clamp<std::size_t>(d, 1, cap);
}

/// Parity data plus a trained MLP, built at most once per key and shared by cells.
struct MlpArtifacts {
    tasks::ParityData data;
    tasks::MlpTrainResult mlp;
    Matrix hidden;  ///< activations the SAEs train on
};

class MlpCache {
public:
    using Builder = std::function<MlpArtifacts()>;

    const MlpArtifacts& get(const std::string& key, const Builder& build) {
        Slot* slot = nullptr;
        {
            std::lock_guard<std::mutex> lock(mu_);
            auto& p = slots_[key];
            if (!p) p = std::make_unique<Slot>();
            slot = p.get();
        }
        std::call_once(slot->once, [&] { slot->value = build(); });
        return slot->value;
    }

private:
    struct Slot {
        std::once_flag once;
        MlpArtifacts value;
    };
    std::mutex mu_;
    std::map<std::string, std::unique_ptr<Slot>> slots_;
};

MlpArtifacts build_parity_mlp(const tasks::ParityConfig& parity, const tasks::MlpConfig& mlp, std::uint64_t seed,
                              std::size_t activation_samples, tasks::HiddenStage stage) {
    MlpArtifacts a;
    Rng data_rng(derive_seed(seed, "parity-data"));
    a.data = tasks::gen_parity(parity, data_rng);
    tasks::MlpConfig mc = mlp;
    mc.input_dim = parity.input_dim();
    mc.seed = derive_seed(seed, "parity-mlp");
    a.mlp = tasks::train_parity_mlp(mc, a.data);
    std::vector<std::size_t> idx = a.data.train;
    if (activation_samples > 0 && activation_samples < idx.size()) idx.resize(activation_samples);
    a.hidden = tasks::extract_hidden(a.mlp.model, gather_columns(a.data.X, idx), stage);
    return a;
}

}  // namespace

std::vector<std::uint64_t> RunOptions::seed_list(std::size_t preset_count) const {
    const std::size_t n = seeds > 0 ? seeds : preset_count;
    std::vector<std::uint64_t> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = seed + i;
    return out;
}

void RunOptions::validate() const {
    preset(scale, 0, 0, 0);
    if (threads == 0) throw ConfigError("threads must be positive");
}

json overrides_for(const json& config, const std::string& experiment) {
    if (config.is_object() && config.contains(experiment)) return config.at(experiment);
    return config.is_null() ? json::object() : config;
}

// ---------------------------------------------------------------- toy validation

json ToyValidationParams::to_json() const {
    return {{"n_models", n_models},
            {"s_min", s_min},
            {"s_max", s_max},
            {"toy", toy::to_json(toy)},
            {"activation_samples", activation_samples},
            {"sae", sae::to_json(sae)},
            {"bootstrap", bootstrap},
            {"max_failure_fraction", max_failure_fraction},
            {"seeds", seeds}};
}

ToyValidationParams toy_validation_params(double scale, const json& overrides) {
    ToyValidationParams p;
    p.n_models = preset(scale, 100, 50, 25);
    p.sae.D = 40;
    p.sae.l1 = 0.1;
    check_keys(overrides,
               {"n_models", "s_min", "s_max", "toy", "activation_samples", "sae", "bootstrap", "max_failure_fraction",
                "seeds"},
               "toy_validation");
    take(overrides, "n_models", p.n_models);
    take(overrides, "s_min", p.s_min);
    take(overrides, "s_max", p.s_max);
    take(overrides, "activation_samples", p.activation_samples);
    take(overrides, "bootstrap", p.bootstrap);
    take(overrides, "max_failure_fraction", p.max_failure_fraction);
    take(overrides, "seeds", p.seeds);
    p.toy = toy::config_from_json(section(overrides, "toy"), p.toy);
    p.sae = sae::config_from_json(section(overrides, "sae"), p.sae);
    p.sae.N = p.toy.N;
    if (p.n_models < 3) throw ConfigError("toy_validation: need at least 3 models for a correlation");
    if (!(p.s_min >= 0.0 && p.s_min < p.s_max && p.s_max < 1.0)) {
        throw ConfigError("toy_validation: need 0 <= s_min < s_max < 1");
    }
    p.toy.validate();
    return p;
}

std::vector<double> sparsity_grid(std::size_t n, double s_min, double s_max) {
    if (n == 0) return {};
    const double lo = -std::log1p(-s_min), hi = -std::log1p(-s_max);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
        out[i] = -std::expm1(-(lo + t * (hi - lo)));
    }
    out.front() = s_min;
    out.back() = s_max;
    return out;
}

namespace {

double off_diagonal_norm(const Matrix& G) {
    double acc = 0.0;
    for (std::size_t i = 0; i < G.rows(); ++i)
        for (std::size_t j = 0; j < G.cols(); ++j)
            if (i != j) acc += G(i, j) * G(i, j);
    return std::sqrt(acc);
}

CellOutput toy_cell(const ToyValidationParams& p, double sparsity, std::size_t index, std::uint64_t seed) {
    CellOutput out;
    out.values["model_index"] = num(index);
    out.values["sparsity"] = num(sparsity);
    toy::ToyConfig tc = p.toy;
    tc.sparsity = sparsity;
    tc.seed = derive_seed(seed, "toy-model", index);
    try {
        const auto trained = toy::train(tc);
        out.values["toy_initial_loss"] = num(trained.initial_loss);
        out.values["toy_final_loss"] = num(trained.final_loss);
        out.values["toy_plateaued"] = trained.plateaued ? "1" : "0";
        out.values["psi_frob"] = num(toy::psi_frobenius(trained.model));
        out.values["offdiag_norm"] = num(off_diagonal_norm(toy::interference_matrix(trained.model)));
        const auto wdist = metric::weight_probabilities(transpose(trained.model.W));
        const double f_weights = metric::effective_features(wdist);
        out.values["F_weights"] = num(f_weights);
        out.values["psi_weights"] = num(f_weights / static_cast<double>(tc.N));

        Rng act_rng(derive_seed(seed, "toy-activations", index));
        const Matrix X = matmul(trained.model.W, toy::sample_features(tc, act_rng, p.activation_samples));
        sae::SaeConfig sc = p.sae;
        sc.N = tc.N;
        sc.seed = derive_seed(seed, "toy-sae", index);
        const auto fitted = sae::train(sc, X);
        const Matrix Xin = sae_input(sc, X);
        const double w_sq = frobenius_sq(fitted.sae.W_enc);
        out.values["sae_frob_per_D"] = num(w_sq / static_cast<double>(sc.D));
        out.values["sae_frob_per_N"] = num(w_sq / static_cast<double>(sc.N));
        out.values["sae_recon"] = num(fitted.final_losses.recon);
        out.values["sae_l1"] = num(fitted.final_losses.l1);
        if (const auto opt = sae::optimality_residual(fitted.sae, Xin, sc.l1)) {
            out.values["opt_median"] = num(opt->median);
        }
        Rng init_rng(derive_seed(sc.seed, "sae-train"));
        if (const auto opt0 = sae::optimality_residual(sae::init_sae(sc, init_rng), Xin, sc.l1)) {
            out.values["opt_median_init"] = num(opt0->median);
        }

        CellOutput measured;
        record_measurement(measured, sae::encode(fitted.sae, Xin), tc.N);
        out.status = measured.status;
        out.values["F_sae"] = measured.values["F"];
        out.values["psi_sae"] = measured.values["psi"];
        out.values["sae_dead"] = measured.values["dead_count"];
    } catch (const DivergenceError& e) {
        out.status = "diverged";
    }
    return out;
}

}  // namespace

Table exp_toy_validation(const ToyValidationParams& p, const RunOptions& opts) {
    opts.validate();
    const auto grid = sparsity_grid(p.n_models, p.s_min, p.s_max);
    json base = p.to_json();
    base.erase("seeds");
    base.erase("bootstrap");
    base.erase("max_failure_fraction");
    base.erase("n_models");
    base["toy"] = without_seed(base["toy"]);
    base["sae"] = without_seed(base["sae"]);

    std::vector<Cell> cells;
    for (std::uint64_t seed : opts.seed_list(p.seeds)) {
        for (std::size_t i = 0; i < grid.size(); ++i) {
            json key = base;
            key["kind"] = "toy_validation";
            key["model_index"] = i;
            key["sparsity"] = grid[i];
            const double S = grid[i];
            cells.push_back({config_hash(key), seed, [&p, S, i, seed, &opts] {
                                 auto out = toy_cell(p, S, i, seed);
                                 log_line(opts, "toy model " + std::to_string(i) + " seed " + std::to_string(seed) +
                                                    " S=" + num(S) + " " + out.status);
                                 return out;
                             }});
        }
    }
    const std::vector<std::string> columns{
        "model_index", "sparsity",       "toy_initial_loss", "toy_final_loss", "toy_plateaued",  "psi_frob",
        "offdiag_norm", "F_weights",     "psi_weights",      "F_sae",          "psi_sae",        "sae_dead",
        "sae_frob_per_D", "sae_frob_per_N", "sae_recon",     "sae_l1",         "opt_median",     "opt_median_init"};
    SweepStats stats;
    Table t = run_sweep(opts.out_dir / "toy_validation.csv", columns, cells, opts.threads, &stats);
    log_line(opts, "toy_validation: " + std::to_string(stats.computed) + " computed, " +
                       std::to_string(stats.reused) + " reused");

    std::size_t failed = 0;
    for (std::size_t r = 0; r < t.rows.size(); ++r) failed += t.at(r, "status") != "ok" ? 1U : 0U;
    if (failed > 0) log_line(opts, "toy_validation: " + std::to_string(failed) + " failed models excluded");
    if (static_cast<double>(failed) > p.max_failure_fraction * static_cast<double>(t.rows.size())) {
        throw ExperimentError("toy_validation: " + std::to_string(failed) + " of " + std::to_string(t.rows.size()) +
                              " models failed");
    }
    return t;
}

// ---------------------------------------------------------------- dictionary scaling

json DictScalingParams::to_json() const {
    return {{"parity", tasks::to_json(parity)},
            {"mlp", tasks::to_json(mlp)},
            {"factors", factors},
            {"l1s", l1s},
            {"max_dict", max_dict},
            {"instances", instances},
            {"sae", sae::to_json(sae)},
            {"activation_samples", activation_samples},
            {"stage", stage_name(stage)},
            {"seeds", seeds}};
}

DictScalingParams dict_scaling_params(double scale, const json& overrides) {
    DictScalingParams p;
    p.parity.n_samples = 8192;
    p.mlp.hidden = 64;
    p.instances = preset(scale, 3, 2, 1);
    p.seeds = preset(scale, 5, 2, 1);
    check_keys(overrides,
               {"parity", "mlp", "factors", "l1s", "max_dict", "instances", "sae", "activation_samples", "stage",
                "seeds"},
               "dict_scaling");
    p.parity = tasks::parity_config_from_json(section(overrides, "parity"), p.parity);
    p.mlp = tasks::mlp_config_from_json(section(overrides, "mlp"), p.mlp);
    p.sae = sae::config_from_json(section(overrides, "sae"), p.sae);
    take(overrides, "factors", p.factors);
    take(overrides, "l1s", p.l1s);
    take(overrides, "max_dict", p.max_dict);
    take(overrides, "instances", p.instances);
    take(overrides, "activation_samples", p.activation_samples);
    take(overrides, "seeds", p.seeds);
    p.stage = stage_from(overrides, p.stage);
    p.mlp.input_dim = p.parity.input_dim();
    p.parity.validate();
    p.mlp.validate();
    if (p.factors.empty() || p.l1s.empty() || p.instances == 0) {
        throw ConfigError("dict_scaling: factors, l1s and instances must be non-empty");
    }
    return p;
}

Table exp_dict_scaling(const DictScalingParams& p, const RunOptions& opts) {
    opts.validate();
    json base = p.to_json();
    base.erase("seeds");
    base.erase("instances");
    base.erase("factors");
    base.erase("l1s");
    base["mlp"] = without_seed(base["mlp"]);
    base["parity"] = without_seed(base["parity"]);
    base["sae"] = without_seed(base["sae"]);

    auto cache = std::make_shared<MlpCache>();
    std::vector<Cell> cells;
    for (std::uint64_t seed : opts.seed_list(p.seeds)) {
        for (double factor : p.factors)
            for (double l1 : p.l1s)
                for (std::size_t inst = 0; inst < p.instances; ++inst) {
                    json key = base;
                    key["kind"] = "dict_scaling";
                    key["factor"] = factor;
                    key["l1"] = l1;
                    key["instance"] = inst;
                    cells.push_back({config_hash(key), seed, [&p, &opts, cache, seed, factor, l1, inst] {
                        const auto& art = cache->get(std::to_string(seed), [&] {
                            log_line(opts, "dict_scaling: training parity MLP for seed " + std::to_string(seed));
                            return build_parity_mlp(p.parity, p.mlp, seed, p.activation_samples, p.stage);
                        });
                        CellOutput out;
                        sae::SaeConfig sc = p.sae;
                        sc.N = p.mlp.hidden;
                        sc.D = dict_size(factor, p.mlp.hidden, p.max_dict);
                        sc.l1 = l1;
                        sc.seed = derive_seed(seed, "dict-sae", inst);
                        out.values["factor"] = num(factor);
                        out.values["l1"] = num(l1);
                        out.values["instance"] = num(inst);
                        out.values["D"] = num(sc.D);
                        out.values["mlp_test_acc"] = num(art.mlp.test_accuracy);
                        try {
                            const auto fitted = sae::train(sc, art.hidden);
                            out.values["recon"] = num(fitted.final_losses.recon);
                            out.values["l1_loss"] = num(fitted.final_losses.l1);
                            record_measurement(out, sae::encode(fitted.sae, sae_input(sc, art.hidden)), sc.N);
                        } catch (const DivergenceError&) {
                            out.status = "diverged";
                        }
                        log_line(opts, "dict_scaling seed " + std::to_string(seed) + " factor " + num(factor) +
                                           " l1 " + num(l1) + " #" + std::to_string(inst) + ": F=" +
                                           (out.values.count("F") ? out.values["F"] : "-") + " " + out.status);
                        return out;
                    }});
                }
    }
    const std::vector<std::string> columns{"factor",  "l1",     "instance", "D",         "F",
                                           "psi",     "H",      "hill_q0",  "hill_q2",   "dead_count",
                                           "recon",   "l1_loss", "mlp_test_acc"};
    SweepStats stats;
    Table t = run_sweep(opts.out_dir / "dict_scaling.csv", columns, cells, opts.threads, &stats);
    log_line(opts, "dict_scaling: " + std::to_string(stats.computed) + " computed, " + std::to_string(stats.reused) +
                       " reused");
    return t;
}

// ---------------------------------------------------------------- dropout

json DropoutParams::to_json() const {
    return {{"parity", tasks::to_json(parity)},
            {"mlp", tasks::to_json(mlp)},
            {"hs", hs},
            {"rates", rates},
            {"dict_factor", dict_factor},
            {"sae", sae::to_json(sae)},
            {"activation_samples", activation_samples},
            {"stage", stage_name(stage)},
            {"seeds", seeds}};
}

DropoutParams dropout_params(double scale, const json& overrides) {
    DropoutParams p;
    p.parity.n_samples = 8192;
    p.seeds = preset(scale, 5, 3, 2);
    check_keys(overrides,
               {"parity", "mlp", "hs", "rates", "dict_factor", "sae", "activation_samples", "stage", "seeds"},
               "dropout");
    p.parity = tasks::parity_config_from_json(section(overrides, "parity"), p.parity);
    p.mlp = tasks::mlp_config_from_json(section(overrides, "mlp"), p.mlp);
    p.sae = sae::config_from_json(section(overrides, "sae"), p.sae);
    take(overrides, "hs", p.hs);
    take(overrides, "rates", p.rates);
    take(overrides, "dict_factor", p.dict_factor);
    take(overrides, "activation_samples", p.activation_samples);
    take(overrides, "seeds", p.seeds);
    p.stage = stage_from(overrides, p.stage);
    p.mlp.input_dim = p.parity.input_dim();
    p.parity.validate();
    for (double r : p.rates)
        if (!(r >= 0.0 && r < 1.0)) throw ConfigError("dropout: rates must lie in [0, 1)");
    if (p.hs.empty() || p.rates.empty()) throw ConfigError("dropout: hs and rates must be non-empty");
    return p;
}

Table exp_dropout(const DropoutParams& p, const RunOptions& opts) {
    opts.validate();
    json base = p.to_json();
    base.erase("seeds");
    base.erase("hs");
    base.erase("rates");
    base["mlp"] = without_seed(base["mlp"]);
    base["parity"] = without_seed(base["parity"]);
    base["sae"] = without_seed(base["sae"]);

    std::vector<Cell> cells;
    for (std::uint64_t seed : opts.seed_list(p.seeds))
        for (std::size_t h : p.hs)
            for (double rate : p.rates) {
                json key = base;
                key["kind"] = "dropout";
                key["h"] = h;
                key["rate"] = rate;
                cells.push_back({config_hash(key), seed, [&p, &opts, seed, h, rate] {
                    tasks::MlpConfig mc = p.mlp;
                    mc.hidden = h;
                    mc.dropout = rate;
                    CellOutput out;
                    out.values["h"] = num(h);
                    out.values["rate"] = num(rate);
                    try {
                        // Same data for every (h, rate) at this seed; the MLP seed varies with h only.
                        const auto art = build_parity_mlp(p.parity, mc, seed, p.activation_samples, p.stage);
                        out.values["test_acc"] = num(art.mlp.test_accuracy);
                        out.values["train_acc"] = num(art.mlp.train_accuracy);
                        if (art.mlp.last_epoch_units > 0) {
                            out.values["dropped_fraction"] =
                                num(static_cast<double>(art.mlp.last_epoch_dropped) /
                                    static_cast<double>(art.mlp.last_epoch_units));
                        } else {
                            out.values["dropped_fraction"] = "0";
                        }
                        sae::SaeConfig sc = p.sae;
                        sc.N = h;
                        sc.D = dict_size(p.dict_factor, h, std::numeric_limits<std::size_t>::max());
                        sc.seed = derive_seed(seed, "dropout-sae");
                        out.values["D"] = num(sc.D);
                        const auto fitted = sae::train(sc, art.hidden);
                        out.values["recon"] = num(fitted.final_losses.recon);
                        record_measurement(out, sae::encode(fitted.sae, sae_input(sc, art.hidden)), h);
                    } catch (const DivergenceError&) {
                        out.status = "diverged";
                    }
                    log_line(opts, "dropout seed " + std::to_string(seed) + " h " + std::to_string(h) + " rate " +
                                       num(rate) + ": F=" + (out.values.count("F") ? out.values["F"] : "-") + " " +
                                       out.status);
                    return out;
                }});
            }
    const std::vector<std::string> columns{"h",    "rate", "D",    "F",      "psi",       "H",
                                           "hill_q0", "hill_q2", "dead_count", "recon", "test_acc", "train_acc",
                                           "dropped_fraction"};
    SweepStats stats;
    Table t = run_sweep(opts.out_dir / "dropout.csv", columns, cells, opts.threads, &stats);
    log_line(opts, "dropout: " + std::to_string(stats.computed) + " computed, " + std::to_string(stats.reused) +
                       " reused");
    return t;
}

// ---------------------------------------------------------------- grokking

json GrokkingParams::to_json() const {
    return {{"grok", tasks::to_json(grok)},
            {"dict_factor", dict_factor},
            {"sae", sae::to_json(sae)},
            {"measure_every", measure_every},
            {"seeds", seeds}};
}

GrokkingParams grokking_params(double scale, const json& overrides) {
    GrokkingParams p;
    p.measure_every = preset(scale, 1, 2, 4);
    // The stock decay never leaves the memorization plateau within the step
    // budget; 0.2 groks after a long plateau. At l1 = 0.1 the SAE codes stay
    // dense enough that F barely moves across the transition.
    p.grok.weight_decay = 0.2;
    p.sae.l1 = 1.0;
    check_keys(overrides, {"grok", "dict_factor", "sae", "measure_every", "seeds"}, "grokking");
    p.grok = tasks::grok_config_from_json(section(overrides, "grok"), p.grok);
    p.sae = sae::config_from_json(section(overrides, "sae"), p.sae);
    take(overrides, "dict_factor", p.dict_factor);
    take(overrides, "measure_every", p.measure_every);
    take(overrides, "seeds", p.seeds);
    p.grok.validate();
    if (p.measure_every == 0) throw ConfigError("grokking: measure_every must be positive");
    return p;
}

Table exp_grokking(const GrokkingParams& p, const RunOptions& opts) {
    opts.validate();
    json base = p.to_json();
    base.erase("seeds");
    base["grok"] = without_seed(base["grok"]);
    base["sae"] = without_seed(base["sae"]);

    struct RunSlot {
        std::once_flag once;
        tasks::GrokRun run;
        std::vector<std::size_t> all_pairs;
    };
    const auto seeds = opts.seed_list(p.seeds);
    auto slots = std::make_shared<std::vector<RunSlot>>(seeds.size());
    const std::size_t n_ckpt = p.grok.steps / p.grok.checkpoint_every;

    std::vector<Cell> cells;
    for (std::size_t si = 0; si < seeds.size(); ++si) {
        const std::uint64_t seed = seeds[si];
        for (std::size_t k = p.measure_every - 1; k < n_ckpt; k += p.measure_every) {
            json key = base;
            key["kind"] = "grokking";
            key["checkpoint"] = k;
            cells.push_back({config_hash(key), seed, [&p, &opts, slots, si, seed, k] {
                RunSlot& slot = (*slots)[si];
                std::call_once(slot.once, [&] {
                    log_line(opts, "grokking: training seed " + std::to_string(seed));
                    tasks::GrokConfig gc = p.grok;
                    gc.seed = seed;
                    slot.run = tasks::train_grok(gc);
                    slot.all_pairs.resize(gc.modulus * gc.modulus);
                    for (std::size_t i = 0; i < slot.all_pairs.size(); ++i) slot.all_pairs[i] = i;
                });
                const auto& ck = slot.run.checkpoints.at(k);
                CellOutput out;
                out.values["checkpoint"] = num(k);
                out.values["step"] = num(ck.step);
                out.values["train_acc"] = num(ck.train_acc);
                out.values["test_acc"] = num(ck.test_acc);
                out.values["train_loss"] = num(ck.train_loss);
                const Matrix H = tasks::hidden_activations(ck.model, slot.all_pairs);
                sae::SaeConfig sc = p.sae;
                sc.N = p.grok.hidden;
                sc.D = dict_size(p.dict_factor, p.grok.hidden, std::numeric_limits<std::size_t>::max());
                sc.seed = derive_seed(seed, "grok-sae", k);
                out.values["D"] = num(sc.D);
                try {
                    const auto fitted = sae::train(sc, H);
                    out.values["recon"] = num(fitted.final_losses.recon);
                    record_measurement(out, sae::encode(fitted.sae, sae_input(sc, H)), sc.N);
                } catch (const DivergenceError&) {
                    out.status = "diverged";
                }
                log_line(opts, "grokking seed " + std::to_string(seed) + " step " + num(ck.step) + ": test_acc=" +
                                   num(ck.test_acc) + " F=" + (out.values.count("F") ? out.values["F"] : "-"));
                return out;
            }});
        }
    }
    const std::vector<std::string> columns{"checkpoint", "step",    "train_acc", "test_acc",   "train_loss", "D",
                                           "F",          "psi",     "H",         "hill_q0",    "hill_q2",
                                           "dead_count", "recon"};
    SweepStats stats;
    Table t = run_sweep(opts.out_dir / "grokking.csv", columns, cells, opts.threads, &stats);
    log_line(opts, "grokking: " + std::to_string(stats.computed) + " computed, " + std::to_string(stats.reused) +
                       " reused");
    return t;
}

}  // namespace supmeter::harness
