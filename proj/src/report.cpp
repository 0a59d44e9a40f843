#include "supmeter/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "supmeter/errors.hpp"
#include "supmeter/rng.hpp"
#include "supmeter/stats.hpp"

namespace supmeter::harness {

using nlohmann::json;

bool Evaluation::passed() const {
    return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

std::vector<double> median3(std::span<const double> v) {
    std::vector<double> out(v.begin(), v.end());
    for (std::size_t i = 1; i + 1 < v.size(); ++i) {
        double w[3] = {v[i - 1], v[i], v[i + 1]};
        std::sort(w, w + 3);
        out[i] = w[1];
    }
    return out;
}

json load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError(path.string() + ": " + e.what());
    }
    if (j.value("schema_version", -1) != kSchemaVersion) {
        throw ConfigError(path.string() + ": manifest schema_version does not match this build");
    }
    return j;
}

json criteria_for(const json& manifest, double scale) {
    json c = manifest.at("criteria");
    const json& table = manifest.at("scale_overrides");
    for (const auto& item : table.items()) {
        if (std::stod(item.key()) == scale) {
            c.merge_patch(item.value());
            return c;
        }
    }
    throw ConfigError("manifest has no criteria for scale " + format_number(scale));
}

namespace {

bool row_ok(const Table& t, std::size_t r) { return t.at(r, "status") == "ok"; }

/// ok rows, plus dead rows whose F was recorded as 0.
bool row_measured(const Table& t, std::size_t r) {
    const auto& s = t.at(r, "status");
    return s == "ok" || s == "dead";
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}

double mean(const std::vector<double>& v) {
    if (v.empty()) return std::nan("");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double safe_pearson(std::span<const double> x, std::span<const double> y) {
    try {
        return stats::pearson_r(x, y);
    } catch (const StatisticsError&) {
        return std::nan("");
    }
}

}  // namespace

Evaluation evaluate_toy_validation(const Table& t, const json& c) {
    Evaluation ev;
    std::vector<double> frob, sae, weights, frob_d;
    std::map<std::string, std::vector<std::size_t>> by_seed;
    std::size_t failed = 0;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        if (!row_ok(t, r)) {
            ++failed;
            continue;
        }
        by_seed[t.at(r, "seed")].push_back(frob.size());
        frob.push_back(t.number(r, "psi_frob"));
        sae.push_back(t.number(r, "psi_sae"));
        weights.push_back(t.number(r, "psi_weights"));
        frob_d.push_back(t.number(r, "sae_frob_per_D"));
    }
    const double r_sae = safe_pearson(sae, frob);
    const double r_weights = safe_pearson(weights, frob);

    const auto range = c.at("frob_range").get<std::vector<double>>();
    double outside = 0.0;
    for (double v : frob_d) outside += (v < range.at(0) || v > range.at(1)) ? 1.0 : 0.0;
    const double outside_frac = frob_d.empty() ? 0.0 : outside / static_cast<double>(frob_d.size());

    // Spread of r: bootstrap over models, and across seeds when there are several.
    const std::size_t B = c.value("bootstrap", std::size_t{1000});
    Rng rng(derive_seed(c.value("bootstrap_seed", std::uint64_t{0}), "bootstrap"));
    std::vector<double> boot;
    const std::size_t n = frob.size();
    if (n >= 3) {
        std::vector<double> xs(n), ys(n);
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t k = rng.below(n);
                xs[i] = sae[k];
                ys[i] = frob[k];
            }
            const double r = safe_pearson(xs, ys);
            if (!std::isnan(r)) boot.push_back(r);
        }
    }
    std::vector<double> per_seed;
    for (const auto& [seed, idx] : by_seed) {
        std::vector<double> xs, ys;
        for (auto i : idx) xs.push_back(sae[i]), ys.push_back(frob[i]);
        if (xs.size() >= 3) per_seed.push_back(safe_pearson(xs, ys));
    }
    const auto boot_summary = boot.size() >= 2 ? stats::summarize(boot) : stats::Summary{};
    std::vector<double> frob_d_sorted = frob_d;
    std::sort(frob_d_sorted.begin(), frob_d_sorted.end());

    ev.summary = {{"models", n},
                  {"failed", failed},
                  {"r_sae", r_sae},
                  {"r_sae_bootstrap_mean", boot_summary.mean},
                  {"r_sae_bootstrap_std", boot_summary.std},
                  {"r_sae_per_seed", per_seed},
                  {"r_weights", r_weights},
                  {"sae_frob_per_D_min", frob_d_sorted.empty() ? 0.0 : frob_d_sorted.front()},
                  {"sae_frob_per_D_max", frob_d_sorted.empty() ? 0.0 : frob_d_sorted.back()},
                  {"sae_frob_outside_fraction", outside_frac}};

    const double r_sae_min = c.at("r_sae_min"), r_w_min = c.at("r_weights_min");
    const double out_min = c.at("outside_fraction_min");
    ev.checks.push_back({"r(SAE activations, Frobenius)", r_sae >= r_sae_min, r_sae, ">= " + fmt(r_sae_min)});
    ev.checks.push_back({"r(toy weights, Frobenius)", r_weights >= r_w_min, r_weights, ">= " + fmt(r_w_min)});
    ev.checks.push_back({"SAE weight statistic outside reference range", outside_frac >= out_min, outside_frac,
                         "fraction outside [" + fmt(range[0]) + ", " + fmt(range[1]) + "] >= " + fmt(out_min)});
    return ev;
}

Evaluation evaluate_dict_scaling(const Table& t, const json& c) {
    Evaluation ev;
    // l1 -> factor -> F values
    std::map<double, std::map<double, std::vector<double>>> F;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        if (!row_measured(t, r)) continue;
        F[t.number(r, "l1")][t.number(r, "factor")].push_back(t.number(r, "F"));
    }
    auto mean_F = [&](double l1, double factor) {
        const auto a = F.find(l1);
        if (a == F.end()) return std::nan("");
        const auto b = a->second.find(factor);
        return b == a->second.end() ? std::nan("") : mean(b->second);
    };
    json curves = json::object();
    for (const auto& [l1, by_factor] : F) {
        json curve = json::array();
        for (const auto& [factor, vals] : by_factor) curve.push_back({{"factor", factor}, {"mean_F", mean(vals)}});
        curves[fmt(l1)] = curve;
    }
    ev.summary["curves"] = curves;

    const double lo = c.at("plateau_factor_low"), hi = c.at("plateau_factor_high");
    const double max_ratio = c.at("plateau_ratio_max");
    for (double l1 : c.at("plateau_l1s").get<std::vector<double>>()) {
        const double ratio = mean_F(l1, hi) / mean_F(l1, lo);
        ev.checks.push_back({"plateau at l1=" + fmt(l1), ratio < max_ratio, ratio,
                             "F(" + fmt(hi) + "x)/F(" + fmt(lo) + "x) < " + fmt(max_ratio)});
    }

    const double growth = c.at("growth_l1");
    std::size_t rises = 0, steps = 0;
    if (const auto it = F.find(growth); it != F.end()) {
        double prev = std::nan("");
        for (const auto& [factor, vals] : it->second) {
            const double m = mean(vals);
            if (!std::isnan(prev)) {
                ++steps;
                rises += m > prev ? 1U : 0U;
            }
            prev = m;
        }
    }
    ev.checks.push_back({"F strictly increasing at l1=" + fmt(growth), steps > 0 && rises == steps,
                         static_cast<double>(rises), "all " + std::to_string(steps) + " factor steps increase"});

    const double collapse = c.at("collapse_l1"), ref = c.at("collapse_reference_l1");
    const double at = c.at("collapse_factor"), max_frac = c.at("collapse_fraction_max");
    const double frac = mean_F(collapse, at) / mean_F(ref, at);
    ev.checks.push_back({"collapse at l1=" + fmt(collapse), frac < max_frac, frac,
                         "F(" + fmt(at) + "x) < " + fmt(max_frac) + " of l1=" + fmt(ref)});
    return ev;
}

Evaluation evaluate_dropout(const Table& t, const json& c) {
    Evaluation ev;
    // h -> rate -> F values
    std::map<double, std::map<double, std::vector<double>>> F;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        if (!row_measured(t, r)) continue;
        F[t.number(r, "h")][t.number(r, "rate")].push_back(t.number(r, "F"));
    }
    const double rho_max = c.at("spearman_max");
    std::map<double, double> reduction;
    json per_h = json::object();
    for (const auto& [h, by_rate] : F) {
        std::vector<double> rates, means;
        for (const auto& [rate, vals] : by_rate) rates.push_back(rate), means.push_back(mean(vals));
        double rho = std::nan("");
        try {
            rho = stats::spearman_rho(rates, means);
        } catch (const StatisticsError&) {
        }
        const double red = 1.0 - means.back() / means.front();
        reduction[h] = red;
        per_h[fmt(h)] = {{"rates", rates}, {"mean_F", means}, {"spearman", rho}, {"reduction", red}};
        ev.checks.push_back({"Spearman(rate, F) at h=" + fmt(h), rho < rho_max, rho, "< " + fmt(rho_max)});
    }
    ev.summary["per_h"] = per_h;

    const double small = c.at("small_h"), large = c.at("large_h");
    const double min_red = c.at("small_h_reduction_min");
    const double red_small = reduction.count(small) ? reduction[small] : std::nan("");
    const double red_large = reduction.count(large) ? reduction[large] : std::nan("");
    ev.checks.push_back({"F reduction at h=" + fmt(small), red_small >= min_red, red_small,
                         "1 - F(max rate)/F(0) >= " + fmt(min_red)});
    ev.checks.push_back({"reduction smaller at h=" + fmt(large), red_large < red_small, red_large,
                         "< reduction at h=" + fmt(small)});
    return ev;
}

Evaluation evaluate_grokking(const Table& t, const json& c) {
    Evaluation ev;
    struct Row {
        double ckpt, train, test, F;
    };
    std::map<std::string, std::vector<Row>> by_seed;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        if (!row_measured(t, r)) continue;
        by_seed[t.at(r, "seed")].push_back(
            {t.number(r, "checkpoint"), t.number(r, "train_acc"), t.number(r, "test_acc"), t.number(r, "F")});
    }
    const double train_min = c.at("plateau_train_min"), test_max = c.at("plateau_test_max");
    const double min_len = c.at("plateau_min_checkpoints");
    const double cross = c.at("generalized_test_acc"), window = c.at("localization_window");
    const double min_drop = c.at("post_drop_min");
    const double tail = c.value("post_tail_fraction", 0.1);

    double worst_plateau = 1e300, worst_offset = 0.0, worst_drop = 1e300;
    json seeds = json::object();
    for (auto& [seed, rows] : by_seed) {
        std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.ckpt < b.ckpt; });
        // Longest run of memorized-but-not-generalized checkpoints, in checkpoint units.
        double best = 0.0;
        for (std::size_t i = 0; i < rows.size();) {
            if (!(rows[i].train > train_min && rows[i].test < test_max)) {
                ++i;
                continue;
            }
            std::size_t j = i;
            while (j + 1 < rows.size() && rows[j + 1].train > train_min && rows[j + 1].test < test_max) ++j;
            best = std::max(best, rows[j].ckpt - rows[i].ckpt + 1.0);
            i = j + 1;
        }
        std::size_t crossing = rows.size();
        for (std::size_t i = 0; i < rows.size(); ++i)
            if (rows[i].test > cross) {
                crossing = i;
                break;
            }
        std::vector<double> F;
        for (const auto& r : rows) F.push_back(r.F);
        const auto Fs = median3(F);
        std::size_t drop_at = 0;
        double max_drop = -1e300;
        for (std::size_t i = 1; i < Fs.size(); ++i) {
            if (Fs[i - 1] <= 0.0) continue;
            const double d = (Fs[i - 1] - Fs[i]) / Fs[i - 1];
            if (d > max_drop) max_drop = d, drop_at = i;
        }
        double offset = 1e300, post_drop = -1e300, peak = 0.0, post = 0.0;
        if (crossing < rows.size() && !rows.empty()) {
            offset = std::abs(rows[drop_at].ckpt - rows[crossing].ckpt);
            for (std::size_t i = 0; i <= crossing; ++i) peak = std::max(peak, Fs[i]);
            const std::size_t k = std::max<std::size_t>(1, static_cast<std::size_t>(tail * Fs.size()));
            std::vector<double> last(Fs.end() - static_cast<std::ptrdiff_t>(k), Fs.end());
            post = mean(last);
            post_drop = peak > 0.0 ? 1.0 - post / peak : -1e300;
        }
        seeds[seed] = {{"plateau_checkpoints", best},
                       {"crossing_checkpoint", crossing < rows.size() ? rows[crossing].ckpt : -1.0},
                       {"max_drop_checkpoint", rows.empty() ? -1.0 : rows[drop_at].ckpt},
                       {"max_smoothed_drop", max_drop},
                       {"peak_F", peak},
                       {"post_F", post},
                       {"post_drop", post_drop}};
        worst_plateau = std::min(worst_plateau, best);
        worst_offset = std::max(worst_offset, offset);
        worst_drop = std::min(worst_drop, post_drop);
    }
    ev.summary["seeds"] = seeds;
    if (by_seed.empty()) worst_plateau = 0.0, worst_offset = 1e300, worst_drop = -1e300;

    ev.checks.push_back({"memorization plateau", worst_plateau >= min_len, worst_plateau,
                         "train_acc > " + fmt(train_min) + ", test_acc < " + fmt(test_max) + " for >= " +
                             fmt(min_len) + " checkpoints"});
    ev.checks.push_back({"F drop localized at transition", worst_offset <= window, worst_offset,
                         "|argmax drop - first test_acc > " + fmt(cross) + "| <= " + fmt(window) + " checkpoints"});
    ev.checks.push_back({"post-transition F below memorization peak", worst_drop >= min_drop, worst_drop,
                         "1 - F(post)/F(peak) >= " + fmt(min_drop)});
    return ev;
}

std::string format_checks(const std::vector<Check>& checks) {
    std::ostringstream os;
    for (const auto& ch : checks) {
        os << (ch.pass ? "PASS " : "FAIL ") << ch.name << ": " << fmt(ch.value) << " (" << ch.rule << ")\n";
    }
    return os.str();
}

}  // namespace supmeter::harness
