// supmeter: run the sweeps, measure activation dumps, and check results
// against the acceptance manifest.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "supmeter/activation_io.hpp"
#include "supmeter/errors.hpp"
#include "supmeter/experiments.hpp"
#include "supmeter/report.hpp"
#include "supmeter/sae.hpp"
#include "supmeter/supmetric.hpp"

#ifndef SUPMETER_MANIFEST
#define SUPMETER_MANIFEST "config/acceptance_manifest.json"
#endif

using namespace supmeter;
using nlohmann::json;

namespace {

struct CommonFlags {
    std::uint64_t seed = 0;
    std::size_t seeds = 0;
    double scale = 1.0;
    std::string out;
    std::size_t threads = 1;
    std::string config;
    bool quiet = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--seed", f.seed, "Base seed");
    cmd->add_option("--seeds", f.seeds, "Number of seeds (default: the scale preset)");
    cmd->add_option("--scale", f.scale, "Size preset: 0.25, 0.5 or 1.0")->check(CLI::IsMember({0.25, 0.5, 1.0}));
    cmd->add_option("--out", f.out, "Output directory (default $SUPMETER_OUT or ./supmeter_out)");
    cmd->add_option("--threads", f.threads, "Worker threads")->check(CLI::PositiveNumber);
    cmd->add_option("--config", f.config, "JSON file with parameter overrides")->check(CLI::ExistingFile);
    cmd->add_flag("-q,--quiet", f.quiet, "No progress output");
}

json read_json_file(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

harness::RunOptions run_options(const CommonFlags& f) {
    harness::RunOptions o;
    o.seed = f.seed;
    o.seeds = f.seeds;
    o.scale = f.scale;
    o.out_dir = harness::resolve_out_dir(f.out);
    o.threads = f.threads;
    if (!f.quiet) o.log = [](const std::string& s) { std::cerr << s << '\n'; };
    o.validate();
    return o;
}

void write_params(const harness::RunOptions& o, const std::string& name, const json& params) {
    std::filesystem::create_directories(o.out_dir);
    std::ofstream(o.out_dir / (name + ".params.json")) << params.dump(2) << '\n';
}

int report_command(const std::string& out_flag, const std::string& manifest_path, double scale) {
    const json manifest = harness::load_manifest(manifest_path);
    if (scale == 0.0) scale = manifest.at("acceptance_scale").get<double>();
    const json criteria = harness::criteria_for(manifest, scale);
    const auto dir = harness::resolve_out_dir(out_flag);
    struct Entry {
        const char* name;
        harness::Evaluation (*eval)(const harness::Table&, const json&);
    };
    const Entry entries[] = {{"toy_validation", harness::evaluate_toy_validation},
                             {"dict_scaling", harness::evaluate_dict_scaling},
                             {"dropout", harness::evaluate_dropout},
                             {"grokking", harness::evaluate_grokking}};
    json summary = json::object();
    bool all = true;
    std::size_t found = 0;
    for (const auto& e : entries) {
        const auto csv = dir / (std::string(e.name) + ".csv");
        if (!std::filesystem::exists(csv)) continue;
        ++found;
        const auto ev = e.eval(harness::read_csv(csv), criteria.at(e.name));
        std::cout << "== " << e.name << '\n' << harness::format_checks(ev.checks);
        json checks = json::array();
        for (const auto& c : ev.checks)
            checks.push_back({{"name", c.name}, {"pass", c.pass}, {"value", c.value}, {"rule", c.rule}});
        summary[e.name] = {{"summary", ev.summary}, {"checks", checks}, {"pass", ev.passed()}};
        all = all && ev.passed();
    }
    if (found == 0) {
        std::cerr << "no experiment tables in " << dir << '\n';
        return 2;
    }
    std::ofstream(dir / "report.json") << summary.dump(2) << '\n';
    return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Superposition measurement: sweeps, measurement and reports"};
    app.require_subcommand(1);

    CommonFlags toy_f, dict_f, drop_f, grok_f;
    auto* toy_cmd = app.add_subcommand("toy-validate", "Toy models across sparsity vs the Frobenius reference");
    auto* dict_cmd = app.add_subcommand("dict-scaling", "F against SAE dictionary size and L1 strength");
    auto* drop_cmd = app.add_subcommand("dropout", "F of parity MLPs trained with dropout");
    auto* grok_cmd = app.add_subcommand("grokking", "F across a modular-addition grokking run");
    add_common(toy_cmd, toy_f);
    add_common(dict_cmd, dict_f);
    add_common(drop_cmd, drop_f);
    add_common(grok_cmd, grok_f);

    std::string input, sae_path, save_sae;
    std::size_t neurons = 0, train_dict = 0;
    double l1 = 0.1;
    std::uint64_t measure_seed = 0;
    auto* measure_cmd = app.add_subcommand("measure", "Effective features of an activation dump");
    measure_cmd->add_option("input", input, "Activations: .csv, .bin or .t4 (one sample per row)")
        ->required()
        ->check(CLI::ExistingFile);
    auto* sae_opt = measure_cmd->add_option("--sae", sae_path, "Encode with this SAE checkpoint first")
                        ->check(CLI::ExistingFile);
    measure_cmd->add_option("--train-sae", train_dict, "Train an SAE with this dictionary size first")
        ->excludes(sae_opt);
    measure_cmd->add_option("--l1", l1, "L1 coefficient for --train-sae");
    measure_cmd->add_option("--seed", measure_seed, "Seed for --train-sae");
    measure_cmd->add_option("--save-sae", save_sae, "Write the trained SAE checkpoint here");
    measure_cmd->add_option("--neurons", neurons, "Layer width N for psi (default: input width with an SAE)");

    std::string report_out, manifest = SUPMETER_MANIFEST;
    auto* report_cmd = app.add_subcommand("report", "Check experiment tables against the manifest; exit 0 iff all pass");
    report_cmd->add_option("--out", report_out, "Directory holding the experiment CSVs");
    report_cmd->add_option("--manifest", manifest, "Acceptance manifest")->check(CLI::ExistingFile);
    double report_scale = 0.0;
    report_cmd->add_option("--scale", report_scale, "Criteria table to apply (default: the manifest's acceptance scale)")
        ->check(CLI::IsMember({0.25, 0.5, 1.0}));

    CLI11_PARSE(app, argc, argv);

    try {
        if (*toy_cmd) {
            const auto o = run_options(toy_f);
            const auto p = harness::toy_validation_params(
                o.scale, harness::overrides_for(read_json_file(toy_f.config), "toy_validation"));
            write_params(o, "toy_validation", p.to_json());
            harness::exp_toy_validation(p, o);
        } else if (*dict_cmd) {
            const auto o = run_options(dict_f);
            const auto p = harness::dict_scaling_params(
                o.scale, harness::overrides_for(read_json_file(dict_f.config), "dict_scaling"));
            write_params(o, "dict_scaling", p.to_json());
            harness::exp_dict_scaling(p, o);
        } else if (*drop_cmd) {
            const auto o = run_options(drop_f);
            const auto p =
                harness::dropout_params(o.scale, harness::overrides_for(read_json_file(drop_f.config), "dropout"));
            write_params(o, "dropout", p.to_json());
            harness::exp_dropout(p, o);
        } else if (*grok_cmd) {
            const auto o = run_options(grok_f);
            const auto p =
                harness::grokking_params(o.scale, harness::overrides_for(read_json_file(grok_f.config), "grokking"));
            write_params(o, "grokking", p.to_json());
            harness::exp_grokking(p, o);
        } else if (*measure_cmd) {
            Matrix A = io::read_activations(input);
            std::size_t N = neurons;
            Matrix Z;
            if (!sae_path.empty() || train_dict > 0) {
                sae::SaeConfig cfg;
                sae::SparseAutoencoder model;
                if (!sae_path.empty()) {
                    const json ck = read_json_file(sae_path);
                    cfg = sae::config_from_json(ck.at("config"));
                    model = sae::sae_from_checkpoint(ck);
                } else {
                    cfg.N = A.rows();
                    cfg.D = train_dict;
                    cfg.l1 = l1;
                    cfg.seed = measure_seed;
                    const auto fitted = sae::train(cfg, A);
                    model = fitted.sae;
                    if (!save_sae.empty()) {
                        std::ofstream(save_sae) << sae::checkpoint_json(cfg, model, fitted.final_losses).dump() << '\n';
                    }
                }
                if (model.input_dim() != A.rows()) throw ShapeError("SAE input width does not match activations");
                Z = sae::encode(model, cfg.standardize ? sae::standardize_rows(A) : A);
                if (N == 0) N = A.rows();
            } else {
                Z = std::move(A);
                if (N == 0) throw ConfigError("--neurons is required when the input already holds SAE codes");
            }
            const auto rep = metric::make_report(metric::feature_probabilities(Z), N);
            std::cout << metric::to_json(rep).dump(2) << '\n';
        } else if (*report_cmd) {
            return report_command(report_out, manifest, report_scale);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
