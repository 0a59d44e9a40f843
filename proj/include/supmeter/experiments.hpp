#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "supmeter/grokking.hpp"
#include "supmeter/harness.hpp"
#include "supmeter/parity.hpp"
#include "supmeter/sae.hpp"
#include "supmeter/toymodel.hpp"

namespace supmeter::harness {

/// Settings shared by every experiment command.
struct RunOptions {
    std::uint64_t seed = 0;
    /// Number of seeds (seed, seed + 1, ...); 0 takes the experiment's scale preset.
    std::size_t seeds = 0;
    double scale = 1.0;     ///< 0.25, 0.5 or 1.0
    std::filesystem::path out_dir = "supmeter_out";
    std::size_t threads = 1;
    /// Progress lines; silent when empty.
    std::function<void(const std::string&)> log;

    std::vector<std::uint64_t> seed_list(std::size_t preset) const;
    void validate() const;
};

/// Picks the section named `experiment` from a --config document when it
/// exists, otherwise treats the whole document as that experiment's overrides.
nlohmann::json overrides_for(const nlohmann::json& config, const std::string& experiment);

// ---------------------------------------------------------------- toy validation

struct ToyValidationParams {
    std::size_t n_models = 100;
    double s_min = 0.001;
    double s_max = 0.999;
    toy::ToyConfig toy;                      ///< sparsity and seed are set per model
    std::size_t activation_samples = 10000;  ///< hidden-layer samples the SAE trains on
    sae::SaeConfig sae;                      ///< N is the toy bottleneck width
    std::size_t bootstrap = 1000;            ///< resamples for the spread of r
    double max_failure_fraction = 0.1;       ///< more failed models than this aborts
    std::size_t seeds = 1;

    nlohmann::json to_json() const;
};

ToyValidationParams toy_validation_params(double scale, const nlohmann::json& overrides = {});

/// n values spaced uniformly in log(1 / (1 - S)) from s_min to s_max inclusive.
std::vector<double> sparsity_grid(std::size_t n, double s_min, double s_max);

/// One row per (model, seed); writes toy_validation.csv.
Table exp_toy_validation(const ToyValidationParams& params, const RunOptions& opts);

// ---------------------------------------------------------------- dictionary scaling

struct DictScalingParams {
    tasks::ParityConfig parity;
    tasks::MlpConfig mlp;
    std::vector<double> factors{0.5, 1, 2, 4, 8, 16};
    std::vector<double> l1s{0.01, 0.1, 1.0, 10.0};
    std::size_t max_dict = 1024;
    std::size_t instances = 3;  ///< SAEs per (factor, l1), differing only in seed
    sae::SaeConfig sae;         ///< N, D, l1 and seed are set per cell
    /// Training-split activations fed to each SAE; 0 means all of them.
    std::size_t activation_samples = 0;
    tasks::HiddenStage stage = tasks::HiddenStage::post_relu;
    std::size_t seeds = 5;  ///< MLP seeds; the scale presets lower it

    nlohmann::json to_json() const;
};

DictScalingParams dict_scaling_params(double scale, const nlohmann::json& overrides = {});
/// One row per (seed, factor, l1, instance); writes dict_scaling.csv.
Table exp_dict_scaling(const DictScalingParams& params, const RunOptions& opts);

// ---------------------------------------------------------------- dropout

struct DropoutParams {
    tasks::ParityConfig parity;
    tasks::MlpConfig mlp;  ///< hidden and dropout set per cell
    std::vector<std::size_t> hs{16, 32, 64, 128};
    std::vector<double> rates{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    double dict_factor = 4.0;
    sae::SaeConfig sae;
    std::size_t activation_samples = 0;
    tasks::HiddenStage stage = tasks::HiddenStage::post_relu;
    std::size_t seeds = 5;  ///< the scale presets lower it

    nlohmann::json to_json() const;
};

DropoutParams dropout_params(double scale, const nlohmann::json& overrides = {});
/// One row per (h, rate, seed); writes dropout.csv.
Table exp_dropout(const DropoutParams& params, const RunOptions& opts);

// ---------------------------------------------------------------- grokking

struct GrokkingParams {
    tasks::GrokConfig grok;
    double dict_factor = 4.0;
    sae::SaeConfig sae;
    /// Measure F at every k-th checkpoint (1 = all of them).
    std::size_t measure_every = 1;
    std::size_t seeds = 1;

    nlohmann::json to_json() const;
};

GrokkingParams grokking_params(double scale, const nlohmann::json& overrides = {});
/// One row per (seed, checkpoint); writes grokking.csv.
Table exp_grokking(const GrokkingParams& params, const RunOptions& opts);

}  // namespace supmeter::harness
