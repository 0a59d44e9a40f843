#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "supmeter/matrix.hpp"
#include "supmeter/rng.hpp"

namespace supmeter::tasks {

/// Multi-task sparse parity: a one-hot control block selects which group of
/// data bits determines the label.
struct ParityConfig {
    std::size_t n_tasks = 3;
    std::size_t bits_per_task = 4;
    std::size_t n_samples = 4096;
    std::uint64_t seed = 0;

    std::size_t input_dim() const noexcept { return n_tasks + n_tasks * bits_per_task; }
    void validate() const;
};

struct ParityData {
    Matrix X;                        ///< input_dim x n, rows [0, n_tasks) are the control one-hot
    std::vector<double> y;           ///< labels in {0, 1}
    std::vector<std::size_t> task;   ///< active task per sample
    std::vector<std::size_t> train;  ///< sorted sample indices (80%)
    std::vector<std::size_t> test;   ///< sorted sample indices (20%)
};

/// Draw order per sample: task = below(n_tasks), then every data bit via below(2).
/// The 80/20 split is stratified by (task, label).
ParityData gen_parity(const ParityConfig& cfg, Rng& rng);

struct MlpConfig {
    std::size_t input_dim = 15;
    std::size_t hidden = 64;
    double dropout = 0.0;  ///< in [0, 1), applied to pre-ReLU hidden units while training
    double lr = 1e-3;
    std::size_t epochs = 300;
    std::size_t batch = 64;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Linear(h) -> ReLU -> Linear(1), logits scored with BCE-with-logits.
struct ParityMlp {
    Matrix W1;               ///< h x in
    std::vector<double> b1;  ///< h
    Matrix W2;               ///< 1 x h
    std::vector<double> b2;  ///< length 1
};

/// PyTorch-style fan-in init: every weight and bias ~ Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
ParityMlp init_mlp(const MlpConfig& cfg, Rng& rng);

struct MlpGradients {
    double loss = 0.0;
    Matrix grad_W1;
    std::vector<double> grad_b1;
    Matrix grad_W2;
    std::vector<double> grad_b2;
};

/// Mean BCE-with-logits over the columns of X. `dropout_scale`, when given,
/// is h x B and multiplies the pre-ReLU hidden units (0 or 1/(1-rate)).
MlpGradients loss_and_grad(const ParityMlp& model, const Matrix& X, std::span<const double> y,
                           const Matrix* dropout_scale = nullptr);

/// Inverted-dropout mask: each entry 0 with probability `rate`, else 1/(1-rate).
Matrix dropout_mask(Rng& rng, std::size_t rows, std::size_t cols, double rate);

Matrix logits(const ParityMlp& model, const Matrix& X);
double accuracy(const ParityMlp& model, const Matrix& X, std::span<const double> y);

struct MlpTrainResult {
    ParityMlp model;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    double final_loss = 0.0;
    /// Dropout bookkeeping for the final epoch (zeroed units / total units).
    std::uint64_t last_epoch_dropped = 0;
    std::uint64_t last_epoch_units = 0;
};

/// Adam on shuffled mini-batches of the training split. Dropout masks come
/// from their own stream, so rate 0 draws nothing and matches a plain network.
MlpTrainResult train_parity_mlp(const MlpConfig& cfg, const ParityData& data);

enum class HiddenStage { pre_relu, post_relu };

/// Hidden activations (h x S) with dropout disabled.
Matrix extract_hidden(const ParityMlp& model, const Matrix& X, HiddenStage stage = HiddenStage::post_relu);

nlohmann::json to_json(const ParityConfig& cfg);
nlohmann::json to_json(const MlpConfig& cfg);
ParityConfig parity_config_from_json(const nlohmann::json& j, ParityConfig base = {});
MlpConfig mlp_config_from_json(const nlohmann::json& j, MlpConfig base = {});

}  // namespace supmeter::tasks
