#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "supmeter/matrix.hpp"
#include "supmeter/rng.hpp"

namespace supmeter::toy {

struct ToyConfig {
    std::size_t M = 20;  ///< input features
    std::size_t N = 5;   ///< bottleneck neurons
    double sparsity = 0.0;
    double importance_decay = 0.7;
    double lr = 1e-3;
    std::size_t steps = 10000;
    std::size_t batch = 256;
    std::uint64_t seed = 0;

    /// Throws ConfigError when a field is out of range.
    void validate() const;
};

/// x = W f, f' = ReLU(Wᵀ x + b).
struct ToyModel {
    Matrix W;               ///< N x M
    std::vector<double> b;  ///< length M
};

/// ω_i = decay^i for i = 0..M-1.
std::vector<double> importance_weights(const ToyConfig& cfg);

/// M x count matrix; each entry is 0 with probability `sparsity`, else Uniform[0, 1).
Matrix sample_features(const ToyConfig& cfg, Rng& rng, std::size_t count);

struct ForwardResult {
    Matrix hidden;  ///< x, N x B
    Matrix output;  ///< f', M x B
};

ForwardResult forward(const ToyModel& model, const Matrix& features);

struct ToyGradients {
    double loss = 0.0;
    Matrix grad_W;
    std::vector<double> grad_b;
};

/// Batch-mean Σ_i ω_i (f_i - f'_i)^2 and its gradient; W appears in both
/// the encoding and the readout, so grad_W sums both paths.
ToyGradients loss_and_grad(const ToyModel& model, const Matrix& features,
                           const std::vector<double>& importance);
double loss(const ToyModel& model, const Matrix& features, const std::vector<double>& importance);

/// W ~ Uniform(-1/sqrt(M), 1/sqrt(M)), b = 0.
ToyModel init_model(const ToyConfig& cfg, Rng& rng);

struct ToyTrainResult {
    ToyModel model;
    double initial_loss = 0.0;  ///< on a fixed evaluation batch, before training
    double final_loss = 0.0;    ///< same evaluation batch, after training
    /// Relative change of the evaluation loss over the last 10% of steps < 1e-4.
    bool plateaued = false;
};

/// Adam on fresh feature batches every step. Throws DivergenceError on a non-finite loss.
ToyTrainResult train(const ToyConfig& cfg);

/// WᵀW, M x M.
Matrix interference_matrix(const ToyModel& model);

/// ||W||_F^2 / N.
double psi_frobenius(const ToyModel& model);

nlohmann::json to_json(const ToyConfig& cfg);
ToyConfig config_from_json(const nlohmann::json& j, ToyConfig base = {});
/// {config, W, b, final_loss}.
nlohmann::json checkpoint_json(const ToyConfig& cfg, const ToyModel& model, double final_loss);
ToyModel model_from_checkpoint(const nlohmann::json& j);

}  // namespace supmeter::toy
