#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "supmeter/matrix.hpp"
#include "supmeter/rng.hpp"

namespace supmeter::sae {

struct SaeConfig {
    std::size_t N = 0;   ///< input width
    std::size_t D = 0;   ///< dictionary size
    double l1 = 0.1;
    double lr = 1e-3;
    std::size_t epochs = 300;
    std::size_t batch = 128;
    std::uint64_t seed = 0;
    /// Standardize each input row to zero mean / unit variance before training and encoding.
    bool standardize = false;

    void validate() const;
};

/// Tied-weight sparse autoencoder. The decoder is W_encᵀ by construction;
/// there is no decoder storage and no decoder bias.
struct SparseAutoencoder {
    Matrix W_enc;           ///< D x N
    std::vector<double> b;  ///< length D

    std::size_t input_dim() const noexcept { return W_enc.cols(); }
    std::size_t dict_size() const noexcept { return W_enc.rows(); }
};

/// Rows ~ Uniform(-1/sqrt(N), 1/sqrt(N)) rescaled to unit norm; b = 0.
SparseAutoencoder init_sae(const SaeConfig& cfg, Rng& rng);

/// Z = ReLU(W_enc X + b), D x S.
Matrix encode(const SparseAutoencoder& sae, const Matrix& X);
/// X' = W_encᵀ Z, N x S.
Matrix decode(const SparseAutoencoder& sae, const Matrix& Z);

struct SaeGradients {
    double loss = 0.0;
    double recon_loss = 0.0;
    double l1_loss = 0.0;
    Matrix grad_W;
    std::vector<double> grad_b;
};

/// Batch mean of ||x - x'||^2 + l1 * ||z||_1 and its gradient. The gradient
/// sums the encoder path (through Z) and the decoder path (through W_encᵀ).
SaeGradients loss_and_grad(const SparseAutoencoder& sae, const Matrix& X, double l1);

struct SaeLosses {
    double loss = 0.0;   ///< recon + l1
    double recon = 0.0;
    double l1 = 0.0;     ///< the weighted penalty, l1 * mean ||z||_1
};
SaeLosses evaluate(const SparseAutoencoder& sae, const Matrix& X, double l1);

struct SaeTrainResult {
    SparseAutoencoder sae;
    SaeLosses final_losses;
};

/// Shuffled mini-batch Adam over `epochs` passes of X (N x S). The trailing
/// partial batch of each epoch is used. Throws DivergenceError with the step index.
SaeTrainResult train(const SaeConfig& cfg, const Matrix& X);

/// Per-row mean/std standardization (rows with zero variance are only centered).
Matrix standardize_rows(const Matrix& X);

/// Which stationarity condition the optimality residual tests.
enum class OptimalityForm {
    /// z_i = (w_iᵀ r_{-i} - l1/2) / ||w_i||^2 : zero gradient of the implemented
    /// loss in z_i, where r_{-i} = x - W_{-i}ᵀ z_{-i}.
    stationary,
    /// |z_i| = |w_iᵀ r_{-i}| / l1, the budget-allocation form as usually quoted.
    budget,
};

struct OptimalityReport {
    std::size_t active_count = 0;
    double median = 0.0;
    double p90 = 0.0;
};

/// Relative residual |z_i - target_i| / (|z_i| + 1e-8) over every active
/// coordinate (z_i > tau_active) of every sample. Returns nullopt when no
/// coordinate is active.
std::optional<OptimalityReport> optimality_residual(const SparseAutoencoder& sae, const Matrix& X,
                                                    double l1,
                                                    OptimalityForm form = OptimalityForm::stationary,
                                                    double tau_active = 1e-6);

/// Eigenvalues (descending) of the sample covariance of the rows of `A` (rows = variables).
std::vector<double> covariance_spectrum(const Matrix& A);
/// Count of eigenvalues above rel_tol * largest.
std::size_t numerical_rank(const std::vector<double>& spectrum, double rel_tol = 1e-8);

nlohmann::json to_json(const SaeConfig& cfg);
SaeConfig config_from_json(const nlohmann::json& j, SaeConfig base = {});
/// {config, W_enc, b, final_losses}.
nlohmann::json checkpoint_json(const SaeConfig& cfg, const SparseAutoencoder& sae,
                               const SaeLosses& losses);
SparseAutoencoder sae_from_checkpoint(const nlohmann::json& j);

}  // namespace supmeter::sae
