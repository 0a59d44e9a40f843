#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

#include "supmeter/matrix.hpp"

namespace supmeter::metric {

/// Share of total activation budget per dictionary feature.
struct FeatureDistribution {
    std::vector<double> p;      ///< non-negative, sums to 1
    double total_budget = 0.0;  ///< Σ_i Σ_s |z_is|
    std::size_t sample_count = 0;

    /// Features with exactly zero budget (never active).
    std::size_t dead_count() const noexcept;
};

/// Summary of one measurement. Entropy is in nats; F = e^H; psi = F / N.
struct SuperpositionReport {
    double H = 0.0;
    double F = 0.0;
    std::size_t N = 0;
    std::size_t D = 0;
    double psi = 0.0;
    double hill_q0 = 0.0;
    double hill_q2 = 0.0;
    std::size_t dead_count = 0;
    std::size_t sample_count = 0;
};

/// p_i = Σ_s |Z_is| / Σ_j Σ_s |Z_js| for Z laid out features x samples.
/// Throws DeadRepresentationError when every entry is zero.
FeatureDistribution feature_probabilities(const Matrix& Z);

/// Natural-log entropy. Zero-probability terms are skipped, never floored.
double shannon_entropy(const FeatureDistribution& dist);

/// exp(H), clamped into [1, number of non-zero p_i] to absorb rounding.
double effective_features(const FeatureDistribution& dist);
double superposition_ratio(double effective, std::size_t neurons);

/// Hill number of order q >= 0: q = 0 counts the support, q = 1 is exp(H)
/// (taken when |q - 1| < 1e-9), q = 2 is the inverse Simpson index.
double hill_number(const FeatureDistribution& dist, double q);

/// How a weight vector is turned into a budget.
enum class WeightNorm { squared, raw };

/// p_i ∝ ||row_i||^2 (or ||row_i|| for WeightNorm::raw). Rows are features,
/// so pass W_enc for an SAE and W_toyᵀ for a toy model.
FeatureDistribution weight_probabilities(const Matrix& W_rows_are_features,
                                         WeightNorm norm = WeightNorm::squared);

/// Dense B x C x H x W activation block (NCHW, row-major).
struct Tensor4 {
    std::size_t batch = 0, channels = 0, height = 0, width = 0;
    std::vector<double> data;

    double at(std::size_t b, std::size_t c, std::size_t h, std::size_t w) const noexcept {
        return data[((b * channels + c) * height + h) * width + w];
    }
};

/// Channels are features; every (b, h, w) position is a sample.
FeatureDistribution cnn_feature_probabilities(const Tensor4& z);
/// Channel x (B*H*W) matrix, sample index = (b*H + h)*W + w.
Matrix cnn_to_samples(const Tensor4& z);

/// F on the first k samples for each checkpoint k (ascending, <= S).
std::vector<std::pair<std::size_t, double>> convergence_curve(const Matrix& Z,
                                                              std::span<const std::size_t> checkpoints);

SuperpositionReport make_report(const FeatureDistribution& dist, std::size_t neurons);

/// {H, F, N, D, psi, hill_q0, hill_q2, dead_count, sample_count}.
nlohmann::json to_json(const SuperpositionReport& report);

}  // namespace supmeter::metric
