#pragma once

#include <cstdint>
#include <span>

#include "supmeter/matrix.hpp"

namespace supmeter {

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    /// Decoupled (AdamW-style) decay: param *= 1 - lr * weight_decay before the moment update.
    double weight_decay = 0.0;
};

/// Moments for one parameter tensor. Vectors are tracked as n x 1.
struct AdamState {
    Matrix m;
    Matrix v;
    std::uint64_t t = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;

    AdamState() = default;
    AdamState(std::size_t rows, std::size_t cols, const AdamOptions& opts = {});
};

/// One bias-corrected Adam step; increments state.t.
void adam_step(std::span<double> param, std::span<const double> grad, AdamState& state);
void adam_step(Matrix& param, const Matrix& grad, AdamState& state);

}  // namespace supmeter
