#include "supmeter/adam.hpp"

#include <cmath>
#include <string>

#include "supmeter/errors.hpp"

namespace supmeter {

AdamState::AdamState(std::size_t rows, std::size_t cols, const AdamOptions& opts)
    : m(rows, cols),
      v(rows, cols),
      lr(opts.lr),
      beta1(opts.beta1),
      beta2(opts.beta2),
      eps(opts.eps),
      weight_decay(opts.weight_decay) {}

void adam_step(std::span<double> param, std::span<const double> grad, AdamState& state) {
    if (param.size() != grad.size() || param.size() != state.m.size()) {
        throw ShapeError("adam_step: param " + std::to_string(param.size()) + ", grad " +
                         std::to_string(grad.size()) + ", state " + std::to_string(state.m.size()));
    }
    state.t += 1;
    const double t = static_cast<double>(state.t);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    const double decay = 1.0 - state.lr * state.weight_decay;
    auto m = state.m.data();
    auto v = state.v.data();
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad[i];
        m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
        v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        if (state.weight_decay != 0.0) param[i] *= decay;
        param[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
}

void adam_step(Matrix& param, const Matrix& grad, AdamState& state) {
    if (param.rows() != grad.rows() || param.cols() != grad.cols()) {
        throw ShapeError("adam_step: parameter and gradient shapes differ");
    }
    adam_step(param.data(), grad.data(), state);
}

}  // namespace supmeter
