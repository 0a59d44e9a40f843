#include "supmeter/activations.hpp"

#include <cmath>
#include <numbers>

namespace supmeter {

namespace {

constexpr double kGeluC = 0.044715;
const double kSqrt2OverPi = std::sqrt(2.0 / std::numbers::pi);

}  // namespace

Matrix relu(const Matrix& x) {
    Matrix out = x;
    for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
    return out;
}

double gelu(double x) noexcept {
    const double u = kSqrt2OverPi * (x + kGeluC * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_grad(double x) noexcept {
    const double u = kSqrt2OverPi * (x + kGeluC * x * x * x);
    const double th = std::tanh(u);
    const double du = kSqrt2OverPi * (1.0 + 3.0 * kGeluC * x * x);
    return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
}

Matrix gelu(const Matrix& x) {
    Matrix out = x;
    for (double& v : out.data()) v = gelu(v);
    return out;
}

}  // namespace supmeter
