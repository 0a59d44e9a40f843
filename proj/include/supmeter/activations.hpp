#pragma once

#include "supmeter/matrix.hpp"

namespace supmeter {

/// max(0, x); the subgradient at 0 is taken as 0.
Matrix relu(const Matrix& x);

/// GELU, tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
/// The exact form is 0.5 x (1 + erf(x / sqrt 2)); the two differ by < 1e-3.
double gelu(double x) noexcept;
double gelu_grad(double x) noexcept;
Matrix gelu(const Matrix& x);

}  // namespace supmeter
