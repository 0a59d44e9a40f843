#pragma once

#include <functional>

#include "supmeter/matrix.hpp"

namespace supmeter {

using ScalarObjective = std::function<double(const Matrix&)>;

/// Compares `analytic` against central differences of `f` at `point`.
///
/// Step per coordinate is 1e-5 * (1 + |theta|). Returns the maximum over
/// coordinates of |g_fd - g_an| / (|g_fd| + |g_an| + 1e-8).
/// Throws EvaluationError if f is non-finite at any probe.
double grad_check(const ScalarObjective& f, const Matrix& analytic, const Matrix& point);

}  // namespace supmeter
