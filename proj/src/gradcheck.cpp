#include "supmeter/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "supmeter/errors.hpp"

namespace supmeter {

double grad_check(const ScalarObjective& f, const Matrix& analytic, const Matrix& point) {
    if (analytic.rows() != point.rows() || analytic.cols() != point.cols()) {
        throw ShapeError("grad_check: gradient and point shapes differ");
    }
    Matrix probe = point;
    double worst = 0.0;
    for (std::size_t i = 0; i < point.size(); ++i) {
        const double theta = point.data()[i];
        const double h = 1e-5 * (1.0 + std::abs(theta));
        probe.data()[i] = theta + h;
        const double fp = f(probe);
        probe.data()[i] = theta - h;
        const double fm = f(probe);
        probe.data()[i] = theta;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw EvaluationError("grad_check: objective non-finite near coordinate " +
                                  std::to_string(i));
        }
        const double fd = (fp - fm) / (2.0 * h);
        const double an = analytic.data()[i];
        worst = std::max(worst, std::abs(fd - an) / (std::abs(fd) + std::abs(an) + 1e-8));
    }
    return worst;
}

}  // namespace supmeter
