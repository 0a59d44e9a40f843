#pragma once

#include <span>
#include <vector>

namespace supmeter::stats {

/// Pearson correlation. Needs >= 3 points; a constant input throws StatisticsError.
double pearson_r(std::span<const double> x, std::span<const double> y);

/// Spearman rank correlation with average ranks for ties.
double spearman_rho(std::span<const double> x, std::span<const double> y);

/// 1-based average ranks (ties share the mean of their positions).
std::vector<double> average_ranks(std::span<const double> values);

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_se = 0.0;
};

/// Ordinary least squares y = slope * x + intercept.
LinearFit linear_fit(std::span<const double> x, std::span<const double> y);

struct Summary {
    double mean = 0.0;
    double std = 0.0;  ///< sample standard deviation (n - 1); 0 for a single value
    double sem = 0.0;
};

Summary summarize(std::span<const double> values);

}  // namespace supmeter::stats
