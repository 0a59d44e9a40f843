#include "supmeter/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "supmeter/errors.hpp"

namespace supmeter::stats {

namespace {

void require_pairs(std::span<const double> x, std::span<const double> y, const char* what) {
    if (x.size() != y.size()) throw StatisticsError(std::string(what) + ": length mismatch");
    if (x.size() < 3) throw StatisticsError(std::string(what) + ": need at least 3 points");
}

double mean_of(std::span<const double> v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

double pearson_r(std::span<const double> x, std::span<const double> y) {
    require_pairs(x, y, "pearson_r");
    const double mx = mean_of(x), my = mean_of(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw StatisticsError("pearson_r: constant input, correlation undefined");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[idx[j + 1]] == values[idx[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

double spearman_rho(std::span<const double> x, std::span<const double> y) {
    require_pairs(x, y, "spearman_rho");
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    return pearson_r(rx, ry);
}

LinearFit linear_fit(std::span<const double> x, std::span<const double> y) {
    require_pairs(x, y, "linear_fit");
    const double n = static_cast<double>(x.size());
    const double mx = mean_of(x), my = mean_of(y);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx == 0.0) throw StatisticsError("linear_fit: x is constant");
    LinearFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double sse = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - (fit.intercept + fit.slope * x[i]);
        sse += r * r;
    }
    fit.slope_se = std::sqrt(sse / (n - 2.0) / sxx);
    return fit;
}

Summary summarize(std::span<const double> values) {
    if (values.empty()) throw StatisticsError("summarize: no values");
    Summary s;
    s.mean = mean_of(values);
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
        s.sem = s.std / std::sqrt(static_cast<double>(values.size()));
    }
    return s;
}

}  // namespace supmeter::stats
