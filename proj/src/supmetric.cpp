#include "supmeter/supmetric.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "supmeter/errors.hpp"

namespace supmeter::metric {

namespace {

// Sums in ascending order so that reordering features cannot change the
// rounding of any reduction over them.
double sorted_sum(std::vector<double> terms) {
    std::sort(terms.begin(), terms.end());
    double acc = 0.0;
    for (double t : terms) acc += t;
    return acc;
}

FeatureDistribution normalize(std::vector<double> budget, std::size_t samples) {
    const double total = sorted_sum(budget);
    if (!(total > 0.0)) {
        throw DeadRepresentationError("feature budget is zero: representation is dead, psi undefined");
    }
    for (double& b : budget) b /= total;
    return FeatureDistribution{std::move(budget), total, samples};
}

std::size_t support(const FeatureDistribution& dist) {
    return static_cast<std::size_t>(
        std::count_if(dist.p.begin(), dist.p.end(), [](double x) { return x > 0.0; }));
}

// All non-zero masses bitwise equal: every Hill number is the support size.
bool uniform_on_support(const FeatureDistribution& dist) {
    double first = 0.0;
    for (double p : dist.p) {
        if (p == 0.0) continue;
        if (first == 0.0) first = p;
        else if (p != first) return false;
    }
    return first > 0.0;
}

template <class Term>
double sum_over_support(const FeatureDistribution& dist, Term term) {
    std::vector<double> terms;
    terms.reserve(dist.p.size());
    for (double p : dist.p) {
        if (p > 0.0) terms.push_back(term(p));
    }
    return sorted_sum(std::move(terms));
}

}  // namespace

std::size_t FeatureDistribution::dead_count() const noexcept {
    return static_cast<std::size_t>(std::count(p.begin(), p.end(), 0.0));
}

FeatureDistribution feature_probabilities(const Matrix& Z) {
    std::vector<double> budget(Z.rows(), 0.0);
    for (std::size_t i = 0; i < Z.rows(); ++i) {
        double acc = 0.0;
        for (double v : Z.row(i)) acc += std::abs(v);
        budget[i] = acc;
    }
    return normalize(std::move(budget), Z.cols());
}

double shannon_entropy(const FeatureDistribution& dist) {
    return sum_over_support(dist, [](double p) { return -p * std::log(p); });
}

double effective_features(const FeatureDistribution& dist) {
    const auto k = static_cast<double>(std::max<std::size_t>(support(dist), 1));
    if (uniform_on_support(dist)) return k;
    return std::clamp(std::exp(shannon_entropy(dist)), 1.0, k);
}

double superposition_ratio(double effective, std::size_t neurons) {
    if (neurons == 0) throw ConfigError("superposition_ratio: neuron count must be positive");
    return effective / static_cast<double>(neurons);
}

double hill_number(const FeatureDistribution& dist, double q) {
    if (!(q >= 0.0)) throw ConfigError("hill_number: q must be non-negative");
    if (q == 0.0) return static_cast<double>(support(dist));
    if (std::abs(q - 1.0) < 1e-9) return effective_features(dist);
    const auto k = static_cast<double>(support(dist));
    if (uniform_on_support(dist)) return k;
    double value = 0.0;
    if (q == 2.0) {
        value = 1.0 / sum_over_support(dist, [](double p) { return p * p; });
    } else {
        const double s = sum_over_support(dist, [q](double p) { return std::pow(p, q); });
        value = std::pow(s, 1.0 / (1.0 - q));
    }
    // Hill numbers are non-increasing in q; rounding near uniformity can
    // break that by an ulp, so pin each order against exp(H).
    const double f = effective_features(dist);
    return q > 1.0 ? std::clamp(value, 1.0, f) : std::clamp(value, f, k);
}

FeatureDistribution weight_probabilities(const Matrix& W, WeightNorm norm) {
    std::vector<double> budget(W.rows(), 0.0);
    for (std::size_t i = 0; i < W.rows(); ++i) {
        double sq = 0.0;
        for (double w : W.row(i)) sq += w * w;
        budget[i] = norm == WeightNorm::squared ? sq : std::sqrt(sq);
    }
    return normalize(std::move(budget), 0);
}

Matrix cnn_to_samples(const Tensor4& z) {
    if (z.data.size() != z.batch * z.channels * z.height * z.width) {
        throw ShapeError("Tensor4: data length does not match B*C*H*W");
    }
    const std::size_t spatial = z.height * z.width;
    Matrix out(z.channels, z.batch * spatial);
    for (std::size_t b = 0; b < z.batch; ++b)
        for (std::size_t c = 0; c < z.channels; ++c)
            for (std::size_t hw = 0; hw < spatial; ++hw)
                out(c, b * spatial + hw) = z.data[(b * z.channels + c) * spatial + hw];
    return out;
}

FeatureDistribution cnn_feature_probabilities(const Tensor4& z) {
    if (z.data.size() != z.batch * z.channels * z.height * z.width) {
        throw ShapeError("Tensor4: data length does not match B*C*H*W");
    }
    const std::size_t spatial = z.height * z.width;
    std::vector<double> budget(z.channels, 0.0);
    for (std::size_t c = 0; c < z.channels; ++c) {
        double acc = 0.0;
        for (std::size_t b = 0; b < z.batch; ++b) {
            const double* block = z.data.data() + (b * z.channels + c) * spatial;
            for (std::size_t hw = 0; hw < spatial; ++hw) acc += std::abs(block[hw]);
        }
        budget[c] = acc;
    }
    return normalize(std::move(budget), z.batch * spatial);
}

std::vector<std::pair<std::size_t, double>> convergence_curve(const Matrix& Z,
                                                              std::span<const std::size_t> checkpoints) {
    std::vector<std::pair<std::size_t, double>> out;
    out.reserve(checkpoints.size());
    std::size_t prev = 0;
    std::vector<double> budget(Z.rows(), 0.0);
    for (std::size_t k : checkpoints) {
        if (k > Z.cols()) throw ConfigError("convergence_curve: checkpoint exceeds sample count");
        if (k < prev) throw ConfigError("convergence_curve: checkpoints must be ascending");
        // Prefix budgets are accumulated incrementally so the last checkpoint
        // sums in the same order as feature_probabilities.
        for (std::size_t i = 0; i < Z.rows(); ++i) {
            auto row = Z.row(i);
            double acc = budget[i];
            for (std::size_t s = prev; s < k; ++s) acc += std::abs(row[s]);
            budget[i] = acc;
        }
        prev = k;
        out.emplace_back(k, effective_features(normalize(budget, k)));
    }
    return out;
}

SuperpositionReport make_report(const FeatureDistribution& dist, std::size_t neurons) {
    SuperpositionReport r;
    r.H = shannon_entropy(dist);
    r.F = effective_features(dist);
    r.N = neurons;
    r.D = dist.p.size();
    r.psi = superposition_ratio(r.F, neurons);
    r.hill_q0 = hill_number(dist, 0.0);
    r.hill_q2 = hill_number(dist, 2.0);
    r.dead_count = dist.dead_count();
    r.sample_count = dist.sample_count;
    return r;
}

nlohmann::json to_json(const SuperpositionReport& r) {
    return {{"H", r.H},
            {"F", r.F},
            {"N", r.N},
            {"D", r.D},
            {"psi", r.psi},
            {"hill_q0", r.hill_q0},
            {"hill_q2", r.hill_q2},
            {"dead_count", r.dead_count},
            {"sample_count", r.sample_count}};
}

}  // namespace supmeter::metric
