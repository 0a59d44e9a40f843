#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace supmeter {

/// Operand shapes do not agree.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A configuration value violates its documented range.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A scalar objective returned NaN or Inf.
class EvaluationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss. Carries the offending step.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, std::uint64_t step)
        : std::runtime_error(what + " diverged at step " + std::to_string(step)), step_(step) {}

    std::uint64_t step() const noexcept { return step_; }

private:
    std::uint64_t step_;
};

/// Every activation is zero, so the feature distribution (and psi) is undefined.
class DeadRepresentationError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// A statistic is undefined for the given input (e.g. correlation of a constant vector).
class StatisticsError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Malformed input file or unreadable path.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An experiment lost too many sub-runs to produce a meaningful result.
class ExperimentError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace supmeter
