#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "supmeter/harness.hpp"

namespace supmeter::harness {

/// One pass/fail line. `value` is the statistic the rule was applied to.
struct Check {
    std::string name;
    bool pass = false;
    double value = 0.0;
    std::string rule;
};

struct Evaluation {
    nlohmann::json summary;  ///< everything computed, for report output
    std::vector<Check> checks;

    bool passed() const;
};

/// Running median over windows of 3; the two ends keep their own value.
std::vector<double> median3(std::span<const double> values);

/// Reads the manifest and checks its schema version.
nlohmann::json load_manifest(const std::filesystem::path& path);

/// The manifest's "criteria" with its per-scale table merged on top
/// (JSON merge patch). Unknown scales throw ConfigError.
nlohmann::json criteria_for(const nlohmann::json& manifest, double scale);

// Each evaluator takes the table an experiment wrote and the matching
// "criteria" section of the manifest. Rows with a failed status are skipped
// except where noted.

/// Pearson r of psi_sae and psi_weights against psi_frob, with a bootstrap
/// and a per-seed spread for r, plus the share of SAE Frobenius statistics
/// outside the reference range.
Evaluation evaluate_toy_validation(const Table& t, const nlohmann::json& criteria);

/// Mean F per (l1, factor); "dead" rows count as F = 0.
Evaluation evaluate_dict_scaling(const Table& t, const nlohmann::json& criteria);

/// Spearman of rate against the per-rate mean F, for each width, and the
/// relative drop in mean F between the lowest and highest rate.
Evaluation evaluate_dropout(const Table& t, const nlohmann::json& criteria);

/// Memorization plateau, localization of the steepest smoothed F drop
/// relative to the generalization crossing, and the post-transition F.
/// Every seed in the table must pass on its own.
Evaluation evaluate_grokking(const Table& t, const nlohmann::json& criteria);

/// Human-readable lines: "PASS name: value (rule)".
std::string format_checks(const std::vector<Check>& checks);

}  // namespace supmeter::harness
