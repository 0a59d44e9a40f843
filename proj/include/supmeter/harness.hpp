#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace supmeter::harness {

inline constexpr int kSchemaVersion = 1;

/// Columns every sweep row starts with; no metric is written without them.
inline const std::vector<std::string> kProvenanceColumns = {"config_hash", "seed", "schema_version", "status"};

/// Short hex digest of the canonical (key-sorted, compact) JSON dump.
std::string config_hash(const nlohmann::json& canonical);

/// Shortest decimal that round-trips, independent of the C locale.
std::string format_number(double v);
std::string format_number(std::uint64_t v);

/// A CSV file held as strings so cached rows are re-emitted byte for byte.
struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(std::string_view name) const;  ///< throws IoError when absent
    bool has_column(std::string_view name) const;
    const std::string& at(std::size_t row, std::string_view name) const;
    /// Parses the cell; empty cells and "nan" read as NaN.
    double number(std::size_t row, std::string_view name) const;
};

Table read_csv(const std::filesystem::path& path);
/// Writes through a temporary file and renames, so readers never see half a table.
void write_csv(const std::filesystem::path& path, const Table& table);

/// Runs body(i) for i in [0, n) on `threads` workers pulling from a shared
/// counter. Exceptions are rethrown (lowest index first) after all workers stop.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& body);

/// Metric values of one finished cell. `status` is "ok" or a failure tag
/// such as "diverged" or "dead"; failed cells still produce a row.
struct CellOutput {
    std::string status = "ok";
    std::map<std::string, std::string> values;
};

/// One (config, seed) unit of work. `hash` fingerprints everything that can
/// change its output.
struct Cell {
    std::string hash;
    std::uint64_t seed = 0;
    std::function<CellOutput()> run;
};

struct SweepStats {
    std::size_t computed = 0;
    std::size_t reused = 0;
};

/// Loads `path` if present, runs only the cells whose (hash, seed) row is
/// missing, and rewrites the file with exactly one row per cell in cell
/// order. Columns are the provenance columns followed by `metric_columns`.
Table run_sweep(const std::filesystem::path& path, const std::vector<std::string>& metric_columns,
                const std::vector<Cell>& cells, std::size_t threads, SweepStats* stats = nullptr);

/// Output directory: explicit flag, else $SUPMETER_OUT, else ./supmeter_out.
std::filesystem::path resolve_out_dir(const std::string& flag);

}  // namespace supmeter::harness
