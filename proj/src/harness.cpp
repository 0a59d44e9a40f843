#include "supmeter/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "supmeter/errors.hpp"

namespace supmeter::harness {

std::string config_hash(const nlohmann::json& canonical) {
    // nlohmann::json objects are std::map backed, so dump() is key-sorted.
    const std::string text = canonical.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string format_number(std::uint64_t v) { return std::to_string(v); }

std::size_t Table::column(std::string_view name) const {
    const auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) throw IoError("table has no column '" + std::string(name) + "'");
    return static_cast<std::size_t>(it - columns.begin());
}

bool Table::has_column(std::string_view name) const {
    return std::find(columns.begin(), columns.end(), name) != columns.end();
}

const std::string& Table::at(std::size_t row, std::string_view name) const { return rows.at(row).at(column(name)); }

double Table::number(std::size_t row, std::string_view name) const {
    const std::string& s = at(row, name);
    if (s.empty() || s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw IoError("column '" + std::string(name) + "': not a number: " + s);
    }
    return v;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

void check_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") != std::string::npos) throw IoError("CSV field needs quoting: " + s);
}

}  // namespace

Table read_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    Table t;
    std::string line;
    if (!std::getline(in, line)) throw IoError(path.string() + ": empty CSV");
    t.columns = split_line(line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto row = split_line(line);
        if (row.size() != t.columns.size()) {
            throw IoError(path.string() + ": row has " + std::to_string(row.size()) + " fields, header has " +
                          std::to_string(t.columns.size()));
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

void write_csv(const std::filesystem::path& path, const Table& table) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        auto emit = [&](const std::vector<std::string>& fields) {
            for (std::size_t i = 0; i < fields.size(); ++i) {
                check_field(fields[i]);
                if (i) out << ',';
                out << fields[i];
            }
            out << '\n';
        };
        emit(table.columns);
        for (const auto& r : table.rows) {
            if (r.size() != table.columns.size()) throw IoError("row width does not match header");
            emit(r);
        }
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& body) {
    if (n == 0) return;
    threads = std::clamp<std::size_t>(threads, 1, n);
    std::vector<std::exception_ptr> errors(n);
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) {
            try {
                body(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (std::size_t t = 0; t < threads; ++t) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) {
                    try {
                        body(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        }
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

Table run_sweep(const std::filesystem::path& path, const std::vector<std::string>& metric_columns,
                const std::vector<Cell>& cells, std::size_t threads, SweepStats* stats) {
    Table out;
    out.columns = kProvenanceColumns;
    out.columns.insert(out.columns.end(), metric_columns.begin(), metric_columns.end());

    std::map<std::pair<std::string, std::string>, std::vector<std::string>> cached;
    if (std::filesystem::exists(path)) {
        Table old = read_csv(path);
        // A header change means a schema change; nothing in the old file is reusable.
        if (old.columns == out.columns) {
            for (std::size_t r = 0; r < old.rows.size(); ++r) {
                if (old.at(r, "schema_version") != std::to_string(kSchemaVersion)) continue;
                cached.emplace(std::make_pair(old.at(r, "config_hash"), old.at(r, "seed")), old.rows[r]);
            }
        }
    }

    out.rows.resize(cells.size());
    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto it = cached.find({cells[i].hash, format_number(cells[i].seed)});
        if (it != cached.end()) {
            out.rows[i] = it->second;
        } else {
            todo.push_back(i);
        }
    }

    // Finished rows are flushed as they arrive so an interrupted sweep keeps its work.
    std::mutex writer;
    auto flush = [&] {
        Table partial{out.columns, {}};
        for (const auto& r : out.rows)
            if (!r.empty()) partial.rows.push_back(r);
        write_csv(path, partial);
    };

    parallel_for(todo.size(), threads, [&](std::size_t k) {
        const Cell& cell = cells[todo[k]];
        const CellOutput result = cell.run();
        std::vector<std::string> row{cell.hash, format_number(cell.seed), std::to_string(kSchemaVersion),
                                     result.status};
        for (const auto& col : metric_columns) {
            const auto it = result.values.find(col);
            row.push_back(it == result.values.end() ? std::string() : it->second);
        }
        std::lock_guard<std::mutex> lock(writer);
        out.rows[todo[k]] = std::move(row);
        flush();
    });

    if (stats != nullptr) {
        stats->computed = todo.size();
        stats->reused = cells.size() - todo.size();
    }
    write_csv(path, out);
    return out;
}

std::filesystem::path resolve_out_dir(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("SUPMETER_OUT"); env != nullptr && *env != '\0') return env;
    return "supmeter_out";
}

}  // namespace supmeter::harness
