#include "supmeter/activation_io.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "supmeter/errors.hpp"

namespace supmeter::io {

static_assert(std::endian::native == std::endian::little, "binary activation files are little endian");

namespace {

std::uint64_t read_u64(std::istream& in, const std::filesystem::path& path) {
    std::uint64_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw IoError(path.string() + ": truncated header");
    return v;
}

void read_doubles(std::istream& in, std::vector<double>& out, const std::filesystem::path& path) {
    const auto bytes = static_cast<std::streamsize>(out.size() * sizeof(double));
    if (!in.read(reinterpret_cast<char*>(out.data()), bytes)) throw IoError(path.string() + ": truncated data");
    if (in.peek() != std::char_traits<char>::eof()) throw IoError(path.string() + ": trailing bytes after data");
}

std::uint64_t checked_product(std::initializer_list<std::uint64_t> dims, const std::filesystem::path& path) {
    std::uint64_t n = 1;
    for (auto d : dims) {
        if (d != 0 && n > std::numeric_limits<std::uint64_t>::max() / sizeof(double) / d) {
            throw IoError(path.string() + ": dimensions overflow");
        }
        n *= d;
    }
    return n;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return in;
}

bool parse_row(const std::string& line, std::vector<double>& row) {
    row.clear();
    std::size_t pos = 0;
    while (pos <= line.size()) {
        std::size_t end = line.find(',', pos);
        if (end == std::string::npos) end = line.size();
        std::size_t a = pos, b = end;
        while (a < b && (line[a] == ' ' || line[a] == '\t')) ++a;
        while (b > a && (line[b - 1] == ' ' || line[b - 1] == '\t' || line[b - 1] == '\r')) --b;
        double v = 0.0;
        const auto res = std::from_chars(line.data() + a, line.data() + b, v);
        if (a == b || res.ec != std::errc() || res.ptr != line.data() + b) return false;
        row.push_back(v);
        pos = end + 1;
    }
    return true;
}

}  // namespace

Matrix read_activations_csv(const std::filesystem::path& path) {
    auto in = open_in(path);
    std::vector<std::vector<double>> rows;
    std::string line;
    std::vector<double> row;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        if (!parse_row(line, row)) {
            if (rows.empty() && line_no == 1) continue;  // header
            throw IoError(path.string() + ":" + std::to_string(line_no) + ": not a numeric row");
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw IoError(path.string() + ":" + std::to_string(line_no) + ": ragged row");
        }
        rows.push_back(row);
    }
    if (rows.empty()) throw IoError(path.string() + ": no data rows");
    Matrix m(rows.front().size(), rows.size());
    for (std::size_t s = 0; s < rows.size(); ++s)
        for (std::size_t f = 0; f < rows[s].size(); ++f) m(f, s) = rows[s][f];
    return m;
}

Matrix read_activations_bin(const std::filesystem::path& path) {
    auto in = open_in(path);
    const auto rows = read_u64(in, path), cols = read_u64(in, path);
    std::vector<double> buf(checked_product({rows, cols}, path));
    read_doubles(in, buf, path);
    Matrix m(cols, rows);
    for (std::uint64_t s = 0; s < rows; ++s)
        for (std::uint64_t f = 0; f < cols; ++f) m(f, s) = buf[s * cols + f];
    return m;
}

metric::Tensor4 read_tensor4(const std::filesystem::path& path) {
    auto in = open_in(path);
    metric::Tensor4 t;
    t.batch = read_u64(in, path);
    t.channels = read_u64(in, path);
    t.height = read_u64(in, path);
    t.width = read_u64(in, path);
    t.data.resize(checked_product({t.batch, t.channels, t.height, t.width}, path));
    read_doubles(in, t.data, path);
    return t;
}

void write_activations_bin(const std::filesystem::path& path, const Matrix& m) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    const std::uint64_t rows = m.cols(), cols = m.rows();
    out.write(reinterpret_cast<const char*>(&rows), sizeof rows);
    out.write(reinterpret_cast<const char*>(&cols), sizeof cols);
    for (std::uint64_t s = 0; s < rows; ++s)
        for (std::uint64_t f = 0; f < cols; ++f) {
            const double v = m(f, s);
            out.write(reinterpret_cast<const char*>(&v), sizeof v);
        }
    if (!out) throw IoError("write failed: " + path.string());
}

void write_tensor4(const std::filesystem::path& path, const metric::Tensor4& t) {
    if (t.data.size() != t.batch * t.channels * t.height * t.width) throw ShapeError("tensor data size mismatch");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    for (std::uint64_t d : {std::uint64_t{t.batch}, std::uint64_t{t.channels}, std::uint64_t{t.height},
                            std::uint64_t{t.width}}) {
        out.write(reinterpret_cast<const char*>(&d), sizeof d);
    }
    out.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * 8));
    if (!out) throw IoError("write failed: " + path.string());
}

Matrix read_activations(const std::filesystem::path& path) {
    const auto ext = path.extension().string();
    if (ext == ".csv") return read_activations_csv(path);
    if (ext == ".bin") return read_activations_bin(path);
    if (ext == ".t4") return metric::cnn_to_samples(read_tensor4(path));
    throw IoError(path.string() + ": unknown activation format (expected .csv, .bin or .t4)");
}

}  // namespace supmeter::io
