#include "petkin/io_util.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <stdexcept>

#include "petkin/errors.hpp"

namespace petkin {

std::string format_number(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string csv_escape(const std::string& field) {
    const bool needs = field.find_first_of(",\"\r\n") != std::string::npos;
    if (!needs) return field;
    std::string out = "\"";
    for (char c : field) {
        out += c;
        if (c == '"') out += '"';
    }
    out += '"';
    return out;
}

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header, bool append)
    : n_cols_(header.size()) {
    namespace fs = std::filesystem;
    const bool had_content = append && fs::exists(path) && fs::file_size(path) > 0;
    out_.open(path, append ? (std::ios::binary | std::ios::app) : std::ios::binary);
    if (!out_) throw DataError("cannot open CSV for writing: " + path);
    if (!had_content) row(header);
}

void CsvWriter::row(const std::vector<std::string>& fields) {
    if (fields.size() != n_cols_) throw DataError("CSV row width mismatch");
    for (size_t i = 0; i < fields.size(); ++i) {
        if (i) out_ << ',';
        out_ << csv_escape(fields[i]);
    }
    out_ << '\n';
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open CSV: " + path);
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false, any = false;
    char c;
    while (in.get(c)) {
        if (quoted) {
            if (c == '"') {
                if (in.peek() == '"') { in.get(c); field += '"'; }
                else quoted = false;
            } else field += c;
            any = true;
            continue;
        }
        switch (c) {
        case '"': quoted = true; any = true; break;
        case ',': row.push_back(std::move(field)); field.clear(); any = true; break;
        case '\r': break;
        case '\n':
            if (any || !field.empty() || !row.empty()) {
                row.push_back(std::move(field));
                field.clear();
                rows.push_back(std::move(row));
                row.clear();
                any = false;
            }
            break;
        default: field += c; any = true; break;
        }
    }
    if (any || !field.empty() || !row.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_pgm(const std::string& path, std::span<const double> values, int width, int height) {
    if (values.size() != static_cast<size_t>(width) * height)
        throw DataError("write_pgm: size mismatch");
    double lo = values.empty() ? 0.0 : values[0], hi = lo;
    for (double v : values) { lo = std::min(lo, v); hi = std::max(hi, v); }
    const double span = hi - lo;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open PGM for writing: " + path);
    out << "P5\n" << width << ' ' << height << "\n65535\n";
    std::vector<unsigned char> buf(values.size() * 2);
    for (size_t i = 0; i < values.size(); ++i) {
        const double t = span > 0.0 ? (values[i] - lo) / span : 0.0;
        const auto q = static_cast<uint16_t>(std::lround(t * 65535.0));
        buf[2 * i] = static_cast<unsigned char>(q >> 8);  // big-endian per netpbm
        buf[2 * i + 1] = static_cast<unsigned char>(q & 0xff);
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

} // namespace petkin
