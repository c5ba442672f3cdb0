#pragma once

#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace petkin {

/// Shortest round-trip decimal form (deterministic across platforms).
std::string format_number(double v);

/// RFC-4180 quoting: fields containing comma, quote, CR or LF are quoted
/// with embedded quotes doubled.
std::string csv_escape(const std::string& field);

class CsvWriter {
public:
    /// append = true adds rows to an existing file (the header is written
    /// only when the file starts empty).
    CsvWriter(const std::string& path, const std::vector<std::string>& header,
              bool append = false);
    void row(const std::vector<std::string>& fields);
    void flush() { out_.flush(); }

private:
    std::ofstream out_;
    size_t n_cols_;
};

/// Parses quoted CSV back into rows of fields.
std::vector<std::vector<std::string>> read_csv(const std::string& path);

/// Binary 16-bit P5 PGM; values are min/max scaled to [0, 65535]
/// (a constant image maps to 0).
void write_pgm(const std::string& path, std::span<const double> values, int width, int height);

} // namespace petkin
