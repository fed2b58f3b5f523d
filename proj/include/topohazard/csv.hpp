#pragma once

#include <string>
#include <vector>

namespace topohazard {

/// Shortest decimal string that round-trips the double exactly.
std::string format_double(double x);

double parse_double(const std::string& s, const std::string& context);

struct CsvTable {
    std::vector<std::string> header;  // empty when the file has no header row
    std::vector<std::vector<std::string>> rows;
};

/// Splits on commas; no quoting (the formats written here never need it).
/// Parse errors name the offending line.
CsvTable read_csv(const std::string& path, bool expect_header);

/// Rectangular grid of reals, one row per line.
std::vector<std::vector<double>> read_numeric_grid(const std::string& path);

}  // namespace topohazard
