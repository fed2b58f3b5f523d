#include "topohazard/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <system_error>

namespace topohazard {

std::string format_double(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, const std::string& context) {
    const char* begin = s.data();
    const char* end = begin + s.size();
    while (begin != end && (*begin == ' ' || *begin == '\t')) ++begin;
    while (end != begin && (*(end - 1) == ' ' || *(end - 1) == '\t' || *(end - 1) == '\r'))
        --end;
    double value = 0.0;
    auto res = std::from_chars(begin, end, value);
    if (res.ec != std::errc() || res.ptr != end)
        throw std::runtime_error("could not parse number '" + s + "' (" + context + ")");
    return value;
}

static std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

CsvTable read_csv(const std::string& path, bool expect_header) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    CsvTable table;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_fields(line);
        if (expect_header && table.header.empty() && table.rows.empty()) {
            table.header = std::move(fields);
            continue;
        }
        if (!table.rows.empty() && fields.size() != table.rows.front().size())
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": ragged row (" + std::to_string(fields.size()) +
                                     " fields, expected " +
                                     std::to_string(table.rows.front().size()) + ")");
        table.rows.push_back(std::move(fields));
    }
    return table;
}

std::vector<std::vector<double>> read_numeric_grid(const std::string& path) {
    CsvTable table = read_csv(path, /*expect_header=*/false);
    std::vector<std::vector<double>> grid;
    grid.reserve(table.rows.size());
    std::size_t lineno = 0;
    for (const auto& row : table.rows) {
        ++lineno;
        std::vector<double> vals;
        vals.reserve(row.size());
        for (std::size_t j = 0; j < row.size(); ++j)
            vals.push_back(parse_double(
                row[j], path + " row " + std::to_string(lineno) + " field " +
                            std::to_string(j + 1)));
        grid.push_back(std::move(vals));
    }
    return grid;
}

}  // namespace topohazard
