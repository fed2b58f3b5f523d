#include "topohazard/lattice.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "topohazard/csv.hpp"

namespace topohazard {

LatticeField::LatticeField(int nrows, int ncols, std::vector<double> values,
                           Boundary boundary, Neighborhood neighborhood)
    : nrows_(nrows), ncols_(ncols), values_(std::move(values)), boundary_(boundary),
      neighborhood_(neighborhood) {
    if (nrows_ <= 0 || ncols_ <= 0)
        throw std::invalid_argument("LatticeField: dimensions must be positive");
    if (values_.size() != static_cast<std::size_t>(nrows_) * static_cast<std::size_t>(ncols_))
        throw std::invalid_argument("LatticeField: value count does not match dimensions");
    double lo = values_[0], hi = values_[0];
    for (double v : values_) {
        if (!std::isfinite(v))
            throw std::invalid_argument("LatticeField: non-finite value");
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }

    // Detect ties via a sort; when present, perturb every value by rank*eps in
    // (value, row-major index) order so the sublevel order is preserved and all
    // values become distinct.
    const std::size_t n = values_.size();
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        if (values_[a] != values_[b]) return values_[a] < values_[b];
        return a < b;
    });
    bool has_tie = false;
    for (std::size_t k = 1; k < n; ++k)
        if (values_[order[k]] == values_[order[k - 1]]) {
            has_tie = true;
            break;
        }
    if (has_tie) {
        double eps = 1e-9 * (hi - lo);
        if (eps <= 0.0) eps = 1e-9;
        for (std::size_t rank = 0; rank < n; ++rank)
            values_[order[rank]] += static_cast<double>(rank) * eps;
        for (std::size_t k = 1; k < n; ++k)
            if (values_[order[k]] <= values_[order[k - 1]])
                throw std::runtime_error(
                    "LatticeField: tie perturbation failed to separate values");
        ties_broken_ = true;
    }
}

NeighborList LatticeField::neighbors(GridIndex ix) const {
    if (!in_bounds(ix))
        throw std::domain_error("neighbors: index (" + std::to_string(ix.row) + "," +
                                std::to_string(ix.col) + ") out of bounds");
    static constexpr std::array<std::array<int, 2>, 8> offsets = {{
        {-1, 0}, {1, 0}, {0, -1}, {0, 1},       // shared edge
        {-1, -1}, {-1, 1}, {1, -1}, {1, 1},     // shared vertex only
    }};
    const int k = neighborhood_ == Neighborhood::edge4 ? 4 : 8;
    NeighborList out;
    for (int i = 0; i < k; ++i) {
        int r = ix.row + offsets[static_cast<std::size_t>(i)][0];
        int c = ix.col + offsets[static_cast<std::size_t>(i)][1];
        if (boundary_ == Boundary::torus) {
            r = (r + nrows_) % nrows_;
            c = (c + ncols_) % ncols_;
        } else if (r < 0 || r >= nrows_ || c < 0 || c >= ncols_) {
            continue;
        }
        if (r == ix.row && c == ix.col) continue;  // 1-wide torus wraps onto itself
        bool dup = false;
        for (int j = 0; j < out.count; ++j)
            if (out.items[static_cast<std::size_t>(j)] == GridIndex{r, c}) dup = true;
        if (!dup) out.items[static_cast<std::size_t>(out.count++)] = {r, c};
    }
    return out;
}

std::vector<std::uint8_t> LatticeField::sublevel_mask(double t) const {
    std::vector<std::uint8_t> mask(values_.size());
    for (std::size_t i = 0; i < values_.size(); ++i) mask[i] = values_[i] <= t ? 1 : 0;
    return mask;
}

LatticeField LatticeField::negated() const {
    std::vector<double> neg(values_.size());
    for (std::size_t i = 0; i < values_.size(); ++i) neg[i] = -values_[i];
    return LatticeField(nrows_, ncols_, std::move(neg), boundary_, neighborhood_);
}

LatticeField LatticeField::with_structure(Boundary boundary,
                                          Neighborhood neighborhood) const {
    return LatticeField(nrows_, ncols_, values_, boundary, neighborhood);
}

LatticeField LatticeField::from_csv(const std::string& path, Boundary boundary,
                                    Neighborhood neighborhood) {
    auto grid = read_numeric_grid(path);
    if (grid.empty()) throw std::runtime_error(path + ": empty grid");
    const std::size_t ncols = grid.front().size();
    std::vector<double> values;
    values.reserve(grid.size() * ncols);
    for (std::size_t r = 0; r < grid.size(); ++r) {
        if (grid[r].size() != ncols)
            throw std::runtime_error(path + ": row " + std::to_string(r + 1) +
                                     " has " + std::to_string(grid[r].size()) +
                                     " fields, expected " + std::to_string(ncols));
        values.insert(values.end(), grid[r].begin(), grid[r].end());
    }
    return LatticeField(static_cast<int>(grid.size()), static_cast<int>(ncols),
                        std::move(values), boundary, neighborhood);
}

LatticeField LatticeField::from_raw(const std::string& raw_path,
                                    const std::string& sidecar_path, Boundary boundary,
                                    Neighborhood neighborhood) {
    std::ifstream side(sidecar_path);
    if (!side) throw std::runtime_error("cannot open '" + sidecar_path + "'");
    nlohmann::json meta = nlohmann::json::parse(side);
    const int nrows = meta.at("nrows").get<int>();
    const int ncols = meta.at("ncols").get<int>();
    if (nrows <= 0 || ncols <= 0)
        throw std::runtime_error(sidecar_path + ": nrows/ncols must be positive");

    std::ifstream raw(raw_path, std::ios::binary);
    if (!raw) throw std::runtime_error("cannot open '" + raw_path + "'");
    const std::size_t n = static_cast<std::size_t>(nrows) * static_cast<std::size_t>(ncols);
    std::vector<double> values(n);
    raw.read(reinterpret_cast<char*>(values.data()),
             static_cast<std::streamsize>(n * sizeof(double)));
    if (static_cast<std::size_t>(raw.gcount()) != n * sizeof(double))
        throw std::runtime_error(raw_path + ": expected " + std::to_string(n) +
                                 " float64 values");
    static_assert(std::endian::native == std::endian::little,
                  "raw ingestion assumes a little-endian host");
    return LatticeField(nrows, ncols, std::move(values), boundary, neighborhood);
}

void LatticeField::to_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    for (int r = 0; r < nrows_; ++r) {
        for (int c = 0; c < ncols_; ++c) {
            if (c) out << ',';
            out << format_double(value(r, c));
        }
        out << '\n';
    }
}

}  // namespace topohazard
