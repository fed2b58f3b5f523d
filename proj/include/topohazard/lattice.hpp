#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace topohazard {

enum class Boundary { open, torus };
enum class Neighborhood { edge4, vertex8 };

struct GridIndex {
    int row = 0;
    int col = 0;
    friend bool operator==(const GridIndex&, const GridIndex&) = default;
};

/// Fixed-capacity neighbor list (at most 8 under vertex8).
struct NeighborList {
    std::array<GridIndex, 8> items{};
    int count = 0;
    const GridIndex* begin() const { return items.data(); }
    const GridIndex* end() const { return items.data() + count; }
    std::size_t size() const { return static_cast<std::size_t>(count); }
    const GridIndex& operator[](int i) const { return items[static_cast<std::size_t>(i)]; }
};

/// Real values on a rectangular grid with a neighborhood structure; the object
/// filtered by level. Values are made pairwise distinct at construction (ties
/// broken by a deterministic rank perturbation) and are immutable afterwards,
/// so fields can be shared read-only across workers.
class LatticeField {
public:
    /// Row-major values. Throws on non-finite entries or empty grids.
    /// Ties are broken by adding rank*eps with eps = 1e-9 * data range, ranks
    /// taken in (value, row-major index) order; ties_broken() reports it.
    LatticeField(int nrows, int ncols, std::vector<double> values,
                 Boundary boundary = Boundary::open,
                 Neighborhood neighborhood = Neighborhood::edge4);

    int nrows() const { return nrows_; }
    int ncols() const { return ncols_; }
    int size() const { return nrows_ * ncols_; }
    Boundary boundary() const { return boundary_; }
    Neighborhood neighborhood() const { return neighborhood_; }
    bool ties_broken() const { return ties_broken_; }

    double value(int row, int col) const { return values_[flat(row, col)]; }
    double value(GridIndex ix) const { return values_[flat(ix.row, ix.col)]; }
    double value_flat(int i) const { return values_[static_cast<std::size_t>(i)]; }
    const std::vector<double>& values() const { return values_; }

    int flat(int row, int col) const { return row * ncols_ + col; }
    GridIndex unflat(int i) const { return {i / ncols_, i % ncols_}; }
    bool in_bounds(GridIndex ix) const {
        return ix.row >= 0 && ix.row < nrows_ && ix.col >= 0 && ix.col < ncols_;
    }

    /// Edge- or vertex-sharing neighbors; open boundaries drop out-of-range
    /// indices, torus wraps them. Throws std::domain_error when out of bounds.
    NeighborList neighbors(GridIndex ix) const;

    /// Cell true iff value <= t.
    std::vector<std::uint8_t> sublevel_mask(double t) const;

    /// Same grid and values negated; used for the reversed filtration.
    LatticeField negated() const;
    LatticeField with_structure(Boundary boundary, Neighborhood neighborhood) const;

    static LatticeField from_csv(const std::string& path,
                                 Boundary boundary = Boundary::open,
                                 Neighborhood neighborhood = Neighborhood::edge4);
    /// Raw little-endian float64 array plus a JSON sidecar {nrows, ncols}.
    static LatticeField from_raw(const std::string& raw_path,
                                 const std::string& sidecar_path,
                                 Boundary boundary = Boundary::open,
                                 Neighborhood neighborhood = Neighborhood::edge4);
    void to_csv(const std::string& path) const;

private:
    int nrows_;
    int ncols_;
    std::vector<double> values_;
    Boundary boundary_;
    Neighborhood neighborhood_;
    bool ties_broken_ = false;
};

}  // namespace topohazard
