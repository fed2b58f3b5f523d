#pragma once

#include <cstdint>
#include <vector>

#include "topohazard/lattice.hpp"

namespace topohazard {

enum class Direction { sublevel, superlevel };

/// Y(u) can be read at an event level u either as the left limit Y(u-), which
/// keeps the integrand predictable, or literally with strict neighbor
/// inequalities at u. Both are carried so either estimator can be formed.
enum class RiskConvention { left, strict };

struct BirthEvent {
    double level = 0.0;
    GridIndex location;
    std::int64_t at_risk_left = 0;    // Y(level-)
    std::int64_t at_risk_strict = 0;  // Y(level) under strict inequalities
};

/// Sorted birth events plus the at-risk step function of the filtration.
/// A cell stays at risk until min(own value, smallest neighbor value), so the
/// at-risk count is the tail count of those exit levels.
struct BirthProcess {
    std::vector<BirthEvent> births;    // strictly increasing levels
    std::vector<double> exit_levels;   // sorted ascending, one per cell
    Direction direction = Direction::sublevel;
    int n_cells = 0;

    /// Y(t-) = #cells whose closed neighborhood lies entirely at or above t.
    std::int64_t at_risk_left(double t) const;
};

/// Cells strictly below all neighbors, sorted by level ascending.
std::vector<std::pair<GridIndex, double>> local_minima(const LatticeField& field);

/// Births and at-risk counts of the sublevel filtration. The superlevel
/// direction applies the same construction to the negated field, so returned
/// levels live on the negated scale.
BirthProcess birth_process(const LatticeField& field,
                           Direction direction = Direction::sublevel);

struct BarcodeInterval {
    double birth = 0.0;
    double death = 0.0;  // +inf for the first-born component
    GridIndex birth_location;
};

struct Barcode {
    std::vector<BarcodeInterval> intervals;  // in birth order
    /// Component count of the sublevel set at t: born at or before t, not yet dead.
    std::int64_t alive_at(double t) const;
};

/// Union-find pass over cells in increasing level; a merge kills the younger
/// component (elder rule).
Barcode barcode(const LatticeField& field);

}  // namespace topohazard
