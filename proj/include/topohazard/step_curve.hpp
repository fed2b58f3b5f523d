#pragma once

#include <string>
#include <vector>

namespace topohazard {

enum class CurveKind { step, grid };

/// Right-continuous step function over levels (kind step) or samples of a
/// curve on a fixed level grid (kind grid). Step curves are 0 before the
/// first level; values[i] is the value on [levels[i], levels[i+1]).
struct StepCurve {
    std::vector<double> levels;
    std::vector<double> values;
    CurveKind kind = CurveKind::step;

    /// Right-continuous evaluation; a query exactly at a jump includes it.
    double value_at(double t) const;

    std::size_t size() const { return levels.size(); }
    double final_value() const { return values.empty() ? 0.0 : values.back(); }

    void validate() const;  // levels strictly increasing, sizes match
};

/// Right-continuous evaluation of `curve` at each grid point; kind grid.
StepCurve discretize(const StepCurve& curve, const std::vector<double>& grid);

std::vector<double> linspace(double lo, double hi, int n);

}  // namespace topohazard
