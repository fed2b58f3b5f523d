#include "topohazard/step_curve.hpp"

#include <algorithm>
#include <stdexcept>

namespace topohazard {

double StepCurve::value_at(double t) const {
    // Last level <= t (right-continuity); 0 before the first level.
    auto it = std::upper_bound(levels.begin(), levels.end(), t);
    if (it == levels.begin()) return 0.0;
    return values[static_cast<std::size_t>(it - levels.begin()) - 1];
}

void StepCurve::validate() const {
    if (levels.size() != values.size())
        throw std::invalid_argument("StepCurve: levels/values size mismatch");
    for (std::size_t i = 1; i < levels.size(); ++i)
        if (!(levels[i] > levels[i - 1]))
            throw std::invalid_argument("StepCurve: levels not strictly increasing");
}

StepCurve discretize(const StepCurve& curve, const std::vector<double>& grid) {
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (!(grid[i] > grid[i - 1]))
            throw std::invalid_argument("discretize: grid not sorted");
    StepCurve out;
    out.kind = CurveKind::grid;
    out.levels = grid;
    out.values.reserve(grid.size());
    for (double t : grid) out.values.push_back(curve.value_at(t));
    return out;
}

std::vector<double> linspace(double lo, double hi, int n) {
    if (n <= 0) throw std::invalid_argument("linspace: n must be positive");
    std::vector<double> out(static_cast<std::size_t>(n));
    if (n == 1) {
        out[0] = lo;
        return out;
    }
    const double step = (hi - lo) / (n - 1);
    for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = lo + step * i;
    out.back() = hi;
    return out;
}

}  // namespace topohazard
