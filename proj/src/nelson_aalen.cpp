#include "topohazard/nelson_aalen.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace topohazard {

namespace {

StepCurve accumulate_jumps(const BirthProcess& bp, RiskConvention convention,
                           bool squared) {
    StepCurve curve;
    curve.kind = CurveKind::step;
    curve.levels.reserve(bp.births.size());
    curve.values.reserve(bp.births.size());
    double total = 0.0;
    for (const BirthEvent& ev : bp.births) {
        const std::int64_t y =
            convention == RiskConvention::left ? ev.at_risk_left : ev.at_risk_strict;
        if (y <= 0)
            throw std::logic_error("nelson_aalen: zero at-risk count at a birth level");
        const double jump = 1.0 / static_cast<double>(y);
        total += squared ? jump * jump : jump;
        curve.levels.push_back(ev.level);
        curve.values.push_back(total);
    }
    return curve;
}

}  // namespace

StepCurve nelson_aalen(const BirthProcess& bp, RiskConvention convention) {
    return accumulate_jumps(bp, convention, /*squared=*/false);
}

StepCurve naive_variance(const BirthProcess& bp, RiskConvention convention) {
    return accumulate_jumps(bp, convention, /*squared=*/true);
}

namespace {

AtRiskGrid percentile_grid_from_exits(std::vector<double> pooled,
                                      std::span<const double> probs, int m_points) {
    if (pooled.empty())
        throw std::domain_error("at_risk_percentile_grid: no at-risk data");
    std::sort(pooled.begin(), pooled.end());
    const std::size_t n = pooled.size();

    // Level where the fraction of cells with exit >= t equals p: the (1-p)
    // empirical quantile of the exit levels.
    auto level_at = [&](double p) {
        if (!(p > 0.0 && p < 1.0))
            throw std::domain_error("at_risk_percentile_grid: p must be in (0,1)");
        double idx = (1.0 - p) * static_cast<double>(n);
        std::size_t k = static_cast<std::size_t>(idx);
        if (k >= n) k = n - 1;
        return pooled[k];
    };

    AtRiskGrid out;
    out.percentile_levels.reserve(probs.size());
    for (double p : probs) out.percentile_levels.push_back(level_at(p));
    const double lo = level_at(0.95);
    const double hi = level_at(0.05);
    out.grid = linspace(lo, hi, m_points);
    return out;
}

}  // namespace

AtRiskGrid at_risk_percentile_grid(std::span<const LatticeField> fields,
                                   std::span<const double> probs, int m_points) {
    if (fields.empty())
        throw std::domain_error("at_risk_percentile_grid: empty field sequence");
    std::vector<double> pooled;
    for (const LatticeField& f : fields) {
        const BirthProcess bp = birth_process(f);
        pooled.insert(pooled.end(), bp.exit_levels.begin(), bp.exit_levels.end());
    }
    return percentile_grid_from_exits(std::move(pooled), probs, m_points);
}

AtRiskGrid at_risk_percentile_grid(std::span<const BirthProcess> processes,
                                   std::span<const double> probs, int m_points) {
    if (processes.empty())
        throw std::domain_error("at_risk_percentile_grid: empty sequence");
    std::vector<double> pooled;
    for (const BirthProcess& bp : processes)
        pooled.insert(pooled.end(), bp.exit_levels.begin(), bp.exit_levels.end());
    return percentile_grid_from_exits(std::move(pooled), probs, m_points);
}

StepCurve exp_rescaled(const StepCurve& curve) {
    StepCurve out = curve;
    for (double& t : out.levels) t = std::exp(t);
    return out;
}

}  // namespace topohazard
