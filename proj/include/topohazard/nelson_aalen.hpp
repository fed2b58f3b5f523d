#pragma once

#include <span>
#include <vector>

#include "topohazard/filtration.hpp"
#include "topohazard/step_curve.hpp"

namespace topohazard {

/// Cumulative hazard analogue: jumps 1/Y at every birth level.
StepCurve nelson_aalen(const BirthProcess& bp,
                       RiskConvention convention = RiskConvention::left);

/// Classic variance estimator, jumps 1/Y^2. Anti-conservative for dependent
/// fields; kept for the reference method and diagnostics.
StepCurve naive_variance(const BirthProcess& bp,
                         RiskConvention convention = RiskConvention::left);

struct AtRiskGrid {
    std::vector<double> percentile_levels;  // one per requested probability
    std::vector<double> grid;               // M points spanning at-risk 0.95..0.05
};

/// Empirical levels where the pooled at-risk fraction crosses each p, plus an
/// M-point equally spaced grid over the central 90% of the at-risk range.
AtRiskGrid at_risk_percentile_grid(std::span<const LatticeField> fields,
                                   std::span<const double> probs, int m_points);

/// Same, but pooling already-computed birth processes.
AtRiskGrid at_risk_percentile_grid(std::span<const BirthProcess> processes,
                                   std::span<const double> probs, int m_points);

/// Output-formatting option: relabel levels as exp(level) for a nonnegative
/// axis. Internal computation always stays on the raw level scale.
StepCurve exp_rescaled(const StepCurve& curve);

}  // namespace topohazard
