#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "topohazard/limiting.hpp"
#include "topohazard/randfield.hpp"
#include "topohazard/step_curve.hpp"

namespace topohazard {

enum class BandMethod { replicate, bootstrap, naive };

struct BandResult {
    std::vector<double> grid;
    std::vector<double> center;
    std::vector<double> half_width;       // >= 0; 0 at degenerate points
    double threshold = 0.0;               // z, c_gamma, d_alpha or the EP constant
    double alpha = 0.0;
    BandMethod method = BandMethod::replicate;
    bool simultaneous = false;
    std::vector<std::uint8_t> degenerate;  // points dropped from the max statistic
    std::vector<std::string> warnings;

    /// True when the reference curve lies inside the band at every
    /// non-degenerate grid point.
    bool covers(const std::vector<double>& reference) const;
};

/// Pointwise normal intervals from replicate curves on a common grid.
BandResult replicate_pointwise(const std::vector<StepCurve>& curves, double alpha);

/// Simultaneous band: the threshold is the upper-alpha quantile of the max
/// absolute coordinate of mc_draws Gaussian vectors with the correlation
/// estimated from the replicates (standard margins).
BandResult replicate_band(const std::vector<StepCurve>& curves, double alpha,
                          int mc_draws, std::uint64_t seed);

/// Parametric bootstrap from a single field: Matern MLE, B resimulations,
/// max-statistic calibration; the band is centered on the original curve.
BandResult bootstrap_band(const LatticeField& field, int B, double alpha,
                          const std::vector<double>& grid, std::uint64_t seed,
                          const MleOptions& mle = {});

/// Calibration step given precomputed bootstrap curves (exposed so degenerate
/// inputs can be driven directly).
BandResult bootstrap_band_from_curves(const StepCurve& original,
                                      const std::vector<StepCurve>& boot_curves,
                                      double alpha);

/// Naive pointwise intervals from the classic variance estimator.
BandResult naive_pointwise(const StepCurve& na_on_grid, const StepCurve& var_on_grid,
                           double alpha);

/// Naive simultaneous band: equal-precision band whose constant comes from
/// simulating a Brownian motion with the estimated variance profile, i.e.
/// pretending the jumps had independent increments. Kept as the reference
/// method; under field dependence it undercovers badly.
BandResult naive_band(const StepCurve& na_on_grid, const StepCurve& var_on_grid,
                      double alpha, int mc_draws, std::uint64_t seed);

struct CoverageConfig {
    FieldModel model;              // data-generating model (limit curve needs m1)
    int nrows = 60;
    int ncols = 60;
    BandMethod method = BandMethod::replicate;
    int trials = 100;
    int replicates = 40;           // N for the replicate method
    int bootstrap_B = 200;
    double alpha = 0.05;
    int grid_points = 200;
    int mc_draws = 10000;          // threshold simulation per trial
    int mc_samples = 20000;        // orthant samples for the true curve
    std::vector<double> probs = {0.9, 0.7, 0.5, 0.3, 0.1};
    std::uint64_t seed = 1;
    MleOptions mle;                // used by bootstrap trials
};

struct CoverageResult {
    std::vector<double> probs;
    std::vector<double> levels;          // at-risk percentile levels
    std::vector<double> pointwise_pct;   // coverage percentage per level
    double scb_pct = 0.0;                // simultaneous coverage percentage
    std::vector<double> grid;
    int trials = 0;
};

/// End-to-end coverage run: percentile levels and the true curve come from the
/// limiting module, trials simulate data and check interval/band coverage.
CoverageResult coverage_experiment(const CoverageConfig& config);

}  // namespace topohazard
