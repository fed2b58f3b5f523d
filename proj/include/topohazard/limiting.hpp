#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "topohazard/lattice.hpp"
#include "topohazard/randfield.hpp"
#include "topohazard/step_curve.hpp"

namespace topohazard {

struct OrthantResult {
    double prob = 0.0;
    double se = 0.0;
};

/// pr(Y_i > lower_i for all i), Y ~ N(0, sigma). Genz sequential-conditioning
/// transform to the unit cube, integrated with a randomly shifted
/// low-discrepancy rule; the se comes from the independent shifts.
OrthantResult mvn_excess_prob(const Eigen::VectorXd& lower,
                              const Eigen::MatrixXd& sigma, int samples,
                              std::uint64_t seed);

/// pr(Z_i > threshold for all i), Z ~ N(mean, cor). Dimension capped at 9.
OrthantResult mvn_upper_orthant(const Eigen::VectorXd& mean,
                                const Eigen::MatrixXd& cor, double threshold,
                                int samples, std::uint64_t seed);

/// Cells grouped by the geometry of their neighbor set. Under a stationary
/// isotropic correlation every cell in a class has the same orthant
/// integrals, which cuts the per-level work from |X| to a handful.
struct NeighborClass {
    std::vector<std::array<double, 2>> displacements;  // neighbor offsets
    long count = 0;
};

std::vector<NeighborClass> neighbor_classes(int nrows, int ncols, Boundary boundary,
                                            Neighborhood neighborhood);

/// Gaussian conditioning of the neighbor values on the center value: given
/// z_center = u the neighbors are N(rho u, cov) with rho the center-neighbor
/// correlation vector and cov = Sigma_nn - rho rho^T.
void conditional_law(const std::function<double(double)>& cor,
                     const NeighborClass& cls, Eigen::VectorXd& rho,
                     Eigen::MatrixXd& cov);

struct LimitSpec {
    std::optional<MaternParams> matern;  // absent: independent N(0,1) values
    int nrows = 0;
    int ncols = 0;
    Boundary boundary = Boundary::open;
    Neighborhood neighborhood = Neighborhood::edge4;
    std::vector<double> grid;       // sorted output levels
    int mc_samples = 20000;         // per orthant integral, >= 1e4
    int internal_grid_points = 400; // integration grid across the output range
    std::uint64_t seed = 0x6c696d6974ULL;
};

struct LimitCurveResult {
    StepCurve curve;             // kind grid over spec.grid
    std::vector<double> mc_se;   // Monte Carlo se of each curve value
    bool truncated = false;      // denominator underflowed before grid end
    double truncation_level = 0.0;
};

/// Limiting cumulative-hazard curve of the mean Nelson-Aalen estimator for a
/// Gaussian field: numerator sums conditional upper-orthant probabilities of
/// the neighbors given the center, the denominator joint upper-orthant
/// probabilities, integrated by the trapezoid rule. The independent case
/// collapses to -log(1 - Phi(t)) and is evaluated in closed form.
LimitCurveResult limit_curve(const LimitSpec& spec);

/// Numerical path with an arbitrary isotropic correlation; the engine behind
/// limit_curve and the hook that checks the i.i.d. collapse numerically.
LimitCurveResult limit_curve_numerical(const LimitSpec& spec,
                                       const std::function<double(double)>& cor);

/// Level t where the expected per-cell at-risk probability pr(z_x > t,
/// z_(x) > t 1) equals p; bisection on the class-weighted orthant integral.
double expected_at_risk_level(const LimitSpec& spec, double p);

}  // namespace topohazard
