#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "topohazard/step_curve.hpp"
#include "topohazard/trees.hpp"

namespace topohazard {

enum class TieMethod { breslow, efron };

/// Model description: plain log-linear covariates, named multi-column groups
/// (e.g. a basis expansion reported with a joint chi-square), and optionally
/// tree_id fixed-effect dummies with the first level as reference.
struct CoxTermSpec {
    std::vector<std::string> covariates;
    std::vector<std::pair<std::string, std::vector<std::string>>> groups;
    bool tree_factor = false;
    TieMethod ties = TieMethod::breslow;
};

enum class TermKind { covariate, group, factor };

struct CoxTerm {
    std::string name;
    TermKind kind = TermKind::covariate;
    std::vector<int> columns;  // indices into coefficients
    double chi_square = 0.0;   // Wald
    int df = 0;
};

struct CoxFit {
    std::vector<std::string> coef_names;
    Eigen::VectorXd coefficients;
    Eigen::VectorXd se;
    Eigen::MatrixXd covariance;
    double log_partial_likelihood = 0.0;
    std::vector<CoxTerm> terms;
    StepCurve baseline;  // Breslow cumulative hazard at beta-hat, covariates at 0
    std::vector<std::string> factor_levels;  // first entry is the reference
    int iterations = 0;
};

/// Partial likelihood with delayed-entry risk sets {entry < r <= exit},
/// maximized by Newton-Raphson with step halving. Breslow ties by default.
CoxFit cox_fit(const EventTable& table, EventStatus event, const CoxTermSpec& spec);

struct CoxObjective {
    double loglik = 0.0;
    Eigen::VectorXd gradient;
    Eigen::MatrixXd hessian;
};

/// Log partial likelihood with analytic derivatives at an arbitrary beta,
/// on the same (centered) design the fitter uses.
CoxObjective cox_partial_likelihood(const EventTable& table, EventStatus event,
                                    const CoxTermSpec& spec,
                                    const Eigen::VectorXd& beta);

/// Max relative discrepancy between the analytic gradient/Hessian and central
/// finite differences (step 1e-5) at beta.
double gradient_check(const EventTable& table, EventStatus event,
                      const CoxTermSpec& spec, const Eigen::VectorXd& beta);

struct HazardRatioResult {
    std::vector<std::pair<std::string, double>> values;  // one per term
    std::vector<std::string> warnings;
};

/// Effect sizes as hazard ratios between the 20% and 80% points: single
/// covariates use their empirical quantile gap; grouped terms the gap of the
/// per-row fitted contribution; the factor the gap of its level effects.
HazardRatioResult hazard_ratio_20_80(const CoxFit& fit, const EventTable& table);

}  // namespace topohazard
