#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "topohazard/lattice.hpp"

namespace topohazard {

/// Matern correlation parameters: range eta (lattice-distance units) and
/// smoothness nu.
struct MaternParams {
    double eta = 1.0;
    double nu = 0.5;
    void validate() const {
        if (!(eta > 0.0) || !(nu > 0.0))
            throw std::domain_error("MaternParams: eta and nu must be positive");
    }
};

/// cor(u) = 2^(1-nu)/Gamma(nu) * (sqrt(2 nu) u / eta)^nu * K_nu(sqrt(2 nu) u / eta),
/// with the limit 1 at u = 0.
double matern_cor(double u, const MaternParams& p);

enum class ModelKind { m1, m2, m3 };

/// A simulation model: the marginal-transform chain (identity, chi^2_1 or
/// F_{3,3} squashed back to N(0,1)) applied to Gaussian fields with the given
/// inner Matern parameters.
struct FieldModel {
    ModelKind kind = ModelKind::m1;
    MaternParams matern;
};

/// Dense-Cholesky sampler for a stationary Gaussian field on a lattice.
/// The factorization is done once and reused across replicate draws, which is
/// what makes replicate batches cheap. Limited to 10^4 cells.
class GrfSampler {
public:
    GrfSampler(int nrows, int ncols, const MaternParams& p);

    int nrows() const { return nrows_; }
    int ncols() const { return ncols_; }

    /// Field for replicate `replicate` of master seed `seed`; a counter-based
    /// stream per replicate keeps parallel and serial batches identical.
    LatticeField draw(std::uint64_t seed, std::uint64_t replicate,
                      bool mean_correct = true) const;

    /// Raw (uncorrected) draws for replicates [first, first+count) as columns.
    Eigen::MatrixXd draw_columns(std::uint64_t seed, std::uint64_t first,
                                 int count) const;

    const MaternParams& params() const { return params_; }

private:
    int nrows_;
    int ncols_;
    MaternParams params_;
    Eigen::MatrixXd chol_;  // lower factor of the jittered covariance
};

/// One-shot draw of a mean-corrected unit-variance Gaussian field.
LatticeField simulate_grf(int nrows, int ncols, const MaternParams& p,
                          std::uint64_t seed, bool mean_correct = true);

/// Probability integral transforms used by M2 and M3; exact N(0,1) margins.
double chi1_to_normal(double y);
double f33_to_normal(double ratio);

struct ModelDraw {
    std::vector<double> pre_transform;   // chi^2_1 values (M2), F ratios (M3)
    std::vector<double> pre_correction;  // transformed values before mean removal
    LatticeField field;
};

LatticeField simulate_model(const FieldModel& model, int nrows, int ncols,
                            std::uint64_t seed);
ModelDraw simulate_model_detail(const FieldModel& model, int nrows, int ncols,
                                std::uint64_t seed);
/// Same draw but reusing a prebuilt sampler (must carry model.matern), so
/// replicate batches pay for one factorization.
ModelDraw simulate_model_detail(const FieldModel& model, const GrfSampler& sampler,
                                std::uint64_t seed);

struct MatchOptions {
    int max_lag = 10;
    int pairs_per_lag = 1000;    // Monte Carlo pairs per objective evaluation
    int report_pairs = 50000;    // independent-sample size for quality report
    int max_evaluations = 250;
    std::uint64_t seed = 0x746f706f68617aULL;
};

struct MatchResult {
    MaternParams params;               // inner-field parameters
    std::vector<double> target_cor;    // lags 1..max_lag
    std::vector<double> achieved_cor;  // transformed-field lag correlations at params
    double max_discrepancy = 0.0;
    int evaluations = 0;
};

class MatchNonConvergence : public std::runtime_error {
public:
    MatchNonConvergence(const std::string& msg, MaternParams best, double value)
        : std::runtime_error(msg), best_iterate(best), best_value(value) {}
    MaternParams best_iterate;
    double best_value;
};

/// Inner Gaussian parameters whose transformed field best matches the target
/// Matern lag correlations in least squares over lags 1..max_lag. Common
/// random numbers make the objective, and hence the result, deterministic.
MatchResult match_correlation(const MaternParams& target, ModelKind kind,
                              const MatchOptions& opts = {});

/// Lag correlation of the transformed field when the inner Gaussian pair has
/// correlation rho; Monte Carlo over n_pairs pairs. Also serves as the
/// matching-quality oracle.
double transformed_lag_correlation(ModelKind kind, double rho, int n_pairs,
                                   std::uint64_t seed);

struct MleOptions {
    double eta_lo = 0.05, eta_hi = 200.0;
    double nu_lo = 0.05, nu_hi = 20.0;
    int max_evaluations = 220;
    bool coarse_grid = true;  // 15-point scan before the simplex search
};

struct MaternFit {
    MaternParams params;
    double loglik = 0.0;
    int evaluations = 0;
    bool at_eta_lower_bound = false;
};

/// Zero-mean Gaussian log likelihood of the field under Matern correlation;
/// throws if the jittered covariance cannot be factorized.
double matern_loglik(const LatticeField& field, const MaternParams& p);

/// Maximum likelihood (eta, nu) by derivative-free search on the log scale.
MaternFit fit_matern_mle(const LatticeField& field, const MleOptions& opts = {});

}  // namespace topohazard
