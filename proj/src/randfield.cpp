#include "topohazard/randfield.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/special_functions/bessel.hpp>

#include "topohazard/num.hpp"
#include "topohazard/optim.hpp"
#include "topohazard/rng.hpp"

namespace topohazard {

double matern_cor(double u, const MaternParams& p) {
    p.validate();
    if (u < 0.0) throw std::domain_error("matern_cor: distance must be nonnegative");
    if (u == 0.0) return 1.0;
    const double x = std::sqrt(2.0 * p.nu) * u / p.eta;
    if (x > 705.0) return 0.0;  // K_nu underflows
    const double log_scale =
        (1.0 - p.nu) * 0.6931471805599453094 - std::lgamma(p.nu) + p.nu * std::log(x);
    const double value = std::exp(log_scale) * boost::math::cyl_bessel_k(p.nu, x);
    return std::clamp(value, 0.0, 1.0);
}

namespace {

constexpr int kDenseCellLimit = 10000;

/// Correlations for every squared lattice distance that occurs on the grid.
std::vector<double> correlation_table(int nrows, int ncols, const MaternParams& p) {
    const int max_d2 = (nrows - 1) * (nrows - 1) + (ncols - 1) * (ncols - 1);
    std::vector<double> table(static_cast<std::size_t>(max_d2) + 1,
                              std::numeric_limits<double>::quiet_NaN());
    for (int dr = 0; dr < nrows; ++dr)
        for (int dc = 0; dc < ncols; ++dc) {
            const int d2 = dr * dr + dc * dc;
            if (std::isnan(table[static_cast<std::size_t>(d2)]))
                table[static_cast<std::size_t>(d2)] =
                    matern_cor(std::sqrt(static_cast<double>(d2)), p);
        }
    return table;
}

/// Lower triangle of the Matern covariance over row-major cells.
void fill_covariance_lower(int nrows, int ncols, const std::vector<double>& table,
                           Eigen::MatrixXd& sigma) {
    const int n = nrows * ncols;
    sigma.resize(n, n);
    for (int i = 0; i < n; ++i) {
        const int ri = i / ncols, ci = i % ncols;
        for (int j = 0; j <= i; ++j) {
            const int rj = j / ncols, cj = j % ncols;
            const int d2 = (ri - rj) * (ri - rj) + (ci - cj) * (ci - cj);
            sigma(i, j) = table[static_cast<std::size_t>(d2)];
        }
        sigma(i, i) += 1e-10;  // jitter, applied once before factorization
    }
}

}  // namespace

GrfSampler::GrfSampler(int nrows, int ncols, const MaternParams& p)
    : nrows_(nrows), ncols_(ncols), params_(p) {
    p.validate();
    if (nrows <= 0 || ncols <= 0)
        throw std::invalid_argument("GrfSampler: dimensions must be positive");
    if (nrows * ncols > kDenseCellLimit)
        throw std::invalid_argument(
            "GrfSampler: lattice exceeds the 10^4-cell dense-Cholesky guard");
    Eigen::MatrixXd sigma;
    fill_covariance_lower(nrows, ncols, correlation_table(nrows, ncols, p), sigma);
    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error(
            "GrfSampler: covariance not positive definite after jitter");
    chol_ = llt.matrixL();
}

LatticeField GrfSampler::draw(std::uint64_t seed, std::uint64_t replicate,
                              bool mean_correct) const {
    const int n = nrows_ * ncols_;
    RngStream rng(seed, derive_stream(seed, {0x677266ULL, replicate}));
    Eigen::VectorXd xi(n);
    for (int i = 0; i < n; ++i) xi(i) = rng.normal();
    Eigen::VectorXd z = chol_.triangularView<Eigen::Lower>() * xi;
    if (mean_correct) z.array() -= z.mean();
    return LatticeField(nrows_, ncols_,
                        std::vector<double>(z.data(), z.data() + n));
}

Eigen::MatrixXd GrfSampler::draw_columns(std::uint64_t seed, std::uint64_t first,
                                         int count) const {
    const int n = nrows_ * ncols_;
    Eigen::MatrixXd xi(n, count);
    for (int j = 0; j < count; ++j) {
        RngStream rng(seed, derive_stream(seed, {0x677266ULL, first + static_cast<std::uint64_t>(j)}));
        for (int i = 0; i < n; ++i) xi(i, j) = rng.normal();
    }
    return chol_.triangularView<Eigen::Lower>() * xi;
}

LatticeField simulate_grf(int nrows, int ncols, const MaternParams& p,
                          std::uint64_t seed, bool mean_correct) {
    return GrfSampler(nrows, ncols, p).draw(seed, 0, mean_correct);
}

double chi1_to_normal(double y) {
    if (y < 0.0) throw std::domain_error("chi1_to_normal: negative chi-square value");
    // F_1(y) = 1 - 2 Phi(-sqrt(y)); work in the upper tail for stability.
    const double q = std::erfc(std::sqrt(y) * 0.7071067811865475244);
    if (q <= 0.0) return kInf;
    return -normal_quantile(std::min(q, 1.0 - 1e-16) < 1.0 ? q : 1.0 - 1e-16);
}

double f33_to_normal(double ratio) {
    if (!(ratio > 0.0)) throw std::domain_error("f33_to_normal: ratio must be positive");
    static const boost::math::fisher_f_distribution<double> f33(3.0, 3.0);
    // F(3,3) is reciprocal-symmetric: F(x) = 1 - F(1/x), so evaluate the CDF
    // only on (0, 1] where it is well conditioned.
    if (ratio <= 1.0) return normal_quantile(boost::math::cdf(f33, ratio));
    return -normal_quantile(boost::math::cdf(f33, 1.0 / ratio));
}

namespace {

ModelDraw draw_m1(const GrfSampler& sampler, std::uint64_t seed) {
    LatticeField raw = sampler.draw(seed, 0, /*mean_correct=*/false);
    std::vector<double> values = raw.values();
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    std::vector<double> corrected = values;
    for (double& v : corrected) v -= mean;
    return {values, values,
            LatticeField(sampler.nrows(), sampler.ncols(), std::move(corrected))};
}

ModelDraw draw_m2(const GrfSampler& sampler, std::uint64_t seed) {
    LatticeField raw = sampler.draw(seed, 0, /*mean_correct=*/false);
    const std::size_t n = raw.values().size();
    std::vector<double> y(n), z(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = raw.values()[i];
        y[i] = x * x;
        z[i] = chi1_to_normal(y[i]);
    }
    std::vector<double> corrected = z;
    double mean = 0.0;
    for (double v : corrected) mean += v;
    mean /= static_cast<double>(n);
    for (double& v : corrected) v -= mean;
    return {std::move(y), std::move(z),
            LatticeField(sampler.nrows(), sampler.ncols(), std::move(corrected))};
}

ModelDraw draw_m3(const GrfSampler& sampler, std::uint64_t seed) {
    const std::size_t n =
        static_cast<std::size_t>(sampler.nrows()) * static_cast<std::size_t>(sampler.ncols());
    std::vector<double> num(n, 0.0), den(n, 0.0);
    for (int k = 0; k < 6; ++k) {
        LatticeField g = sampler.draw(seed, static_cast<std::uint64_t>(k),
                                      /*mean_correct=*/false);
        auto& acc = k < 3 ? num : den;
        for (std::size_t i = 0; i < n; ++i) acc[i] += g.values()[i] * g.values()[i];
    }
    std::vector<double> ratio(n), z(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (den[i] <= 0.0)
            throw std::runtime_error("simulate_model: degenerate chi-square denominator");
        ratio[i] = num[i] / den[i];
        z[i] = f33_to_normal(ratio[i]);
    }
    std::vector<double> corrected = z;
    double mean = 0.0;
    for (double v : corrected) mean += v;
    mean /= static_cast<double>(n);
    for (double& v : corrected) v -= mean;
    return {std::move(ratio), std::move(z),
            LatticeField(sampler.nrows(), sampler.ncols(), std::move(corrected))};
}

}  // namespace

ModelDraw simulate_model_detail(const FieldModel& model, const GrfSampler& sampler,
                                std::uint64_t seed) {
    switch (model.kind) {
        case ModelKind::m1: return draw_m1(sampler, seed);
        case ModelKind::m2: return draw_m2(sampler, seed);
        case ModelKind::m3: return draw_m3(sampler, seed);
    }
    throw std::logic_error("simulate_model: unknown model kind");
}

ModelDraw simulate_model_detail(const FieldModel& model, int nrows, int ncols,
                                std::uint64_t seed) {
    return simulate_model_detail(model, GrfSampler(nrows, ncols, model.matern), seed);
}

LatticeField simulate_model(const FieldModel& model, int nrows, int ncols,
                            std::uint64_t seed) {
    return simulate_model_detail(model, nrows, ncols, seed).field;
}

namespace {

int normals_per_pair(ModelKind kind) { return kind == ModelKind::m2 ? 2 : 12; }

/// Transformed pair from base normals with inner correlation rho.
/// M2 squares each coordinate; M3 forms the ratio of two 3-term square sums.
/// Every base pair shares rho, so the pair correlation is the lag correlation.
std::pair<double, double> transformed_pair(ModelKind kind, double rho,
                                           const double* xi) {
    const double s = std::sqrt(std::max(0.0, 1.0 - rho * rho));
    auto correlate = [&](double a, double b) { return rho * a + s * b; };
    if (kind == ModelKind::m2) {
        const double x1 = xi[0], x2 = correlate(xi[0], xi[1]);
        return {chi1_to_normal(x1 * x1), chi1_to_normal(x2 * x2)};
    }
    double num1 = 0.0, den1 = 0.0, num2 = 0.0, den2 = 0.0;
    for (int k = 0; k < 6; ++k) {
        const double a = xi[2 * k];
        const double b = correlate(a, xi[2 * k + 1]);
        if (k < 3) {
            num1 += a * a;
            num2 += b * b;
        } else {
            den1 += a * a;
            den2 += b * b;
        }
    }
    return {f33_to_normal(num1 / den1), f33_to_normal(num2 / den2)};
}

double pair_correlation(ModelKind kind, double rho, const std::vector<double>& base,
                        int n_pairs) {
    const int width = normals_per_pair(kind);
    double s1 = 0.0, s2 = 0.0, s11 = 0.0, s22 = 0.0, s12 = 0.0;
    for (int i = 0; i < n_pairs; ++i) {
        auto [z1, z2] = transformed_pair(kind, rho, base.data() + static_cast<std::size_t>(i) * width);
        s1 += z1;
        s2 += z2;
        s11 += z1 * z1;
        s22 += z2 * z2;
        s12 += z1 * z2;
    }
    // Sample correlation rather than the known-margin cross moment: its Monte
    // Carlo error carries the (1 - rho^2) factor, which matters at the short
    // lags where the target correlation is close to 1.
    const double n = n_pairs;
    const double cov = s12 / n - (s1 / n) * (s2 / n);
    const double v1 = s11 / n - (s1 / n) * (s1 / n);
    const double v2 = s22 / n - (s2 / n) * (s2 / n);
    return cov / std::sqrt(v1 * v2);
}

std::vector<double> base_normals(ModelKind kind, int n_pairs, std::uint64_t seed,
                                 std::uint64_t tag) {
    const int width = normals_per_pair(kind);
    std::vector<double> base(static_cast<std::size_t>(n_pairs) * width);
    RngStream rng(seed, derive_stream(seed, {0x6d617463ULL, tag}));
    for (double& v : base) v = rng.normal();
    return base;
}

}  // namespace

double transformed_lag_correlation(ModelKind kind, double rho, int n_pairs,
                                   std::uint64_t seed) {
    if (kind == ModelKind::m1) return rho;
    return pair_correlation(kind, rho, base_normals(kind, n_pairs, seed, 0), n_pairs);
}

MatchResult match_correlation(const MaternParams& target, ModelKind kind,
                              const MatchOptions& opts) {
    target.validate();
    if (kind == ModelKind::m1)
        throw std::invalid_argument("match_correlation: M1 needs no matching");

    MatchResult result;
    result.target_cor.reserve(static_cast<std::size_t>(opts.max_lag));
    for (int u = 1; u <= opts.max_lag; ++u)
        result.target_cor.push_back(matern_cor(static_cast<double>(u), target));

    // One fixed base-normal block per lag, reused for every candidate: common
    // random numbers make the objective a deterministic function of theta.
    // The search runs twice: a full simplex search at pairs_per_lag, then a
    // short refinement at 8x the pairs to keep optimizer noise out of the
    // fitted parameters.
    auto make_objective = [&](int pairs, std::uint64_t tag_base) {
        auto base = std::make_shared<std::vector<std::vector<double>>>();
        for (int u = 1; u <= opts.max_lag; ++u)
            base->push_back(base_normals(kind, pairs, opts.seed,
                                         tag_base + static_cast<std::uint64_t>(u)));
        return [&, base, pairs](const std::vector<double>& logtheta) {
            const MaternParams p{std::exp(logtheta[0]), std::exp(logtheta[1])};
            if (p.eta < 1e-3 || p.eta > 1e4 || p.nu < 0.02 || p.nu > 50.0)
                return std::numeric_limits<double>::infinity();
            double ss = 0.0;
            for (int u = 1; u <= opts.max_lag; ++u) {
                const double rho = matern_cor(static_cast<double>(u), p);
                const double c =
                    pair_correlation(kind, rho, (*base)[static_cast<std::size_t>(u - 1)], pairs);
                const double d = c - result.target_cor[static_cast<std::size_t>(u - 1)];
                ss += d * d;
            }
            return ss;
        };
    };

    NelderMeadOptions nm;
    nm.max_evaluations = opts.max_evaluations;
    nm.f_tol = 1e-10;
    nm.x_tol = 1e-4;
    nm.initial_step = 0.3;
    NelderMeadResult nr =
        nelder_mead(make_objective(opts.pairs_per_lag, 0),
                    {std::log(target.eta * 1.5), std::log(target.nu)}, nm);
    if (!nr.converged)
        throw MatchNonConvergence(
            "match_correlation: no convergence within budget (best eta=" +
                std::to_string(std::exp(nr.x[0])) +
                ", nu=" + std::to_string(std::exp(nr.x[1])) + ")",
            {std::exp(nr.x[0]), std::exp(nr.x[1])}, nr.value);

    NelderMeadOptions nm2 = nm;
    nm2.max_evaluations = std::max(60, opts.max_evaluations / 3);
    nm2.initial_step = 0.08;
    NelderMeadResult nr2 =
        nelder_mead(make_objective(8 * opts.pairs_per_lag, 0x10000), nr.x, nm2);
    if (nr2.value <= nr.value) nr = nr2;

    const MaternParams fitted{std::exp(nr.x[0]), std::exp(nr.x[1])};
    result.params = fitted;
    result.evaluations = nr.evaluations + nr2.evaluations;
    result.achieved_cor.reserve(static_cast<std::size_t>(opts.max_lag));
    // Independent, larger sample for the quality report.
    const std::vector<double> report_base =
        base_normals(kind, opts.report_pairs, opts.seed, 0x7265706f7274ULL);
    for (int u = 1; u <= opts.max_lag; ++u) {
        const double rho = matern_cor(static_cast<double>(u), fitted);
        const double c = pair_correlation(kind, rho, report_base, opts.report_pairs);
        result.achieved_cor.push_back(c);
        result.max_discrepancy =
            std::max(result.max_discrepancy,
                     std::fabs(c - result.target_cor[static_cast<std::size_t>(u - 1)]));
    }
    return result;
}

double matern_loglik(const LatticeField& field, const MaternParams& p) {
    p.validate();
    const int n = field.size();
    if (n > kDenseCellLimit)
        throw std::invalid_argument("matern_loglik: lattice exceeds the dense guard");
    Eigen::MatrixXd sigma;
    fill_covariance_lower(field.nrows(), field.ncols(),
                          correlation_table(field.nrows(), field.ncols(), p), sigma);
    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("matern_loglik: covariance singular after jitter");
    Eigen::Map<const Eigen::VectorXd> z(field.values().data(), n);
    Eigen::VectorXd v = llt.matrixL().solve(z);
    double logdet = 0.0;
    for (int i = 0; i < n; ++i) logdet += std::log(llt.matrixL()(i, i));
    logdet *= 2.0;
    return -0.5 * (v.squaredNorm() + logdet +
                   n * 1.8378770664093454836);  // log(2 pi)
}

MaternFit fit_matern_mle(const LatticeField& field, const MleOptions& opts) {
    const int n = field.size();
    if (n > kDenseCellLimit)
        throw std::invalid_argument("fit_matern_mle: lattice exceeds the dense guard");

    int evals = 0;
    auto loglik_or_inf = [&](const MaternParams& p) {
        ++evals;
        try {
            return matern_loglik(field, p);
        } catch (const std::runtime_error&) {
            return -std::numeric_limits<double>::infinity();
        }
    };

    auto objective = [&](const std::vector<double>& logtheta) {
        const MaternParams p{std::exp(logtheta[0]), std::exp(logtheta[1])};
        if (p.eta < opts.eta_lo || p.eta > opts.eta_hi || p.nu < opts.nu_lo ||
            p.nu > opts.nu_hi)
            return std::numeric_limits<double>::infinity();
        return -loglik_or_inf(p);
    };

    std::vector<double> start{std::log(1.5), std::log(1.0)};
    if (opts.coarse_grid) {
        double best = std::numeric_limits<double>::infinity();
        for (double eta : {0.5, 1.5, 4.0, 10.0, 25.0})
            for (double nu : {0.35, 1.0, 2.8}) {
                if (eta < opts.eta_lo || eta > opts.eta_hi || nu < opts.nu_lo ||
                    nu > opts.nu_hi)
                    continue;
                const double v = objective({std::log(eta), std::log(nu)});
                if (v < best) {
                    best = v;
                    start = {std::log(eta), std::log(nu)};
                }
            }
    }

    NelderMeadOptions nm;
    nm.max_evaluations = opts.max_evaluations;
    nm.f_tol = 1e-9;
    nm.x_tol = 1e-4;
    nm.initial_step = 0.4;
    NelderMeadResult nr = nelder_mead(objective, start, nm);
    if (!nr.converged && !std::isfinite(nr.value))
        throw std::runtime_error("fit_matern_mle: search found no factorizable parameters");
    if (!nr.converged)
        throw std::runtime_error(
            "fit_matern_mle: no convergence after " + std::to_string(nr.evaluations) +
            " evaluations (best eta=" + std::to_string(std::exp(nr.x[0])) +
            ", nu=" + std::to_string(std::exp(nr.x[1])) +
            ", loglik=" + std::to_string(-nr.value) + ")");

    MaternFit fit;
    fit.params = {std::exp(nr.x[0]), std::exp(nr.x[1])};
    fit.loglik = -nr.value;
    fit.evaluations = evals;
    fit.at_eta_lower_bound = fit.params.eta < opts.eta_lo * 1.5;
    return fit;
}

}  // namespace topohazard
