#include "topohazard/inference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

#include "topohazard/filtration.hpp"
#include "topohazard/nelson_aalen.hpp"
#include "topohazard/num.hpp"
#include "topohazard/parallel.hpp"
#include "topohazard/rng.hpp"

namespace topohazard {

namespace {

/// Smallest value with empirical upper tail probability <= alpha.
double upper_quantile(std::vector<double> v, double alpha) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    std::size_t k = static_cast<std::size_t>(
        std::ceil((1.0 - alpha) * static_cast<double>(n)));
    if (k == 0) k = 1;
    if (k > n) k = n;
    return v[k - 1];
}

Eigen::MatrixXd curve_matrix(const std::vector<StepCurve>& curves) {
    const std::size_t n = curves.size();
    const std::size_t m = curves.front().levels.size();
    for (const StepCurve& c : curves) {
        if (c.levels.size() != m)
            throw std::domain_error("replicate curves: mismatched grids");
        for (std::size_t j = 0; j < m; ++j)
            if (c.levels[j] != curves.front().levels[j])
                throw std::domain_error("replicate curves: mismatched grids");
    }
    Eigen::MatrixXd x(n, m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = curves[i].values[j];
    return x;
}

}  // namespace

bool BandResult::covers(const std::vector<double>& reference) const {
    if (reference.size() != grid.size())
        throw std::invalid_argument("covers: reference size mismatch");
    for (std::size_t j = 0; j < grid.size(); ++j) {
        if (!degenerate.empty() && degenerate[j]) continue;
        if (std::fabs(reference[j] - center[j]) > half_width[j]) return false;
    }
    return true;
}

BandResult replicate_pointwise(const std::vector<StepCurve>& curves, double alpha) {
    if (curves.size() < 2)
        throw std::domain_error("replicate_pointwise: need at least 2 curves");
    const Eigen::MatrixXd x = curve_matrix(curves);
    const double n = static_cast<double>(x.rows());
    const double z = normal_quantile(1.0 - alpha / 2.0);

    BandResult out;
    out.grid = curves.front().levels;
    out.alpha = alpha;
    out.method = BandMethod::replicate;
    out.simultaneous = false;
    out.threshold = z;
    out.center.resize(static_cast<std::size_t>(x.cols()));
    out.half_width.resize(static_cast<std::size_t>(x.cols()));
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const double mean = x.col(j).mean();
        const double sd = std::sqrt((x.col(j).array() - mean).square().sum() / (n - 1.0));
        out.center[static_cast<std::size_t>(j)] = mean;
        out.half_width[static_cast<std::size_t>(j)] = z * sd / std::sqrt(n);
    }
    return out;
}

BandResult replicate_band(const std::vector<StepCurve>& curves, double alpha,
                          int mc_draws, std::uint64_t seed) {
    if (curves.size() < 3)
        throw std::domain_error("replicate_band: need at least 3 curves");
    const Eigen::MatrixXd x = curve_matrix(curves);
    const Eigen::Index m = x.cols();
    const double n = static_cast<double>(x.rows());

    BandResult out;
    out.grid = curves.front().levels;
    out.alpha = alpha;
    out.method = BandMethod::replicate;
    out.simultaneous = true;
    out.center.resize(static_cast<std::size_t>(m));
    out.half_width.assign(static_cast<std::size_t>(m), 0.0);
    out.degenerate.assign(static_cast<std::size_t>(m), 0);

    Eigen::VectorXd mean(m), sd(m);
    for (Eigen::Index j = 0; j < m; ++j) {
        mean(j) = x.col(j).mean();
        sd(j) = std::sqrt((x.col(j).array() - mean(j)).square().sum() / (n - 1.0));
        out.center[static_cast<std::size_t>(j)] = mean(j);
        if (sd(j) == 0.0) out.degenerate[static_cast<std::size_t>(j)] = 1;
    }
    std::vector<Eigen::Index> valid;
    for (Eigen::Index j = 0; j < m; ++j)
        if (!out.degenerate[static_cast<std::size_t>(j)]) valid.push_back(j);
    if (valid.empty())
        throw std::domain_error("replicate_band: every grid point is degenerate");
    if (valid.size() < static_cast<std::size_t>(m))
        out.warnings.push_back("zero-variance grid points dropped from the max statistic");

    // Correlation of the estimators over the valid points.
    const Eigen::Index mv = static_cast<Eigen::Index>(valid.size());
    Eigen::MatrixXd r(mv, mv);
    for (Eigen::Index a = 0; a < mv; ++a)
        for (Eigen::Index b = 0; b <= a; ++b) {
            const Eigen::Index ja = valid[static_cast<std::size_t>(a)];
            const Eigen::Index jb = valid[static_cast<std::size_t>(b)];
            const double cov =
                ((x.col(ja).array() - mean(ja)) * (x.col(jb).array() - mean(jb))).sum() /
                (n - 1.0);
            r(a, b) = r(b, a) = cov / (sd(ja) * sd(jb));
        }

    // Factor the (possibly rank-deficient) correlation via its spectrum;
    // negative eigenvalues are clipped, which is the nearest-PSD projection.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("replicate_band: eigendecomposition failed");
    const Eigen::VectorXd lam = es.eigenvalues();
    double clipped = 0.0;
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < lam.size(); ++i) {
        if (lam(i) < 1e-10)
            clipped = std::min(clipped, lam(i));
        else
            keep.push_back(i);
    }
    if (clipped < -1e-8)
        out.warnings.push_back("correlation projected to nearest PSD (min eigenvalue " +
                               std::to_string(clipped) + ")");
    // Rank-reduced factor: N replicates give correlation rank <= N-1, so the
    // simulation multiplies by an mv x rank matrix instead of mv x mv.
    const Eigen::Index rank = static_cast<Eigen::Index>(keep.size());
    Eigen::MatrixXd factor(mv, rank);
    for (Eigen::Index c = 0; c < rank; ++c)
        factor.col(c) =
            es.eigenvectors().col(keep[static_cast<std::size_t>(c)]) *
            std::sqrt(lam(keep[static_cast<std::size_t>(c)]));

    std::vector<double> stats(static_cast<std::size_t>(mc_draws));
    parallel_for(static_cast<std::size_t>(mc_draws), [&](std::size_t d) {
        RngStream rng(seed, derive_stream(seed, {0x62616e64ULL, d}));
        Eigen::VectorXd xi(rank);
        for (Eigen::Index i = 0; i < rank; ++i) xi(i) = rng.normal();
        stats[d] = (factor * xi).cwiseAbs().maxCoeff();
    });
    const double c = upper_quantile(std::move(stats), alpha);
    out.threshold = c;
    for (Eigen::Index j = 0; j < m; ++j)
        if (!out.degenerate[static_cast<std::size_t>(j)])
            out.half_width[static_cast<std::size_t>(j)] = c * sd(j) / std::sqrt(n);
    return out;
}

BandResult bootstrap_band_from_curves(const StepCurve& original,
                                      const std::vector<StepCurve>& boot_curves,
                                      double alpha) {
    if (boot_curves.size() < 2)
        throw std::domain_error("bootstrap_band: need at least 2 bootstrap curves");
    const Eigen::MatrixXd x = curve_matrix(boot_curves);
    const Eigen::Index m = x.cols();
    const double b = static_cast<double>(x.rows());
    if (original.levels.size() != static_cast<std::size_t>(m))
        throw std::invalid_argument("bootstrap_band: original curve not on the grid");

    BandResult out;
    out.grid = original.levels;
    out.alpha = alpha;
    out.method = BandMethod::bootstrap;
    out.simultaneous = true;
    out.center = original.values;
    out.half_width.assign(static_cast<std::size_t>(m), 0.0);
    out.degenerate.assign(static_cast<std::size_t>(m), 0);

    Eigen::VectorXd mean(m), sd(m);
    for (Eigen::Index j = 0; j < m; ++j) {
        mean(j) = x.col(j).mean();
        sd(j) = std::sqrt((x.col(j).array() - mean(j)).square().sum() / (b - 1.0));
        if (sd(j) == 0.0) out.degenerate[static_cast<std::size_t>(j)] = 1;
    }
    bool all_degenerate = true;
    for (Eigen::Index j = 0; j < m; ++j)
        if (!out.degenerate[static_cast<std::size_t>(j)]) all_degenerate = false;
    if (all_degenerate)
        throw std::domain_error(
            "bootstrap_band: zero bootstrap variance at every grid point");
    if (std::count(out.degenerate.begin(), out.degenerate.end(), std::uint8_t{1}) > 0)
        out.warnings.push_back("zero-variance grid points dropped from the max statistic");

    std::vector<double> g(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        double s = 0.0;
        for (Eigen::Index j = 0; j < m; ++j) {
            if (out.degenerate[static_cast<std::size_t>(j)]) continue;
            s = std::max(s, std::fabs(x(i, j) - mean(j)) / sd(j));
        }
        g[static_cast<std::size_t>(i)] = s;
    }
    const double d_alpha = upper_quantile(std::move(g), alpha);
    out.threshold = d_alpha;
    for (Eigen::Index j = 0; j < m; ++j)
        if (!out.degenerate[static_cast<std::size_t>(j)])
            out.half_width[static_cast<std::size_t>(j)] = d_alpha * sd(j);
    return out;
}

BandResult bootstrap_band(const LatticeField& field, int B, double alpha,
                          const std::vector<double>& grid, std::uint64_t seed,
                          const MleOptions& mle) {
    if (B < 100) throw std::domain_error("bootstrap_band: B must be at least 100");
    const MaternFit fit = fit_matern_mle(field, mle);
    const GrfSampler sampler(field.nrows(), field.ncols(), fit.params);

    const StepCurve original = discretize(nelson_aalen(birth_process(field)), grid);
    std::vector<StepCurve> boot(static_cast<std::size_t>(B));
    parallel_for(static_cast<std::size_t>(B), [&](std::size_t bi) {
        const LatticeField sim = sampler.draw(seed, bi + 1, /*mean_correct=*/true);
        boot[bi] = discretize(nelson_aalen(birth_process(sim)), grid);
    });
    return bootstrap_band_from_curves(original, boot, alpha);
}

BandResult naive_pointwise(const StepCurve& na_on_grid, const StepCurve& var_on_grid,
                           double alpha) {
    if (na_on_grid.levels != var_on_grid.levels)
        throw std::invalid_argument("naive intervals: estimator/variance grid mismatch");
    const double z = normal_quantile(1.0 - alpha / 2.0);
    BandResult out;
    out.grid = na_on_grid.levels;
    out.center = na_on_grid.values;
    out.alpha = alpha;
    out.method = BandMethod::naive;
    out.simultaneous = false;
    out.threshold = z;
    out.half_width.reserve(out.grid.size());
    for (double v : var_on_grid.values) out.half_width.push_back(z * std::sqrt(v));
    return out;
}

BandResult naive_band(const StepCurve& na_on_grid, const StepCurve& var_on_grid,
                      double alpha, int mc_draws, std::uint64_t seed) {
    if (na_on_grid.levels != var_on_grid.levels)
        throw std::invalid_argument("naive_band: estimator/variance grid mismatch");
    const std::size_t m = na_on_grid.levels.size();

    BandResult out;
    out.grid = na_on_grid.levels;
    out.center = na_on_grid.values;
    out.alpha = alpha;
    out.method = BandMethod::naive;
    out.simultaneous = true;
    out.half_width.assign(m, 0.0);
    out.degenerate.assign(m, 0);
    std::vector<std::size_t> valid;
    for (std::size_t j = 0; j < m; ++j) {
        if (var_on_grid.values[j] > 0.0)
            valid.push_back(j);
        else
            out.degenerate[j] = 1;
    }
    if (valid.empty()) throw std::domain_error("naive_band: variance is zero everywhere");

    // Equal-precision constant under the classic variance estimator: treat the
    // estimator as a Brownian motion time-changed by the variance profile
    // (independent increments) and simulate its maximum standardized excursion.
    std::vector<double> stats(static_cast<std::size_t>(mc_draws));
    parallel_for(static_cast<std::size_t>(mc_draws), [&](std::size_t d) {
        RngStream rng(seed, derive_stream(seed, {0x6e61697665ULL, d}));
        double w = 0.0, vprev = 0.0, stat = 0.0;
        for (std::size_t j : valid) {
            const double v = var_on_grid.values[j];
            const double dv = v - vprev;
            if (dv > 0.0) w += std::sqrt(dv) * rng.normal();
            vprev = v;
            stat = std::max(stat, std::fabs(w) / std::sqrt(v));
        }
        stats[d] = stat;
    });
    const double e = upper_quantile(std::move(stats), alpha);
    out.threshold = e;
    for (std::size_t j : valid)
        out.half_width[j] = e * std::sqrt(var_on_grid.values[j]);
    return out;
}

namespace {

bool pointwise_covered(double center, double half, double truth) {
    return std::fabs(truth - center) <= half;
}

}  // namespace

CoverageResult coverage_experiment(const CoverageConfig& config) {
    if (config.model.kind != ModelKind::m1)
        throw std::invalid_argument(
            "coverage_experiment: the true curve is only available for Gaussian fields");

    LimitSpec lspec;
    lspec.matern = config.model.matern;
    lspec.nrows = config.nrows;
    lspec.ncols = config.ncols;
    lspec.mc_samples = config.mc_samples;
    lspec.seed = derive_stream(config.seed, {0x7472757468ULL});

    CoverageResult result;
    result.probs = config.probs;
    result.trials = config.trials;
    result.pointwise_pct.assign(config.probs.size(), 0.0);
    if (config.trials == 0) return result;

    // At-risk percentile levels and the central-90% grid.
    for (double p : config.probs)
        result.levels.push_back(expected_at_risk_level(lspec, p));
    const double lo = expected_at_risk_level(lspec, 0.95);
    const double hi = expected_at_risk_level(lspec, 0.05);
    result.grid = linspace(lo, hi, config.grid_points);

    // True curve on the grid and at the percentile levels.
    std::vector<double> eval = result.grid;
    eval.insert(eval.end(), result.levels.begin(), result.levels.end());
    std::sort(eval.begin(), eval.end());
    eval.erase(std::unique(eval.begin(), eval.end()), eval.end());
    lspec.grid = eval;
    const LimitCurveResult truth = limit_curve(lspec);
    auto truth_at = [&](double t) {
        const auto it = std::lower_bound(eval.begin(), eval.end(), t);
        return truth.curve.values[static_cast<std::size_t>(it - eval.begin())];
    };
    std::vector<double> truth_grid(result.grid.size());
    for (std::size_t j = 0; j < result.grid.size(); ++j)
        truth_grid[j] = truth_at(result.grid[j]);
    std::vector<double> truth_levels(result.levels.size());
    for (std::size_t j = 0; j < result.levels.size(); ++j)
        truth_levels[j] = truth_at(result.levels[j]);

    const GrfSampler sampler(config.nrows, config.ncols, config.model.matern);
    const int n_cells = config.nrows * config.ncols;

    std::vector<std::vector<std::uint8_t>> pw(static_cast<std::size_t>(config.trials));
    std::vector<std::uint8_t> scb(static_cast<std::size_t>(config.trials), 0);

    parallel_for(static_cast<std::size_t>(config.trials), [&](std::size_t trial) {
        pw[trial].assign(config.probs.size(), 0);
        const std::uint64_t trial_seed = derive_stream(config.seed, {0x747269ULL, trial});

        if (config.method == BandMethod::replicate) {
            const int nrep = config.replicates;
            Eigen::MatrixXd draws = sampler.draw_columns(
                config.seed, static_cast<std::uint64_t>(trial) * static_cast<std::uint64_t>(nrep),
                nrep);
            std::vector<StepCurve> on_grid(static_cast<std::size_t>(nrep));
            std::vector<StepCurve> on_levels(static_cast<std::size_t>(nrep));
            for (int r = 0; r < nrep; ++r) {
                Eigen::VectorXd col = draws.col(r);
                col.array() -= col.mean();
                LatticeField f(config.nrows, config.ncols,
                               std::vector<double>(col.data(), col.data() + n_cells));
                const StepCurve na = nelson_aalen(birth_process(f));
                on_grid[static_cast<std::size_t>(r)] = discretize(na, result.grid);
                on_levels[static_cast<std::size_t>(r)] = discretize(na, result.levels);
            }
            const BandResult pt = replicate_pointwise(on_levels, config.alpha);
            for (std::size_t p = 0; p < config.probs.size(); ++p)
                pw[trial][p] = pointwise_covered(pt.center[p], pt.half_width[p],
                                                 truth_levels[p]);
            const BandResult band = replicate_band(on_grid, config.alpha,
                                                   config.mc_draws, trial_seed);
            scb[trial] = band.covers(truth_grid);
            return;
        }

        const LatticeField field = sampler.draw(config.seed, trial, /*mean_correct=*/true);
        const BirthProcess bp = birth_process(field);
        if (config.method == BandMethod::naive) {
            const StepCurve na = nelson_aalen(bp);
            const StepCurve var = naive_variance(bp);
            const BandResult pt = naive_pointwise(discretize(na, result.levels),
                                                  discretize(var, result.levels),
                                                  config.alpha);
            for (std::size_t p = 0; p < config.probs.size(); ++p)
                pw[trial][p] = pointwise_covered(pt.center[p], pt.half_width[p],
                                                 truth_levels[p]);
            const BandResult band =
                naive_band(discretize(na, result.grid), discretize(var, result.grid),
                           config.alpha, config.mc_draws, trial_seed);
            scb[trial] = band.covers(truth_grid);
            return;
        }

        // Parametric bootstrap from the single field.
        const MaternFit fit = fit_matern_mle(field, config.mle);
        const GrfSampler boot_sampler(config.nrows, config.ncols, fit.params);
        const StepCurve na = nelson_aalen(bp);
        const StepCurve orig_grid = discretize(na, result.grid);
        std::vector<StepCurve> boot_grid(static_cast<std::size_t>(config.bootstrap_B));
        std::vector<StepCurve> boot_levels(static_cast<std::size_t>(config.bootstrap_B));
        for (int bi = 0; bi < config.bootstrap_B; ++bi) {
            const LatticeField sim = boot_sampler.draw(trial_seed, static_cast<std::uint64_t>(bi) + 1);
            const StepCurve curve = nelson_aalen(birth_process(sim));
            boot_grid[static_cast<std::size_t>(bi)] = discretize(curve, result.grid);
            boot_levels[static_cast<std::size_t>(bi)] = discretize(curve, result.levels);
        }
        const BandResult band =
            bootstrap_band_from_curves(orig_grid, boot_grid, config.alpha);
        scb[trial] = band.covers(truth_grid);
        // Pointwise: normal approximation with the bootstrap sd.
        const double z = normal_quantile(1.0 - config.alpha / 2.0);
        const StepCurve orig_levels = discretize(na, result.levels);
        const Eigen::MatrixXd xl = curve_matrix(boot_levels);
        for (std::size_t p = 0; p < config.probs.size(); ++p) {
            const Eigen::Index j = static_cast<Eigen::Index>(p);
            const double mean = xl.col(j).mean();
            const double sd = std::sqrt((xl.col(j).array() - mean).square().sum() /
                                        (static_cast<double>(xl.rows()) - 1.0));
            pw[trial][p] =
                pointwise_covered(orig_levels.values[p], z * sd, truth_levels[p]);
        }
    });

    for (int t = 0; t < config.trials; ++t) {
        for (std::size_t p = 0; p < config.probs.size(); ++p)
            result.pointwise_pct[p] += pw[static_cast<std::size_t>(t)][p];
        result.scb_pct += scb[static_cast<std::size_t>(t)];
    }
    for (double& v : result.pointwise_pct) v *= 100.0 / config.trials;
    result.scb_pct *= 100.0 / config.trials;
    return result;
}

}  // namespace topohazard
