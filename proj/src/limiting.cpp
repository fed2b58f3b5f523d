#include "topohazard/limiting.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "topohazard/num.hpp"
#include "topohazard/parallel.hpp"
#include "topohazard/rng.hpp"

namespace topohazard {

namespace {

constexpr int kShifts = 12;

const double kSqrtPrimes[] = {
    1.4142135623730951, 1.7320508075688772, 2.23606797749979,
    2.6457513110645907, 3.3166247903554,    3.605551275463989,
    4.123105625617661,  4.358898943540674,  4.795831523312719,
    5.385164807134504,  5.5677643628300215, 6.082762530298219,
};

}  // namespace

OrthantResult mvn_excess_prob(const Eigen::VectorXd& lower,
                              const Eigen::MatrixXd& sigma, int samples,
                              std::uint64_t seed) {
    const int k = static_cast<int>(lower.size());
    if (k <= 0) throw std::invalid_argument("mvn_excess_prob: empty problem");
    if (sigma.rows() != k || sigma.cols() != k)
        throw std::invalid_argument("mvn_excess_prob: dimension mismatch");

    // pr(Y > a) = pr(X < b) with b = -a by symmetry of the centered Gaussian.
    // Order variables tightest-first; Genz's transform then wrings the most
    // variance out of the leading coordinates.
    std::vector<int> order(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) order[static_cast<std::size_t>(i)] = i;
    std::sort(order.begin(), order.end(), [&](int i, int j) {
        return -lower(i) / std::sqrt(sigma(i, i)) < -lower(j) / std::sqrt(sigma(j, j));
    });
    Eigen::VectorXd b(k);
    Eigen::MatrixXd s(k, k);
    for (int i = 0; i < k; ++i) {
        b(i) = -lower(order[static_cast<std::size_t>(i)]);
        for (int j = 0; j < k; ++j)
            s(i, j) = sigma(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    s.diagonal().array() += 1e-10;
    Eigen::LLT<Eigen::MatrixXd> llt(s);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("mvn_excess_prob: covariance not PSD after jitter");
    Eigen::MatrixXd L = llt.matrixL();

    if (k == 1) return {normal_cdf(b(0) / L(0, 0)), 0.0};

    const int per_shift = std::max(1, samples / kShifts);
    double means[kShifts];
    for (int sft = 0; sft < kShifts; ++sft) {
        RngStream rng(seed, derive_stream(seed, {0x6f727468ULL, static_cast<std::uint64_t>(sft)}));
        double u0[16];
        for (int j = 0; j < k - 1; ++j) u0[j] = rng.uniform();
        double acc = 0.0;
        std::vector<double> yv(static_cast<std::size_t>(k - 1));
        for (int m = 1; m <= per_shift; ++m) {
            double e = normal_cdf(b(0) / L(0, 0));
            double f = e;
            for (int i = 1; i < k; ++i) {
                if (f <= 0.0) break;
                double w = std::fmod(m * kSqrtPrimes[i - 1] + u0[i - 1], 1.0);
                double z = std::clamp(w * e, 1e-300, 1.0 - 1e-16);
                yv[static_cast<std::size_t>(i - 1)] = normal_quantile(z);
                double dot = 0.0;
                for (int j = 0; j < i; ++j) dot += L(i, j) * yv[static_cast<std::size_t>(j)];
                e = normal_cdf((b(i) - dot) / L(i, i));
                f *= e;
            }
            acc += f;
        }
        means[sft] = acc / per_shift;
    }
    double p = 0.0;
    for (double m : means) p += m;
    p /= kShifts;
    double var = 0.0;
    for (double m : means) var += (m - p) * (m - p);
    var /= (kShifts - 1.0) * kShifts;
    return {std::clamp(p, 0.0, 1.0), std::sqrt(var)};
}

OrthantResult mvn_upper_orthant(const Eigen::VectorXd& mean,
                                const Eigen::MatrixXd& cor, double threshold,
                                int samples, std::uint64_t seed) {
    const int k = static_cast<int>(mean.size());
    if (k < 1 || k > 9)
        throw std::invalid_argument("mvn_upper_orthant: dimension must be in 1..9");
    if (cor.rows() != k || cor.cols() != k)
        throw std::invalid_argument("mvn_upper_orthant: dimension mismatch");
    if (!cor.isApprox(cor.transpose(), 1e-12))
        throw std::invalid_argument("mvn_upper_orthant: correlation not symmetric");
    Eigen::VectorXd a = Eigen::VectorXd::Constant(k, threshold) - mean;
    return mvn_excess_prob(a, cor, samples, seed);
}

std::vector<NeighborClass> neighbor_classes(int nrows, int ncols, Boundary boundary,
                                            Neighborhood neighborhood) {
    // A throwaway field supplies the neighbor enumeration.
    std::vector<double> dummy(static_cast<std::size_t>(nrows) * static_cast<std::size_t>(ncols));
    for (std::size_t i = 0; i < dummy.size(); ++i) dummy[i] = static_cast<double>(i);
    LatticeField probe(nrows, ncols, std::move(dummy), boundary, neighborhood);

    auto min_image = [&](int d, int n) {
        if (boundary == Boundary::torus) {
            d %= n;
            if (d > n / 2) d -= n;
            if (d < -(n / 2)) d += n;
        }
        return d;
    };

    // Classes keyed by the multiset of pairwise distances of the closed
    // neighborhood; congruent neighbor sets share their integrals under
    // stationarity and isotropy.
    std::map<std::vector<long long>, NeighborClass> classes;
    for (int r = 0; r < nrows; ++r)
        for (int c = 0; c < ncols; ++c) {
            std::vector<std::array<double, 2>> disp;
            for (const GridIndex& nb : probe.neighbors({r, c})) {
                int dr = min_image(nb.row - r, nrows);
                int dc = min_image(nb.col - c, ncols);
                disp.push_back({static_cast<double>(dr), static_cast<double>(dc)});
            }
            std::vector<std::array<double, 2>> pts;
            pts.push_back({0.0, 0.0});
            pts.insert(pts.end(), disp.begin(), disp.end());
            std::vector<long long> key;
            for (std::size_t i = 0; i < pts.size(); ++i)
                for (std::size_t j = i + 1; j < pts.size(); ++j) {
                    const double dx = pts[i][0] - pts[j][0];
                    const double dy = pts[i][1] - pts[j][1];
                    key.push_back(llround(std::sqrt(dx * dx + dy * dy) * 1e9));
                }
            std::sort(key.begin(), key.end());
            key.push_back(static_cast<long long>(disp.size()));
            auto [it, inserted] = classes.try_emplace(std::move(key));
            if (inserted) it->second.displacements = std::move(disp);
            ++it->second.count;
        }
    std::vector<NeighborClass> out;
    out.reserve(classes.size());
    for (auto& [key, cls] : classes) out.push_back(std::move(cls));
    return out;
}

void conditional_law(const std::function<double(double)>& cor,
                     const NeighborClass& cls, Eigen::VectorXd& rho,
                     Eigen::MatrixXd& cov) {
    const int k = static_cast<int>(cls.displacements.size());
    rho.resize(k);
    Eigen::MatrixXd snn(k, k);
    for (int i = 0; i < k; ++i) {
        const auto& di = cls.displacements[static_cast<std::size_t>(i)];
        rho(i) = cor(std::hypot(di[0], di[1]));
        for (int j = 0; j < k; ++j) {
            const auto& dj = cls.displacements[static_cast<std::size_t>(j)];
            snn(i, j) = cor(std::hypot(di[0] - dj[0], di[1] - dj[1]));
        }
    }
    cov = snn - rho * rho.transpose();
}

namespace {

Eigen::MatrixXd joint_covariance(const std::function<double(double)>& cor,
                                 const NeighborClass& cls) {
    const int k = static_cast<int>(cls.displacements.size());
    Eigen::MatrixXd full(k + 1, k + 1);
    std::vector<std::array<double, 2>> pts;
    pts.push_back({0.0, 0.0});
    pts.insert(pts.end(), cls.displacements.begin(), cls.displacements.end());
    for (int i = 0; i <= k; ++i)
        for (int j = 0; j <= k; ++j) {
            const double dx = pts[static_cast<std::size_t>(i)][0] - pts[static_cast<std::size_t>(j)][0];
            const double dy = pts[static_cast<std::size_t>(i)][1] - pts[static_cast<std::size_t>(j)][1];
            full(i, j) = cor(std::hypot(dx, dy));
        }
    return full;
}

std::vector<double> merged_internal_grid(const LimitSpec& spec) {
    const double lo = spec.grid.front();
    const double hi = spec.grid.back();
    std::vector<double> pts = spec.grid;
    // Integration from effectively -inf: extend 4 level units below the grid;
    // the integrand decays like phi(u) there, so the remaining tail is
    // negligible against the Monte Carlo error.
    const std::vector<double> tail = linspace(lo - 4.0, lo, 121);
    pts.insert(pts.end(), tail.begin(), tail.end());
    if (hi > lo) {
        const std::vector<double> dense =
            linspace(lo, hi, std::max(spec.internal_grid_points, 2));
        pts.insert(pts.end(), dense.begin(), dense.end());
    }
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end(),
                          [](double a, double b) { return std::fabs(a - b) < 1e-12; }),
              pts.end());
    return pts;
}

}  // namespace

LimitCurveResult limit_curve_numerical(const LimitSpec& spec,
                                       const std::function<double(double)>& cor) {
    if (spec.grid.size() < 2)
        throw std::invalid_argument("limit_curve: grid needs at least two levels");
    for (std::size_t i = 1; i < spec.grid.size(); ++i)
        if (!(spec.grid[i] > spec.grid[i - 1]))
            throw std::invalid_argument("limit_curve: grid not sorted");
    if (spec.mc_samples < 10000)
        throw std::invalid_argument("limit_curve: mc_samples must be >= 10^4");

    const auto classes =
        neighbor_classes(spec.nrows, spec.ncols, spec.boundary, spec.neighborhood);
    double total_cells = 0.0;
    for (const auto& cls : classes) total_cells += static_cast<double>(cls.count);

    struct ClassLaw {
        Eigen::VectorXd rho;
        Eigen::MatrixXd cond_cov;
        Eigen::MatrixXd joint_cov;
        double count;
    };
    std::vector<ClassLaw> laws;
    laws.reserve(classes.size());
    for (const auto& cls : classes) {
        ClassLaw law;
        conditional_law(cor, cls, law.rho, law.cond_cov);
        law.joint_cov = joint_covariance(cor, cls);
        law.count = static_cast<double>(cls.count);
        laws.push_back(std::move(law));
    }

    const std::vector<double> internal = merged_internal_grid(spec);
    const std::size_t m = internal.size();
    std::vector<double> ratio(m, 0.0), ratio_var(m, 0.0);
    std::vector<std::uint8_t> alive(m, 0);

    parallel_for(m, [&](std::size_t li) {
        const double u = internal[li];
        double num = 0.0, den = 0.0, num_var = 0.0, den_var = 0.0;
        for (std::size_t ci = 0; ci < laws.size(); ++ci) {
            const ClassLaw& law = laws[ci];
            const int k = static_cast<int>(law.rho.size());
            const std::uint64_t s1 =
                derive_stream(spec.seed, {li, ci, 1});
            const std::uint64_t s2 =
                derive_stream(spec.seed, {li, ci, 2});
            Eigen::VectorXd a_cond = (1.0 - law.rho.array()) * u;
            OrthantResult cond =
                mvn_excess_prob(a_cond, law.cond_cov, spec.mc_samples, s1);
            OrthantResult joint =
                mvn_excess_prob(Eigen::VectorXd::Constant(k + 1, u), law.joint_cov,
                                spec.mc_samples, s2);
            num += law.count * cond.prob;
            den += law.count * joint.prob;
            num_var += law.count * law.count * cond.se * cond.se;
            den_var += law.count * law.count * joint.se * joint.se;
        }
        num *= normal_pdf(u);
        num_var *= normal_pdf(u) * normal_pdf(u);
        const double den_per_cell = den / total_cells;
        if (den_per_cell <= 1e-12) return;  // J(u) = 0: expected risk set empty
        alive[li] = 1;
        ratio[li] = num / den;
        // Delta method on num/den with independent integral estimates.
        ratio_var[li] = num_var / (den * den) +
                        num * num * den_var / (den * den * den * den);
    });

    // Truncation: J switched off inside the requested range.
    LimitCurveResult result;
    std::size_t last_alive = 0;
    bool any_alive = false;
    for (std::size_t i = 0; i < m; ++i)
        if (alive[i]) {
            last_alive = i;
            any_alive = true;
        }
    if (any_alive && last_alive + 1 < m) {
        result.truncated = true;
        result.truncation_level = internal[last_alive];
    }

    // Cumulative trapezoid over the internal grid, with variance tracking.
    std::vector<double> cum(m, 0.0), cum_var(m, 0.0);
    for (std::size_t i = 1; i < m; ++i) {
        const double h = internal[i] - internal[i - 1];
        double seg = 0.0, seg_var = 0.0;
        if (alive[i] && alive[i - 1]) {
            seg = 0.5 * h * (ratio[i] + ratio[i - 1]);
            seg_var = 0.25 * h * h * (ratio_var[i] + ratio_var[i - 1]);
        }
        cum[i] = cum[i - 1] + seg;
        cum_var[i] = cum_var[i - 1] + seg_var;
    }

    result.curve.kind = CurveKind::grid;
    result.curve.levels = spec.grid;
    result.curve.values.reserve(spec.grid.size());
    result.mc_se.reserve(spec.grid.size());
    std::size_t pos = 0;
    for (double t : spec.grid) {
        while (pos + 1 < m && internal[pos] < t - 1e-12) ++pos;
        result.curve.values.push_back(cum[pos]);
        result.mc_se.push_back(std::sqrt(cum_var[pos]));
    }
    return result;
}

LimitCurveResult limit_curve(const LimitSpec& spec) {
    if (spec.matern) {
        const MaternParams p = *spec.matern;
        p.validate();
        return limit_curve_numerical(
            spec, [p](double u) { return matern_cor(u, p); });
    }
    // Independent values: the ratio collapses to the N(0,1) hazard
    // phi(u)/(1-Phi(u)) and the integral to -log(1-Phi(t)).
    LimitCurveResult result;
    result.curve.kind = CurveKind::grid;
    result.curve.levels = spec.grid;
    result.curve.values.reserve(spec.grid.size());
    result.mc_se.assign(spec.grid.size(), 0.0);
    for (double t : spec.grid)
        result.curve.values.push_back(-std::log(normal_sf(t)));
    return result;
}

double expected_at_risk_level(const LimitSpec& spec, double p) {
    if (!(p > 0.0 && p < 1.0))
        throw std::domain_error("expected_at_risk_level: p must be in (0,1)");
    const auto classes =
        neighbor_classes(spec.nrows, spec.ncols, spec.boundary, spec.neighborhood);
    double total = 0.0;
    for (const auto& cls : classes) total += static_cast<double>(cls.count);

    std::function<double(double)> cor;
    if (spec.matern) {
        const MaternParams mp = *spec.matern;
        cor = [mp](double u) { return matern_cor(u, mp); };
    }

    auto at_risk = [&](double t) {
        if (!spec.matern) {
            double v = 0.0;
            for (const auto& cls : classes)
                v += static_cast<double>(cls.count) *
                     std::pow(normal_sf(t),
                              static_cast<double>(cls.displacements.size()) + 1.0);
            return v / total;
        }
        double v = 0.0;
        for (std::size_t ci = 0; ci < classes.size(); ++ci) {
            const auto& cls = classes[ci];
            const int k = static_cast<int>(cls.displacements.size());
            Eigen::MatrixXd joint = joint_covariance(cor, cls);
            OrthantResult r = mvn_excess_prob(
                Eigen::VectorXd::Constant(k + 1, t), joint, spec.mc_samples,
                derive_stream(spec.seed, {0x61747269ULL, ci}));
            v += static_cast<double>(cls.count) * r.prob;
        }
        return v / total;
    };

    double lo = -8.0, hi = 8.0;
    for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (at_risk(mid) > p)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace topohazard
