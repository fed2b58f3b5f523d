#include "topohazard/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace topohazard {

NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& fn,
                             std::vector<double> start, const NelderMeadOptions& opts) {
    const std::size_t d = start.size();
    NelderMeadResult result;
    result.x = start;

    struct Vertex {
        std::vector<double> x;
        double f;
    };
    std::vector<Vertex> simplex;
    simplex.reserve(d + 1);

    int evals = 0;
    auto eval = [&](const std::vector<double>& x) {
        ++evals;
        double f = fn(x);
        return std::isnan(f) ? std::numeric_limits<double>::infinity() : f;
    };

    simplex.push_back({start, eval(start)});
    for (std::size_t i = 0; i < d; ++i) {
        std::vector<double> x = start;
        x[i] += opts.initial_step * (x[i] != 0.0 ? std::fabs(x[i]) : 1.0) * 0.5 +
                opts.initial_step * 0.5;
        simplex.push_back({x, eval(x)});
    }

    auto by_value = [](const Vertex& a, const Vertex& b) { return a.f < b.f; };
    std::sort(simplex.begin(), simplex.end(), by_value);

    const double alpha = 1.0, gamma = 2.0, rho = 0.5, sigma = 0.5;
    while (evals < opts.max_evaluations) {
        // Convergence: value spread and simplex diameter both small.
        double fbest = simplex.front().f, fworst = simplex.back().f;
        double fspread = std::fabs(fworst - fbest);
        double fscale = std::max(1.0, std::fabs(fbest));
        double diam = 0.0;
        for (std::size_t i = 1; i <= d; ++i)
            for (std::size_t k = 0; k < d; ++k)
                diam = std::max(diam, std::fabs(simplex[i].x[k] - simplex[0].x[k]));
        if (std::isfinite(fbest) && fspread <= opts.f_tol * fscale && diam <= opts.x_tol) {
            result.converged = true;
            break;
        }

        std::vector<double> centroid(d, 0.0);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t k = 0; k < d; ++k) centroid[k] += simplex[i].x[k] / d;

        auto blend = [&](double t) {
            std::vector<double> x(d);
            for (std::size_t k = 0; k < d; ++k)
                x[k] = centroid[k] + t * (centroid[k] - simplex[d].x[k]);
            return x;
        };

        std::vector<double> xr = blend(alpha);
        double fr = eval(xr);
        if (fr < simplex[0].f) {
            std::vector<double> xe = blend(gamma);
            double fe = eval(xe);
            if (fe < fr)
                simplex[d] = {std::move(xe), fe};
            else
                simplex[d] = {std::move(xr), fr};
        } else if (fr < simplex[d - 1].f) {
            simplex[d] = {std::move(xr), fr};
        } else {
            std::vector<double> xc = blend(fr < simplex[d].f ? rho : -rho);
            double fc = eval(xc);
            if (fc < std::min(fr, simplex[d].f)) {
                simplex[d] = {std::move(xc), fc};
            } else {
                for (std::size_t i = 1; i <= d; ++i) {
                    for (std::size_t k = 0; k < d; ++k)
                        simplex[i].x[k] =
                            simplex[0].x[k] + sigma * (simplex[i].x[k] - simplex[0].x[k]);
                    simplex[i].f = eval(simplex[i].x);
                }
            }
        }
        std::sort(simplex.begin(), simplex.end(), by_value);
    }

    result.x = simplex.front().x;
    result.value = simplex.front().f;
    result.evaluations = evals;
    return result;
}

}  // namespace topohazard
