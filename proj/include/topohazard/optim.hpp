#pragma once

#include <functional>
#include <vector>

namespace topohazard {

struct NelderMeadResult {
    std::vector<double> x;
    double value = 0.0;
    int evaluations = 0;
    bool converged = false;
};

struct NelderMeadOptions {
    int max_evaluations = 400;
    double f_tol = 1e-8;      // relative spread of simplex values
    double x_tol = 1e-6;      // simplex diameter
    double initial_step = 0.5;
};

/// Minimizes fn over R^d. fn may return +inf to reject a point (box
/// constraints via penalty). Deterministic given the start point.
NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& fn,
                             std::vector<double> start,
                             const NelderMeadOptions& opts = {});

}  // namespace topohazard
