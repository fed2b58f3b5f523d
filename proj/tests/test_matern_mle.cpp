#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "topohazard/parallel.hpp"
#include "topohazard/randfield.hpp"
#include "test_util.hpp"

using namespace topohazard;

// Self-consistency of the likelihood fit: fields simulated at known
// parameters, 50 seeds. Also checks the maximizer property against the truth
// on every seed.
TEST_CASE("matern mle recovers the range parameter on average") {
    const MaternParams truth{3.0, 1.0};
    const GrfSampler sampler(30, 30, truth);
    const int n_seeds = 50;

    std::vector<double> eta_hat(n_seeds);
    std::vector<int> above_truth(n_seeds, 0);
    parallel_for(static_cast<std::size_t>(n_seeds), [&](std::size_t i) {
        const LatticeField f = sampler.draw(1234, i);
        const MaternFit fit = fit_matern_mle(f);
        eta_hat[i] = fit.params.eta;
        above_truth[i] = fit.loglik >= matern_loglik(f, truth) ? 1 : 0;
    });

    double mean_eta = 0.0;
    int all_above = 1;
    for (int i = 0; i < n_seeds; ++i) {
        mean_eta += eta_hat[static_cast<std::size_t>(i)];
        all_above &= above_truth[static_cast<std::size_t>(i)];
    }
    mean_eta /= n_seeds;
    CHECK(std::fabs(mean_eta - truth.eta) <= 1.5);
    // The search must never return parameters worse than the truth it saw.
    CHECK(all_above == 1);
}

TEST_CASE("white-noise field drives the range to the independence limit") {
    RngStream rng(5150, 1);
    std::vector<double> values(400);
    for (double& v : values) v = rng.normal();
    const MaternFit fit = fit_matern_mle(LatticeField(20, 20, std::move(values)));
    // The likelihood is flat below the lattice spacing; the fitted model must
    // be effectively independent at distance 1.
    CHECK(matern_cor(1.0, fit.params) < 0.01);
}

TEST_CASE("loglik guard: oversized lattice rejected") {
    CHECK_THROWS_AS(
        matern_loglik(test_util::random_field(101, 101, 1), MaternParams{1.0, 0.5}),
        std::invalid_argument);
}
