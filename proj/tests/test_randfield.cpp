#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <boost/math/distributions/fisher_f.hpp>

#include "topohazard/num.hpp"
#include "topohazard/randfield.hpp"
#include "test_util.hpp"

using namespace topohazard;

TEST_CASE("matern correlation closed forms") {
    CHECK(matern_cor(0.0, {5.0, 1.0}) == 1.0);
    // nu = 1/2 collapses to exp(-u/eta).
    CHECK(matern_cor(1.0, {2.0, 0.5}) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
    // Frozen high-precision Bessel evaluation for (eta, nu, u) = (5, 1, 3).
    CHECK(matern_cor(3.0, {5.0, 1.0}) ==
          doctest::Approx(0.667630673973721937).epsilon(1e-12));
}

TEST_CASE("matern correlation domain errors and monotonicity") {
    CHECK_THROWS_AS(matern_cor(1.0, {-1.0, 1.0}), std::domain_error);
    CHECK_THROWS_AS(matern_cor(1.0, {1.0, 0.0}), std::domain_error);
    CHECK_THROWS_AS(matern_cor(-0.5, {1.0, 1.0}), std::domain_error);
    for (double nu : {0.3, 0.5, 1.0, 2.5}) {
        double prev = 1.0;
        for (double u = 0.0; u <= 20.0; u += 0.25) {
            const double c = matern_cor(u, {4.0, nu});
            CHECK(c <= prev + 1e-14);
            CHECK(c >= 0.0);
            CHECK(c <= 1.0);
            prev = c;
        }
    }
}

TEST_CASE("simulate_grf is deterministic in the seed") {
    LatticeField a = simulate_grf(6, 7, {2.0, 1.0}, 99);
    LatticeField b = simulate_grf(6, 7, {2.0, 1.0}, 99);
    LatticeField c = simulate_grf(6, 7, {2.0, 1.0}, 100);
    CHECK(a.values() == b.values());
    CHECK(a.values() != c.values());
}

TEST_CASE("dense guard rejects oversized lattices") {
    CHECK_THROWS_AS(GrfSampler(101, 101, {2.0, 1.0}), std::invalid_argument);
}

TEST_CASE("2x1 lattice: raw sample correlation matches the Matern value") {
    // nu = 1/2, eta = 1 at distance 1: correlation exp(-1). Estimated on the
    // pre-correction draw; centering a 2-cell lattice would force -1.
    GrfSampler sampler(2, 1, {1.0, 0.5});
    const int n = 100000;
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (int i = 0; i < n; ++i) {
        LatticeField f = sampler.draw(4242, static_cast<std::uint64_t>(i),
                                      /*mean_correct=*/false);
        const double a = f.value_flat(0), b = f.value_flat(1);
        sx += a; sy += b; sxx += a * a; syy += b * b; sxy += a * b;
    }
    const double cov = sxy / n - (sx / n) * (sy / n);
    const double va = sxx / n - (sx / n) * (sx / n);
    const double vb = syy / n - (sy / n) * (sy / n);
    CHECK(std::fabs(cov / std::sqrt(va * vb) - std::exp(-1.0)) < 0.01);
}

TEST_CASE("mean correction zeroes the lattice mean exactly") {
    LatticeField f = simulate_grf(40, 40, {5.0, 1.0}, 31);
    double mean = 0.0;
    for (double v : f.values()) mean += v;
    mean /= f.size();
    CHECK(std::fabs(mean) < 1e-12);
}

TEST_CASE("marginal values at a fixed cell are standard normal across seeds") {
    GrfSampler sampler(40, 40, {5.0, 1.0});
    std::vector<double> sample;
    sample.reserve(2000);
    for (int i = 0; i < 2000; ++i)
        sample.push_back(sampler.draw(606, static_cast<std::uint64_t>(i),
                                      /*mean_correct=*/false)
                             .value(7, 13));
    CHECK(test_util::ks_statistic(sample, [](double x) { return normal_cdf(x); }) <
          test_util::kKsCrit01);
}

TEST_CASE("M1 equals simulate_grf bit for bit") {
    FieldModel m1{ModelKind::m1, {3.0, 1.0}};
    CHECK(simulate_model(m1, 8, 9, 17).values() ==
          simulate_grf(8, 9, {3.0, 1.0}, 17).values());
}

TEST_CASE("M2: probability integral transform identity and normal margins") {
    FieldModel m2{ModelKind::m2, {3.0, 1.0}};
    ModelDraw d = simulate_model_detail(m2, 10, 10, 57);
    GrfSampler sampler(10, 10, {3.0, 1.0});
    LatticeField raw = sampler.draw(57, 0, /*mean_correct=*/false);
    for (int i = 0; i < 100; ++i) {
        const double x = raw.value_flat(i);
        CHECK(d.pre_transform[static_cast<std::size_t>(i)] == x * x);
        CHECK(d.pre_correction[static_cast<std::size_t>(i)] ==
              chi1_to_normal(x * x));
    }
    // Margins across seeds at a fixed cell.
    std::vector<double> sample;
    for (int i = 0; i < 2000; ++i)
        sample.push_back(
            simulate_model_detail(m2, 4, 4, 7000 + static_cast<std::uint64_t>(i))
                .pre_correction[5]);
    CHECK(test_util::ks_statistic(sample, [](double x) { return normal_cdf(x); }) <
          test_util::kKsCrit01);
}

TEST_CASE("M3: pre-transform ratio follows F(3,3) over many seeds") {
    FieldModel m3{ModelKind::m3, {2.0, 1.0}};
    std::vector<double> ratios;
    ratios.reserve(100000);
    for (int i = 0; i < 100000; ++i)
        ratios.push_back(
            simulate_model_detail(m3, 2, 1, static_cast<std::uint64_t>(i)).pre_transform[0]);
    const boost::math::fisher_f_distribution<double> f33(3.0, 3.0);
    CHECK(test_util::ks_statistic(
              ratios, [&](double x) { return boost::math::cdf(f33, x); }) <
          test_util::kKsCrit01);
}

TEST_CASE("marginal variance near 1 for every model kind") {
    const int reps = 50;
    for (ModelKind kind : {ModelKind::m1, ModelKind::m2, ModelKind::m3}) {
        FieldModel model{kind, {2.0, 1.0}};
        std::vector<double> pooled_var;
        for (int r = 0; r < reps; ++r) {
            LatticeField f =
                simulate_model(model, 40, 40, 9000 + static_cast<std::uint64_t>(r));
            double v = 0.0;
            for (double x : f.values()) v += x * x;  // mean is exactly 0
            pooled_var.push_back(v / f.size());
        }
        const double m = test_util::mean(pooled_var);
        const double se = test_util::sample_sd(pooled_var) / std::sqrt(double(reps));
        CHECK(std::fabs(m - 1.0) <= 3.0 * se);
    }
}

TEST_CASE("model simulation is reproducible") {
    FieldModel m3{ModelKind::m3, {2.0, 0.8}};
    CHECK(simulate_model(m3, 6, 6, 5).values() == simulate_model(m3, 6, 6, 5).values());
}

TEST_CASE("match_correlation: M2 against target (5, 1)") {
    MatchResult r = match_correlation({5.0, 1.0}, ModelKind::m2);
    CHECK(r.max_discrepancy < 0.02);
    CHECK(r.params.eta > 5.0);  // squaring dampens correlation; inner range grows
    REQUIRE(r.achieved_cor.size() == 10);
    REQUIRE(r.target_cor.size() == 10);
}

TEST_CASE("match_correlation: near-independent target stays near independence") {
    MatchResult r = match_correlation({0.05, 1.0}, ModelKind::m2);
    CHECK(std::fabs(r.achieved_cor[0]) < 0.05);
}

TEST_CASE("match_correlation is deterministic") {
    MatchResult a = match_correlation({5.0, 1.0}, ModelKind::m2);
    MatchResult b = match_correlation({5.0, 1.0}, ModelKind::m2);
    CHECK(a.params.eta == b.params.eta);
    CHECK(a.params.nu == b.params.nu);
    CHECK_THROWS_AS(match_correlation({5.0, 1.0}, ModelKind::m1),
                    std::invalid_argument);
}
