#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "topohazard/cox.hpp"
#include "topohazard/rng.hpp"

using namespace topohazard;

namespace {

EventTable table_from(const std::vector<std::string>& covariate_names,
                      const std::vector<EventRow>& rows) {
    EventTable t;
    t.covariate_names = covariate_names;
    t.rows = rows;
    return t;
}

EventRow row(const std::string& id, double entry, double exit, EventStatus status,
             std::vector<double> covs = {}, const std::string& tree = "t1") {
    EventRow r;
    r.tree_id = tree;
    r.edge_id = id;
    r.entry_radius = entry;
    r.exit_radius = exit;
    r.status = status;
    r.covariates = std::move(covs);
    return r;
}

/// Synthetic delayed-entry exponential-hazard data with a known effect: given
/// survival to the entry radius, the residual time is exponential with rate
/// exp(x beta) (memorylessness), censored at a fixed horizon.
EventTable simulate_cox_data(int n, double beta, std::uint64_t seed) {
    RngStream rng(seed, 0x636f78ULL);
    std::vector<EventRow> rows;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        const double entry = 0.5 * rng.uniform();
        const double gap = -std::log(1.0 - rng.uniform()) / std::exp(beta * x);
        const double horizon = entry + 2.5 * rng.uniform();
        const bool event = entry + gap <= horizon;
        rows.push_back(row("e" + std::to_string(i), entry,
                           event ? entry + gap : horizon,
                           event ? EventStatus::leaf : EventStatus::censored, {x}));
    }
    return table_from({"x"}, rows);
}

}  // namespace

TEST_CASE("two events, no covariates: hand-computed partial likelihood") {
    EventTable t = table_from({}, {row("a", 0.0, 1.0, EventStatus::leaf),
                                   row("b", 0.0, 2.0, EventStatus::leaf)});
    CoxFit fit = cox_fit(t, EventStatus::leaf, {});
    CHECK(fit.log_partial_likelihood == doctest::Approx(-std::log(2.0)).epsilon(1e-12));
    REQUIRE(fit.baseline.levels.size() == 2);
    CHECK(fit.baseline.values[0] == doctest::Approx(0.5));   // jump 1/2
    CHECK(fit.baseline.values[1] == doctest::Approx(1.5));   // then jump 1/1
    CHECK(fit.coefficients.size() == 0);
}

TEST_CASE("score at the null: event covariate minus risk-set mean") {
    EventTable t = table_from(
        {"x"}, {row("a", 0.0, 1.0, EventStatus::censored, {2.0}),
                row("b", 0.0, 2.0, EventStatus::leaf, {5.0}),
                row("c", 0.0, 3.0, EventStatus::censored, {-1.0}),
                row("d", 2.5, 4.0, EventStatus::censored, {9.0})});  // enters later
    CoxTermSpec spec;
    spec.covariates = {"x"};
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(1);
    CoxObjective obj = cox_partial_likelihood(t, EventStatus::leaf, spec, beta);
    // At radius 2 the risk set is {b, c}: entry < 2 <= exit; d enters at 2.5.
    CHECK(obj.gradient(0) == doctest::Approx(5.0 - (5.0 - 1.0) / 2.0).epsilon(1e-12));
}

TEST_CASE("gradient and hessian match finite differences") {
    RngStream rng(777, 1);
    std::vector<EventRow> rows;
    for (int i = 0; i < 80; ++i) {
        const double entry = rng.uniform();
        const double exit = entry + 0.1 + 2.0 * rng.uniform();
        rows.push_back(row("e" + std::to_string(i), entry, exit,
                           rng.uniform() < 0.55 ? EventStatus::leaf
                                                : EventStatus::censored,
                           {rng.normal(), rng.uniform(), rng.normal() * 0.5},
                           i % 3 == 0 ? "t1" : "t2"));
    }
    EventTable t = table_from({"x1", "x2", "x3"}, rows);
    CoxTermSpec spec;
    spec.covariates = {"x1", "x2", "x3"};
    spec.tree_factor = true;

    CHECK(gradient_check(t, EventStatus::leaf, spec, Eigen::VectorXd::Zero(4)) < 1e-6);
    RngStream beta_rng(778, 2);
    for (int k = 0; k < 3; ++k) {
        Eigen::VectorXd beta(4);
        for (int j = 0; j < 4; ++j) beta(j) = 2.0 * beta_rng.uniform() - 1.0;
        CHECK(gradient_check(t, EventStatus::leaf, spec, beta) < 1e-5);
    }
    // Empty model: nothing to check.
    EventTable t0 = table_from({}, {row("a", 0.0, 1.0, EventStatus::leaf),
                                    row("b", 0.0, 2.0, EventStatus::leaf)});
    CHECK(gradient_check(t0, EventStatus::leaf, {}, Eigen::VectorXd(0)) == 0.0);
}

TEST_CASE("Efron and Breslow tie corrections: hand values with two tied events") {
    EventTable t = table_from({}, {row("a", 0.0, 1.0, EventStatus::leaf),
                                   row("b", 0.0, 1.0, EventStatus::leaf),
                                   row("c", 0.0, 2.0, EventStatus::censored)});
    CoxTermSpec breslow;
    CHECK(cox_fit(t, EventStatus::leaf, breslow).log_partial_likelihood ==
          doctest::Approx(-2.0 * std::log(3.0)).epsilon(1e-12));
    CoxTermSpec efron;
    efron.ties = TieMethod::efron;
    CHECK(cox_fit(t, EventStatus::leaf, efron).log_partial_likelihood ==
          doctest::Approx(-std::log(3.0) - std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("coefficient recovery within two standard errors") {
    // Single 500-edge table; the acceptance suite runs the full 200-trial
    // calibration.
    EventTable t = simulate_cox_data(500, 0.7, 42);
    CoxTermSpec spec;
    spec.covariates = {"x"};
    CoxFit fit = cox_fit(t, EventStatus::leaf, spec);
    CHECK(std::fabs(fit.coefficients(0) - 0.7) <= 2.0 * fit.se(0));
    CHECK(fit.se(0) > 0.0);
    CHECK(fit.iterations <= 10);
}

TEST_CASE("likelihood is invariant to covariate location, equivariant to scale") {
    EventTable t = simulate_cox_data(300, 0.5, 43);
    CoxTermSpec spec;
    spec.covariates = {"x"};
    CoxFit base = cox_fit(t, EventStatus::leaf, spec);

    EventTable shifted = t;
    for (EventRow& r : shifted.rows) r.covariates[0] += 100.0;
    CoxFit shift_fit = cox_fit(shifted, EventStatus::leaf, spec);
    CHECK(shift_fit.coefficients(0) ==
          doctest::Approx(base.coefficients(0)).epsilon(1e-6));
    CHECK(shift_fit.se(0) == doctest::Approx(base.se(0)).epsilon(1e-6));

    EventTable scaled = t;
    for (EventRow& r : scaled.rows) r.covariates[0] *= 4.0;
    CoxFit scale_fit = cox_fit(scaled, EventStatus::leaf, spec);
    CHECK(scale_fit.coefficients(0) ==
          doctest::Approx(base.coefficients(0) / 4.0).epsilon(1e-6));

    HazardRatioResult hr_base = hazard_ratio_20_80(base, t);
    HazardRatioResult hr_shift = hazard_ratio_20_80(shift_fit, shifted);
    HazardRatioResult hr_scale = hazard_ratio_20_80(scale_fit, scaled);
    CHECK(hr_shift.values[0].second ==
          doctest::Approx(hr_base.values[0].second).epsilon(1e-6));
    CHECK(hr_scale.values[0].second ==
          doctest::Approx(hr_base.values[0].second).epsilon(1e-6));
}

TEST_CASE("binary covariate without ties matches a brute-force grid search") {
    RngStream rng(44, 3);
    std::vector<EventRow> rows;
    for (int i = 0; i < 40; ++i)
        rows.push_back(row("e" + std::to_string(i), 0.0, 0.1 + rng.uniform() * 3.0,
                           rng.uniform() < 0.6 ? EventStatus::leaf : EventStatus::censored,
                           {i % 2 == 0 ? 1.0 : 0.0}));
    EventTable t = table_from({"x"}, rows);
    CoxTermSpec spec;
    spec.covariates = {"x"};
    CoxFit fit = cox_fit(t, EventStatus::leaf, spec);

    double best_beta = 0.0, best_ll = -1e300;
    for (double b = -3.0; b <= 3.0; b += 1e-4) {
        Eigen::VectorXd beta(1);
        beta << b;
        const double ll =
            cox_partial_likelihood(t, EventStatus::leaf, spec, beta).loglik;
        if (ll > best_ll) {
            best_ll = ll;
            best_beta = b;
        }
    }
    CHECK(std::fabs(fit.coefficients(0) - best_beta) < 1e-4);
}

TEST_CASE("row permutation leaves the fit bit-identical") {
    EventTable t = simulate_cox_data(200, 0.4, 45);
    CoxTermSpec spec;
    spec.covariates = {"x"};
    CoxFit a = cox_fit(t, EventStatus::leaf, spec);

    EventTable shuffled = t;
    RngStream rng(46, 4);
    for (std::size_t i = shuffled.rows.size(); i > 1; --i)
        std::swap(shuffled.rows[i - 1],
                  shuffled.rows[static_cast<std::size_t>(rng.below(i))]);
    CoxFit b = cox_fit(shuffled, EventStatus::leaf, spec);
    CHECK(a.coefficients(0) == b.coefficients(0));
    CHECK(a.log_partial_likelihood == b.log_partial_likelihood);
    CHECK(a.se(0) == b.se(0));
    CHECK(a.baseline.values == b.baseline.values);
}

TEST_CASE("accepted Newton steps never decrease the partial likelihood") {
    EventTable t = simulate_cox_data(150, 1.2, 47);
    CoxTermSpec spec;
    spec.covariates = {"x"};
    CoxFit fit = cox_fit(t, EventStatus::leaf, spec);
    // The fitted optimum dominates a sweep of the likelihood along beta.
    for (double b = -2.0; b <= 3.0; b += 0.25) {
        Eigen::VectorXd beta(1);
        beta << b;
        CHECK(cox_partial_likelihood(t, EventStatus::leaf, spec, beta).loglik <=
              fit.log_partial_likelihood + 1e-10);
    }
}

TEST_CASE("monotone likelihood is detected and reported") {
    // Perfect separation: the later event always has the smaller covariate.
    EventTable t = table_from({"x"}, {row("a", 0.0, 1.0, EventStatus::leaf, {1.0}),
                                      row("b", 0.0, 2.0, EventStatus::leaf, {0.0}),
                                      row("c", 0.0, 3.0, EventStatus::leaf, {-1.0})});
    CoxTermSpec spec;
    spec.covariates = {"x"};
    CHECK_THROWS_WITH_AS(cox_fit(t, EventStatus::leaf, spec),
                         doctest::Contains("monotone"), std::runtime_error);
}

TEST_CASE("rank-deficient designs name the aliased column") {
    EventTable t = simulate_cox_data(100, 0.3, 48);
    t.covariate_names = {"x", "x_copy"};
    for (EventRow& r : t.rows) r.covariates.push_back(r.covariates[0]);
    CoxTermSpec spec;
    spec.covariates = {"x", "x_copy"};
    CHECK_THROWS_WITH_AS(cox_fit(t, EventStatus::leaf, spec),
                         doctest::Contains("rank deficient"), std::runtime_error);
}

TEST_CASE("no events of the requested type is an error") {
    EventTable t = table_from({}, {row("a", 0.0, 1.0, EventStatus::censored)});
    CHECK_THROWS_AS(cox_fit(t, EventStatus::leaf, {}), std::domain_error);
}

TEST_CASE("hazard ratios: fixed effects, groups, and degenerate covariates") {
    RngStream rng(49, 5);
    std::vector<EventRow> rows;
    for (int i = 0; i < 240; ++i) {
        const double x = rng.normal();
        const double basis1 = std::sin(x), basis2 = std::cos(x);
        const std::string tree = i % 3 == 0 ? "p1" : (i % 3 == 1 ? "p2" : "p3");
        const double entry = 0.3 * rng.uniform();
        const double gap = -std::log(1.0 - rng.uniform()) / std::exp(0.4 * x);
        const double horizon = entry + 2.0;
        const bool event = entry + gap <= horizon;
        rows.push_back(row("e" + std::to_string(i), entry,
                           event ? entry + gap : horizon,
                           event ? EventStatus::leaf : EventStatus::censored,
                           {x, basis1, basis2, 1.0}, tree));
    }
    EventTable t = table_from({"x", "b1", "b2", "const"}, rows);
    CoxTermSpec spec;
    spec.covariates = {"x"};
    spec.groups = {{"smooth", {"b1", "b2"}}};
    spec.tree_factor = true;
    CoxFit fit = cox_fit(t, EventStatus::leaf, spec);

    REQUIRE(fit.terms.size() == 3);
    CHECK(fit.terms[0].df == 1);
    CHECK(fit.terms[1].name == "smooth");
    CHECK(fit.terms[1].df == 2);
    CHECK(fit.terms[2].name == "tree_id");
    CHECK(fit.terms[2].df == 2);  // three trees, first is the reference
    for (const CoxTerm& term : fit.terms) CHECK(term.chi_square >= 0.0);

    HazardRatioResult hr = hazard_ratio_20_80(fit, t);
    REQUIRE(hr.values.size() == 3);
    // Positive coefficient with q80 > q20 means hr above 1 and vice versa.
    const double beta = fit.coefficients(0);
    if (beta > 0.0) CHECK(hr.values[0].second > 1.0);
    if (beta < 0.0) CHECK(hr.values[0].second < 1.0);
    for (const auto& [name, value] : hr.values) CHECK(value > 0.0);

    // A constant covariate cannot support a quantile gap: hr 1 plus warning.
    CoxFit with_const = fit;
    with_const.terms = {CoxTerm{"const", TermKind::covariate, {0}, 0.0, 1}};
    HazardRatioResult hr2 = hazard_ratio_20_80(with_const, t);
    CHECK(hr2.values[0].second == 1.0);
    CHECK(!hr2.warnings.empty());
}

TEST_CASE("binary covariate: hazard ratio equals exp(beta)") {
    RngStream rng(50, 6);
    std::vector<EventRow> rows;
    for (int i = 0; i < 200; ++i) {
        const double x = i % 2 ? 1.0 : 0.0;
        const double gap = -std::log(1.0 - rng.uniform()) / std::exp(0.8 * x);
        const bool event = gap <= 2.0;
        rows.push_back(row("e" + std::to_string(i), 0.0, event ? gap : 2.0,
                           event ? EventStatus::leaf : EventStatus::censored, {x}));
    }
    EventTable t = table_from({"x"}, rows);
    CoxTermSpec spec;
    spec.covariates = {"x"};
    CoxFit fit = cox_fit(t, EventStatus::leaf, spec);
    HazardRatioResult hr = hazard_ratio_20_80(fit, t);
    CHECK(hr.values[0].second ==
          doctest::Approx(std::exp(fit.coefficients(0))).epsilon(1e-12));
}
