#include "topohazard/cox.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

namespace topohazard {

namespace {

struct Design {
    Eigen::MatrixXd x;          // centered, canonical row order
    Eigen::VectorXd col_means;  // of the original columns
    Eigen::VectorXd col_sds;
    std::vector<std::string> col_names;
    std::vector<CoxTerm> terms;
    std::vector<std::string> factor_levels;
    std::vector<double> entry, exit;
    std::vector<std::uint8_t> is_event;
    std::vector<std::size_t> row_order;  // canonical permutation of table rows
};

Design build_design(const EventTable& table, EventStatus event,
                    const CoxTermSpec& spec) {
    if (table.rows.empty()) throw std::domain_error("cox_fit: empty event table");

    Design d;
    d.row_order.resize(table.rows.size());
    std::iota(d.row_order.begin(), d.row_order.end(), std::size_t{0});
    // Canonical order: outputs are then bit-identical under row permutation.
    std::sort(d.row_order.begin(), d.row_order.end(), [&](std::size_t a, std::size_t b) {
        const EventRow& ra = table.rows[a];
        const EventRow& rb = table.rows[b];
        if (ra.tree_id != rb.tree_id) return ra.tree_id < rb.tree_id;
        if (ra.edge_id != rb.edge_id) return ra.edge_id < rb.edge_id;
        if (ra.entry_radius != rb.entry_radius) return ra.entry_radius < rb.entry_radius;
        return ra.exit_radius < rb.exit_radius;
    });

    std::vector<std::size_t> cov_cols;
    auto add_term = [&](const std::string& name, TermKind kind,
                        const std::vector<std::string>& cov_names) {
        CoxTerm term;
        term.name = name;
        term.kind = kind;
        for (const std::string& cn : cov_names) {
            term.columns.push_back(static_cast<int>(d.col_names.size()));
            d.col_names.push_back(cn);
            cov_cols.push_back(table.covariate_index(cn));
        }
        term.df = static_cast<int>(term.columns.size());
        d.terms.push_back(std::move(term));
    };
    for (const std::string& name : spec.covariates)
        add_term(name, TermKind::covariate, {name});
    for (const auto& [gname, members] : spec.groups)
        add_term(gname, TermKind::group, members);

    if (spec.tree_factor) {
        std::set<std::string> levels;
        for (const EventRow& row : table.rows) levels.insert(row.tree_id);
        d.factor_levels.assign(levels.begin(), levels.end());
        if (d.factor_levels.size() >= 2) {
            CoxTerm term;
            term.name = "tree_id";
            term.kind = TermKind::factor;
            for (std::size_t l = 1; l < d.factor_levels.size(); ++l) {
                term.columns.push_back(static_cast<int>(d.col_names.size()) +
                                       static_cast<int>(l) - 1);
                term.df++;
            }
            d.terms.push_back(term);
        }
    }

    const std::size_t n = table.rows.size();
    const std::size_t p_cov = cov_cols.size();
    const std::size_t p_fac =
        d.factor_levels.size() >= 2 ? d.factor_levels.size() - 1 : 0;
    const std::size_t p = p_cov + p_fac;
    d.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    d.entry.resize(n);
    d.exit.resize(n);
    d.is_event.resize(n);

    for (std::size_t i = 0; i < n; ++i) {
        const EventRow& row = table.rows[d.row_order[i]];
        if (!(row.entry_radius < row.exit_radius))
            throw std::domain_error("cox_fit: row with entry >= exit");
        d.entry[i] = row.entry_radius;
        d.exit[i] = row.exit_radius;
        d.is_event[i] = row.status == event ? 1 : 0;
        for (std::size_t j = 0; j < p_cov; ++j)
            d.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                row.covariates.at(cov_cols[j]);
        for (std::size_t l = 1; l < d.factor_levels.size(); ++l)
            d.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p_cov + l - 1)) =
                row.tree_id == d.factor_levels[l] ? 1.0 : 0.0;
    }
    for (std::size_t l = 1; l < d.factor_levels.size(); ++l)
        d.col_names.push_back("tree_id=" + d.factor_levels[l]);

    std::size_t n_events = 0;
    for (auto e : d.is_event) n_events += e;
    if (n_events == 0) throw std::domain_error("cox_fit: no events of the requested type");

    // Centering leaves the partial likelihood unchanged and keeps exp(eta)
    // away from overflow.
    d.col_means = d.x.colwise().mean();
    d.x.rowwise() -= d.col_means.transpose();
    d.col_sds.resize(static_cast<Eigen::Index>(p));
    for (std::size_t j = 0; j < p; ++j)
        d.col_sds(static_cast<Eigen::Index>(j)) = std::sqrt(
            d.x.col(static_cast<Eigen::Index>(j)).squaredNorm() / static_cast<double>(n));

    if (p > 0) {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(d.x);
        qr.setThreshold(1e-10);
        if (qr.rank() < static_cast<Eigen::Index>(p)) {
            std::string aliased;
            const auto& perm = qr.colsPermutation().indices();
            for (Eigen::Index k = qr.rank(); k < static_cast<Eigen::Index>(p); ++k) {
                if (!aliased.empty()) aliased += ", ";
                aliased += d.col_names[static_cast<std::size_t>(perm(k))];
            }
            throw std::runtime_error("cox_fit: design matrix is rank deficient; aliased: " +
                                     aliased);
        }
    }
    return d;
}

/// Breslow/Efron partial likelihood with delayed entry, by a descending sweep
/// over event radii. Rows join the running sums when the sweep drops to their
/// exit radius and leave when it drops to their entry radius; accumulation
/// order is the canonical sort, so results do not depend on input order.
CoxObjective evaluate(const Design& d, TieMethod ties, const Eigen::VectorXd& beta,
                      bool want_derivatives, StepCurve* baseline = nullptr,
                      double mean_shift = 0.0) {
    const std::size_t n = d.entry.size();
    const Eigen::Index p = d.x.cols();
    CoxObjective out;
    out.gradient = Eigen::VectorXd::Zero(p);
    out.hessian = Eigen::MatrixXd::Zero(p, p);

    Eigen::VectorXd eta = p > 0 ? Eigen::VectorXd(d.x * beta) : Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < eta.size(); ++i)
        if (std::fabs(eta(i)) > 200.0)
            throw std::runtime_error(
                "cox partial likelihood: diverging linear predictor (monotone "
                "likelihood?)");
    Eigen::VectorXd w = eta.array().exp();

    std::vector<std::size_t> by_exit(n), by_entry(n);
    std::iota(by_exit.begin(), by_exit.end(), std::size_t{0});
    std::iota(by_entry.begin(), by_entry.end(), std::size_t{0});
    std::sort(by_exit.begin(), by_exit.end(), [&](std::size_t a, std::size_t b) {
        return d.exit[a] != d.exit[b] ? d.exit[a] > d.exit[b] : a < b;
    });
    std::sort(by_entry.begin(), by_entry.end(), [&](std::size_t a, std::size_t b) {
        return d.entry[a] != d.entry[b] ? d.entry[a] > d.entry[b] : a < b;
    });

    // Distinct event radii, descending, with the tied event rows attached.
    std::map<double, std::vector<std::size_t>, std::greater<double>> events;
    for (std::size_t i = 0; i < n; ++i)
        if (d.is_event[i]) events[d.exit[i]].push_back(i);

    double s0 = 0.0;
    Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);
    std::size_t next_in = 0, next_out = 0;
    std::vector<std::pair<double, double>> base_jumps;  // (radius, d/S0_orig)

    for (const auto& [r, tied] : events) {
        while (next_in < n && d.exit[by_exit[next_in]] >= r) {
            const std::size_t i = by_exit[next_in++];
            s0 += w(static_cast<Eigen::Index>(i));
            if (p > 0) {
                s1 += w(static_cast<Eigen::Index>(i)) * d.x.row(static_cast<Eigen::Index>(i)).transpose();
                if (want_derivatives)
                    s2 += w(static_cast<Eigen::Index>(i)) *
                          (d.x.row(static_cast<Eigen::Index>(i)).transpose() *
                           d.x.row(static_cast<Eigen::Index>(i)));
            }
        }
        while (next_out < n && d.entry[by_entry[next_out]] >= r) {
            const std::size_t i = by_entry[next_out++];
            s0 -= w(static_cast<Eigen::Index>(i));
            if (p > 0) {
                s1 -= w(static_cast<Eigen::Index>(i)) * d.x.row(static_cast<Eigen::Index>(i)).transpose();
                if (want_derivatives)
                    s2 -= w(static_cast<Eigen::Index>(i)) *
                          (d.x.row(static_cast<Eigen::Index>(i)).transpose() *
                           d.x.row(static_cast<Eigen::Index>(i)));
            }
        }
        if (!(s0 > 0.0))
            throw std::logic_error("cox partial likelihood: empty risk set at an event");

        const double dt = static_cast<double>(tied.size());
        double s0d = 0.0;
        Eigen::VectorXd s1d = Eigen::VectorXd::Zero(p);
        Eigen::MatrixXd s2d = Eigen::MatrixXd::Zero(p, p);
        for (std::size_t i : tied) {
            out.loglik += eta(static_cast<Eigen::Index>(i));
            if (p > 0) out.gradient += d.x.row(static_cast<Eigen::Index>(i)).transpose();
            if (ties == TieMethod::efron) {
                s0d += w(static_cast<Eigen::Index>(i));
                if (p > 0) {
                    s1d += w(static_cast<Eigen::Index>(i)) *
                           d.x.row(static_cast<Eigen::Index>(i)).transpose();
                    if (want_derivatives)
                        s2d += w(static_cast<Eigen::Index>(i)) *
                               (d.x.row(static_cast<Eigen::Index>(i)).transpose() *
                                d.x.row(static_cast<Eigen::Index>(i)));
                }
            }
        }

        const int nsteps = ties == TieMethod::efron ? static_cast<int>(dt) : 1;
        for (int l = 0; l < nsteps; ++l) {
            const double frac = ties == TieMethod::efron ? l / dt : 0.0;
            const double denom = s0 - frac * s0d;
            const double mult = ties == TieMethod::efron ? 1.0 : dt;
            out.loglik -= mult * std::log(denom);
            if (p > 0) {
                const Eigen::VectorXd sv = s1 - frac * s1d;
                const Eigen::VectorXd ratio = sv / denom;
                out.gradient -= mult * ratio;
                if (want_derivatives)
                    out.hessian -=
                        mult * ((s2 - frac * s2d) / denom - ratio * ratio.transpose());
            }
        }
        if (baseline) base_jumps.push_back({r, dt / (s0 * std::exp(mean_shift))});
    }

    if (baseline) {
        std::sort(base_jumps.begin(), base_jumps.end());
        baseline->kind = CurveKind::step;
        baseline->levels.clear();
        baseline->values.clear();
        double total = 0.0;
        for (const auto& [r, jump] : base_jumps) {
            total += jump;
            baseline->levels.push_back(r);
            baseline->values.push_back(total);
        }
    }
    return out;
}

}  // namespace

CoxObjective cox_partial_likelihood(const EventTable& table, EventStatus event,
                                    const CoxTermSpec& spec,
                                    const Eigen::VectorXd& beta) {
    const Design d = build_design(table, event, spec);
    if (beta.size() != d.x.cols())
        throw std::invalid_argument("cox_partial_likelihood: beta has wrong length");
    return evaluate(d, spec.ties, beta, /*want_derivatives=*/true);
}

CoxFit cox_fit(const EventTable& table, EventStatus event, const CoxTermSpec& spec) {
    const Design d = build_design(table, event, spec);
    const Eigen::Index p = d.x.cols();

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    CoxObjective cur = evaluate(d, spec.ties, beta, /*want_derivatives=*/true);
    int iterations = 0;

    if (p > 0) {
        constexpr int kMaxIter = 50;
        bool converged = false;
        for (; iterations < kMaxIter; ++iterations) {
            Eigen::LDLT<Eigen::MatrixXd> info(-cur.hessian);
            if (info.info() != Eigen::Success)
                throw std::runtime_error("cox_fit: observed information not factorizable");
            Eigen::VectorXd step = info.solve(cur.gradient);

            // Step halving keeps the ascent property.
            double scale = 1.0;
            CoxObjective next;
            bool improved = false;
            for (int h = 0; h < 30; ++h) {
                const Eigen::VectorXd cand = beta + scale * step;
                try {
                    next = evaluate(d, spec.ties, cand, /*want_derivatives=*/true);
                } catch (const std::runtime_error&) {
                    scale *= 0.5;  // diverging linear predictor: shrink
                    continue;
                }
                if (next.loglik >= cur.loglik) {
                    beta += scale * step;
                    improved = true;
                    break;
                }
                scale *= 0.5;
            }
            if (!improved)
                throw std::runtime_error(
                    "cox_fit: step halving failed to improve the partial likelihood "
                    "(gradient max-norm " +
                    std::to_string(cur.gradient.cwiseAbs().maxCoeff()) + ")");

            const double rel_change =
                std::fabs(next.loglik - cur.loglik) / (std::fabs(next.loglik) + 1.0);
            cur = next;
            if (rel_change < 1e-9 && cur.gradient.cwiseAbs().maxCoeff() < 1e-6) {
                converged = true;
                ++iterations;
                break;
            }
            if (beta.cwiseAbs().maxCoeff() > 1e3)
                throw std::runtime_error(
                    "cox_fit: coefficient diverging; the partial likelihood appears "
                    "monotone (infinite estimate)");
        }
        if (!converged)
            throw std::runtime_error("cox_fit: no convergence after 50 iterations "
                                     "(gradient max-norm " +
                                     std::to_string(cur.gradient.cwiseAbs().maxCoeff()) +
                                     ")");
        // A monotone partial likelihood flattens out, so Newton "converges"
        // at an absurd coefficient. Ten standard deviations of linear
        // predictor per column is far outside any identifiable fit.
        for (Eigen::Index k = 0; k < p; ++k)
            if (std::fabs(beta(k)) * d.col_sds(k) > 10.0)
                throw std::runtime_error(
                    "cox_fit: coefficient for '" +
                    d.col_names[static_cast<std::size_t>(k)] +
                    "' diverging; the partial likelihood appears monotone "
                    "(infinite estimate)");
    }

    CoxFit fit;
    fit.coef_names = d.col_names;
    fit.coefficients = beta;
    fit.log_partial_likelihood = cur.loglik;
    fit.terms = d.terms;
    fit.factor_levels = d.factor_levels;
    fit.iterations = iterations;

    if (p > 0) {
        Eigen::LDLT<Eigen::MatrixXd> info(-cur.hessian);
        fit.covariance = info.solve(Eigen::MatrixXd::Identity(p, p));
        fit.se = fit.covariance.diagonal().cwiseSqrt();
        for (CoxTerm& term : fit.terms) {
            const Eigen::Index k = static_cast<Eigen::Index>(term.columns.size());
            Eigen::VectorXd b(k);
            Eigen::MatrixXd v(k, k);
            for (Eigen::Index a = 0; a < k; ++a) {
                b(a) = beta(term.columns[static_cast<std::size_t>(a)]);
                for (Eigen::Index bcol = 0; bcol < k; ++bcol)
                    v(a, bcol) = fit.covariance(term.columns[static_cast<std::size_t>(a)],
                                                term.columns[static_cast<std::size_t>(bcol)]);
            }
            term.chi_square = b.dot(v.ldlt().solve(b));
        }
    } else {
        fit.covariance.resize(0, 0);
        fit.se.resize(0);
    }

    // Breslow baseline at the original covariate origin: centering shifted
    // every eta by -mean'beta, which the baseline absorbs back.
    const double mean_shift = p > 0 ? -d.col_means.dot(beta) : 0.0;
    evaluate(d, spec.ties, beta, /*want_derivatives=*/false, &fit.baseline, mean_shift);
    return fit;
}

double gradient_check(const EventTable& table, EventStatus event,
                      const CoxTermSpec& spec, const Eigen::VectorXd& beta) {
    const Design d = build_design(table, event, spec);
    if (beta.size() != d.x.cols())
        throw std::invalid_argument("gradient_check: beta has wrong length");
    const Eigen::Index p = d.x.cols();
    if (p == 0) return 0.0;

    const double h = 1e-5;
    const CoxObjective at = evaluate(d, spec.ties, beta, /*want_derivatives=*/true);
    auto rel = [](double a, double b) {
        return std::fabs(a - b) / std::max({1.0, std::fabs(a), std::fabs(b)});
    };

    double worst = 0.0;
    for (Eigen::Index k = 0; k < p; ++k) {
        Eigen::VectorXd up = beta, dn = beta;
        up(k) += h;
        dn(k) -= h;
        const CoxObjective fu = evaluate(d, spec.ties, up, /*want_derivatives=*/true);
        const CoxObjective fd = evaluate(d, spec.ties, dn, /*want_derivatives=*/true);
        worst = std::max(worst, rel(at.gradient(k), (fu.loglik - fd.loglik) / (2.0 * h)));
        for (Eigen::Index j = 0; j < p; ++j)
            worst = std::max(
                worst, rel(at.hessian(j, k), (fu.gradient(j) - fd.gradient(j)) / (2.0 * h)));
    }
    return worst;
}

namespace {

double quantile_type7(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1.0) * p;
    const std::size_t lo = static_cast<std::size_t>(h);
    if (lo + 1 >= v.size()) return v.back();
    return v[lo] + (h - static_cast<double>(lo)) * (v[lo + 1] - v[lo]);
}

}  // namespace

HazardRatioResult hazard_ratio_20_80(const CoxFit& fit, const EventTable& table) {
    HazardRatioResult out;
    for (const CoxTerm& term : fit.terms) {
        double hr = 1.0;
        if (term.kind == TermKind::covariate) {
            const std::size_t ci = table.covariate_index(term.name);
            std::vector<double> values;
            values.reserve(table.rows.size());
            for (const EventRow& row : table.rows) values.push_back(row.covariates[ci]);
            const bool constant =
                std::all_of(values.begin(), values.end(),
                            [&](double v) { return v == values.front(); });
            if (constant) {
                out.warnings.push_back("covariate '" + term.name +
                                       "' is constant; hazard ratio forced to 1");
            } else {
                const double gap =
                    quantile_type7(values, 0.80) - quantile_type7(values, 0.20);
                hr = std::exp(fit.coefficients(term.columns.front()) * gap);
            }
        } else if (term.kind == TermKind::group) {
            std::vector<double> contrib;
            contrib.reserve(table.rows.size());
            std::vector<std::size_t> cov_idx;
            for (std::size_t k = 0; k < term.columns.size(); ++k)
                cov_idx.push_back(table.covariate_index(
                    fit.coef_names[static_cast<std::size_t>(term.columns[k])]));
            for (const EventRow& row : table.rows) {
                double eta = 0.0;
                for (std::size_t k = 0; k < term.columns.size(); ++k)
                    eta += row.covariates[cov_idx[k]] *
                           fit.coefficients(term.columns[k]);
                contrib.push_back(eta);
            }
            hr = std::exp(quantile_type7(contrib, 0.80) - quantile_type7(contrib, 0.20));
        } else {
            std::vector<double> effects{0.0};  // reference level
            for (int c : term.columns) effects.push_back(fit.coefficients(c));
            hr = std::exp(quantile_type7(effects, 0.80) - quantile_type7(effects, 0.20));
        }
        out.values.push_back({term.name, hr});
    }
    return out;
}

}  // namespace topohazard
