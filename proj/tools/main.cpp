#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "topohazard/cox.hpp"
#include "topohazard/csv.hpp"
#include "topohazard/filtration.hpp"
#include "topohazard/inference.hpp"
#include "topohazard/lattice.hpp"
#include "topohazard/limiting.hpp"
#include "topohazard/nelson_aalen.hpp"
#include "topohazard/parallel.hpp"
#include "topohazard/randfield.hpp"
#include "topohazard/trees.hpp"
#include "topohazard/version.hpp"

#include "manifest.hpp"
#include "output_guard.hpp"
#include "svg_plot.hpp"

namespace th = topohazard;
using th::cli::OutputGuard;
using th::cli::RunManifest;

namespace {

/// Flat JSON config files; a manifest's "params" object is accepted too, so a
/// manifest replays its own run.
class ConfigJSON : public CLI::Config {
public:
    std::string to_config(const CLI::App*, bool, bool, std::string) const override {
        return "{}\n";
    }
    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        nlohmann::json j = nlohmann::json::parse(input);
        if (j.contains("params") && j.at("params").is_object()) j = j.at("params");
        std::vector<CLI::ConfigItem> items;
        for (auto it = j.begin(); it != j.end(); ++it) {
            CLI::ConfigItem item;
            item.name = it.key();
            const nlohmann::json& v = it.value();
            if (v.is_array())
                for (const auto& e : v)
                    item.inputs.push_back(e.is_string() ? e.get<std::string>() : e.dump());
            else if (v.is_string())
                item.inputs.push_back(v.get<std::string>());
            else if (v.is_boolean())
                item.inputs.push_back(v.get<bool>() ? "true" : "false");
            else
                item.inputs.push_back(v.dump());
            items.push_back(std::move(item));
        }
        return items;
    }
};

struct CommonFlags {
    std::optional<std::uint64_t> seed;
    int threads = 0;
    std::string manifest_path;

    void attach(CLI::App* sub) {
        sub->add_option("--seed", seed, "master seed; drawn and recorded when omitted");
        sub->add_option("--threads", threads, "worker cap (0 = hardware)");
        sub->add_option("--manifest", manifest_path,
                        "manifest path (default: <out>.manifest.json)");
        sub->set_config("--config", "", "JSON config file; command-line flags override");
        sub->config_formatter(std::make_shared<ConfigJSON>());
    }

    std::uint64_t resolve_seed() const {
        if (seed) return *seed;
        std::random_device rd;
        return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    }
};

std::map<std::string, std::string> collect_params(const CLI::App* sub) {
    std::map<std::string, std::string> params;
    for (const CLI::Option* opt : sub->get_options()) {
        if (opt->get_name() == "--help" || opt->get_name() == "--config") continue;
        if (opt->count() == 0) continue;
        std::string name = opt->get_name(false, true);
        if (name.rfind("--", 0) == 0) name = name.substr(2);
        std::string value;
        const auto& results = opt->results();
        for (std::size_t i = 0; i < results.size(); ++i) {
            if (i) value += ",";
            value += results[i];
        }
        if (value.empty()) value = "true";
        params[name] = value;
    }
    return params;
}

void write_manifest(OutputGuard& guard, const CLI::App* sub, const CommonFlags& common,
                    std::uint64_t seed, const std::string& default_out,
                    const std::map<std::string, std::string>& inputs,
                    nlohmann::json results = {}) {
    RunManifest manifest;
    manifest.subcommand = sub->get_name();
    manifest.params = collect_params(sub);
    manifest.params["seed"] = std::to_string(seed);
    manifest.seed = seed;
    for (const auto& [path, _] : inputs) manifest.input_digests[path] = th::cli::file_digest(path);
    manifest.results = std::move(results);
    const std::string path =
        common.manifest_path.empty() ? default_out + ".manifest.json" : common.manifest_path;
    std::ofstream out(guard.stage(path));
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << manifest.to_json().dump(2) << '\n';
}

th::Boundary parse_boundary(const std::string& s) {
    if (s == "open") return th::Boundary::open;
    if (s == "torus") return th::Boundary::torus;
    throw CLI::ValidationError("--boundary", "must be open or torus");
}

th::Neighborhood parse_neighborhood(const std::string& s) {
    if (s == "edge4") return th::Neighborhood::edge4;
    if (s == "vertex8") return th::Neighborhood::vertex8;
    throw CLI::ValidationError("--neighborhood", "must be edge4 or vertex8");
}

th::ModelKind parse_model(const std::string& s) {
    if (s == "m1") return th::ModelKind::m1;
    if (s == "m2") return th::ModelKind::m2;
    if (s == "m3") return th::ModelKind::m3;
    throw CLI::ValidationError("--model", "must be m1, m2 or m3");
}

/// Numeric CSV with an optional header line; returns the selected columns.
std::vector<std::vector<double>> read_columns(const std::string& path,
                                              std::size_t ncols) {
    const th::CsvTable raw = th::read_csv(path, /*expect_header=*/false);
    std::vector<std::vector<double>> cols(ncols);
    for (std::size_t i = 0; i < raw.rows.size(); ++i) {
        const auto& row = raw.rows[i];
        if (i == 0) {
            // Header detection: first field not parseable as a number.
            try {
                th::parse_double(row.at(0), path);
            } catch (const std::exception&) {
                continue;
            }
        }
        if (row.size() < ncols)
            throw std::runtime_error(path + ": expected at least " +
                                     std::to_string(ncols) + " columns");
        for (std::size_t c = 0; c < ncols; ++c)
            cols[c].push_back(th::parse_double(row[c], path + " row " + std::to_string(i + 1)));
    }
    return cols;
}

// ---------------------------------------------------------------------------

int run_simulate_field(CLI::App* sub, const CommonFlags& common,
                       const std::string& model_s, int rows, int cols, double eta,
                       double nu, const std::string& out) {
    const std::uint64_t seed = common.resolve_seed();
    const th::FieldModel model{parse_model(model_s), {eta, nu}};
    const th::LatticeField field = th::simulate_model(model, rows, cols, seed);

    OutputGuard guard;
    field.to_csv(guard.stage(out));
    write_manifest(guard, sub, common, seed, out, {});
    guard.commit();
    return 0;
}

int run_na_field(CLI::App* sub, const CommonFlags& common, const std::string& in,
                 const std::string& raw, const std::string& sidecar,
                 const std::string& out, const std::string& barcode_out,
                 const std::string& direction_s, const std::string& convention_s,
                 const std::string& boundary_s, const std::string& neighborhood_s,
                 bool exp_scale) {
    const th::Boundary boundary = parse_boundary(boundary_s);
    const th::Neighborhood neighborhood = parse_neighborhood(neighborhood_s);
    th::LatticeField field =
        !in.empty() ? th::LatticeField::from_csv(in, boundary, neighborhood)
                    : th::LatticeField::from_raw(raw, sidecar, boundary, neighborhood);
    if (field.ties_broken())
        std::cerr << "note: tied values perturbed to enforce distinctness\n";

    const th::Direction direction = direction_s == "superlevel"
                                        ? th::Direction::superlevel
                                        : th::Direction::sublevel;
    const th::RiskConvention convention = convention_s == "strict"
                                              ? th::RiskConvention::strict
                                              : th::RiskConvention::left;
    const th::BirthProcess bp = th::birth_process(field, direction);
    th::StepCurve na = th::nelson_aalen(bp, convention);
    th::StepCurve var = th::naive_variance(bp, convention);
    if (exp_scale) {
        na = th::exp_rescaled(na);
        var = th::exp_rescaled(var);
    }

    OutputGuard guard;
    {
        std::ofstream os(guard.stage(out));
        if (!os) throw std::runtime_error("cannot write '" + out + "'");
        os << "level,A_hat,var_naive\n";
        for (std::size_t i = 0; i < na.levels.size(); ++i)
            os << th::format_double(na.levels[i]) << ',' << th::format_double(na.values[i])
               << ',' << th::format_double(var.values[i]) << '\n';
    }
    if (!barcode_out.empty()) {
        const th::LatticeField* base = &field;
        th::LatticeField negated = field;
        if (direction == th::Direction::superlevel) {
            negated = field.negated();
            base = &negated;
        }
        const th::Barcode bc = th::barcode(*base);
        std::ofstream os(guard.stage(barcode_out));
        if (!os) throw std::runtime_error("cannot write '" + barcode_out + "'");
        os << "birth,death,row,col\n";
        for (const auto& iv : bc.intervals)
            os << th::format_double(iv.birth) << ',' << th::format_double(iv.death) << ','
               << iv.birth_location.row << ',' << iv.birth_location.col << '\n';
    }
    std::map<std::string, std::string> inputs;
    if (!in.empty()) inputs[in] = "";
    if (!raw.empty()) inputs[raw] = "";
    if (!sidecar.empty()) inputs[sidecar] = "";
    write_manifest(guard, sub, common, common.resolve_seed(), out, inputs);
    guard.commit();
    return 0;
}

int run_limit(CLI::App* sub, const CommonFlags& common, int rows, int cols, bool iid,
              double eta, double nu, const std::string& boundary_s,
              const std::string& neighborhood_s, double grid_lo, double grid_hi,
              int grid_points, int mc_samples, int internal_points,
              const std::string& out) {
    const std::uint64_t seed = common.resolve_seed();
    th::LimitSpec spec;
    if (!iid) spec.matern = th::MaternParams{eta, nu};
    spec.nrows = rows;
    spec.ncols = cols;
    spec.boundary = parse_boundary(boundary_s);
    spec.neighborhood = parse_neighborhood(neighborhood_s);
    spec.mc_samples = mc_samples;
    spec.internal_grid_points = internal_points;
    spec.seed = seed;
    if (!(grid_hi > grid_lo)) {
        grid_lo = th::expected_at_risk_level(spec, 0.95);
        grid_hi = th::expected_at_risk_level(spec, 0.05);
    }
    spec.grid = th::linspace(grid_lo, grid_hi, grid_points);

    const th::LimitCurveResult res = th::limit_curve(spec);
    if (res.truncated)
        std::cerr << "warning: curve truncated at level "
                  << th::format_double(res.truncation_level)
                  << " (expected risk set vanished)\n";

    OutputGuard guard;
    {
        std::ofstream os(guard.stage(out));
        if (!os) throw std::runtime_error("cannot write '" + out + "'");
        os << "level,A,mc_se\n";
        for (std::size_t i = 0; i < spec.grid.size(); ++i)
            os << th::format_double(spec.grid[i]) << ','
               << th::format_double(res.curve.values[i]) << ','
               << th::format_double(res.mc_se[i]) << '\n';
    }
    nlohmann::json results;
    results["truncated"] = res.truncated;
    write_manifest(guard, sub, common, seed, out, {}, results);
    guard.commit();
    return 0;
}

void write_band_csv(OutputGuard& guard, const std::string& out,
                    const th::BandResult& band) {
    std::ofstream os(guard.stage(out));
    if (!os) throw std::runtime_error("cannot write '" + out + "'");
    os << "level,center,lower,upper\n";
    for (std::size_t i = 0; i < band.grid.size(); ++i)
        os << th::format_double(band.grid[i]) << ',' << th::format_double(band.center[i])
           << ',' << th::format_double(band.center[i] - band.half_width[i]) << ','
           << th::format_double(band.center[i] + band.half_width[i]) << '\n';
}

int run_band_replicates(CLI::App* sub, const CommonFlags& common,
                        const std::vector<std::string>& inputs, double alpha,
                        int mc_draws, int grid_points, const std::string& boundary_s,
                        const std::string& neighborhood_s, const std::string& out) {
    const std::uint64_t seed = common.resolve_seed();
    const th::Boundary boundary = parse_boundary(boundary_s);
    const th::Neighborhood neighborhood = parse_neighborhood(neighborhood_s);

    std::vector<th::BirthProcess> processes;
    for (const std::string& path : inputs)
        processes.push_back(
            th::birth_process(th::LatticeField::from_csv(path, boundary, neighborhood)));
    const th::AtRiskGrid ar = th::at_risk_percentile_grid(
        std::span<const th::BirthProcess>(processes), std::vector<double>{}, grid_points);
    std::vector<th::StepCurve> curves;
    for (const th::BirthProcess& bp : processes)
        curves.push_back(th::discretize(th::nelson_aalen(bp), ar.grid));

    const th::BandResult band = th::replicate_band(curves, alpha, mc_draws, seed);
    for (const std::string& w : band.warnings) std::cerr << "warning: " << w << '\n';

    OutputGuard guard;
    write_band_csv(guard, out, band);
    std::map<std::string, std::string> digests;
    for (const std::string& path : inputs) digests[path] = "";
    nlohmann::json results;
    results["threshold"] = band.threshold;
    write_manifest(guard, sub, common, seed, out, digests, results);
    guard.commit();
    return 0;
}

int run_band_bootstrap(CLI::App* sub, const CommonFlags& common, const std::string& in,
                       int B, double alpha, int grid_points,
                       const std::string& boundary_s, const std::string& neighborhood_s,
                       const std::string& out) {
    const std::uint64_t seed = common.resolve_seed();
    const th::LatticeField field = th::LatticeField::from_csv(
        in, parse_boundary(boundary_s), parse_neighborhood(neighborhood_s));
    const th::BirthProcess bp = th::birth_process(field);
    const th::AtRiskGrid ar =
        th::at_risk_percentile_grid(std::span<const th::BirthProcess>(&bp, 1),
                                    std::vector<double>{}, grid_points);

    const th::MaternFit fit = th::fit_matern_mle(field);
    const th::GrfSampler sampler(field.nrows(), field.ncols(), fit.params);
    const th::StepCurve original = th::discretize(th::nelson_aalen(bp), ar.grid);
    std::vector<th::StepCurve> boot(static_cast<std::size_t>(B));
    th::parallel_for(static_cast<std::size_t>(B), [&](std::size_t bi) {
        const th::LatticeField sim = sampler.draw(seed, bi + 1);
        boot[bi] = th::discretize(th::nelson_aalen(th::birth_process(sim)), ar.grid);
    });
    const th::BandResult band = th::bootstrap_band_from_curves(original, boot, alpha);
    for (const std::string& w : band.warnings) std::cerr << "warning: " << w << '\n';

    OutputGuard guard;
    write_band_csv(guard, out, band);
    nlohmann::json results;
    results["threshold"] = band.threshold;
    results["eta_hat"] = fit.params.eta;
    results["nu_hat"] = fit.params.nu;
    results["loglik"] = fit.loglik;
    write_manifest(guard, sub, common, seed, out, {{in, ""}}, results);
    guard.commit();
    return 0;
}

int run_coverage(CLI::App* sub, const CommonFlags& common, const std::string& model_s,
                 int rows, int cols, double eta, double nu, const std::string& method_s,
                 int trials, int replicates, int B, double alpha, int grid_points,
                 int mc_draws, int mc_samples, const std::string& out) {
    const std::uint64_t seed = common.resolve_seed();
    th::CoverageConfig config;
    config.model = {parse_model(model_s), {eta, nu}};
    config.nrows = rows;
    config.ncols = cols;
    if (method_s == "replicate")
        config.method = th::BandMethod::replicate;
    else if (method_s == "bootstrap")
        config.method = th::BandMethod::bootstrap;
    else if (method_s == "naive")
        config.method = th::BandMethod::naive;
    else
        throw CLI::ValidationError("--method", "must be replicate, bootstrap or naive");
    config.trials = trials;
    config.replicates = replicates;
    config.bootstrap_B = B;
    config.alpha = alpha;
    config.grid_points = grid_points;
    config.mc_draws = mc_draws;
    config.mc_samples = mc_samples;
    config.seed = seed;

    const th::CoverageResult res = th::coverage_experiment(config);

    OutputGuard guard;
    {
        std::ofstream os(guard.stage(out));
        if (!os) throw std::runtime_error("cannot write '" + out + "'");
        os << "statistic,level,coverage_pct\n";
        for (std::size_t i = 0; i < res.probs.size(); ++i)
            os << "pointwise_p" << th::format_double(res.probs[i]) << ','
               << th::format_double(res.levels[i]) << ','
               << th::format_double(res.pointwise_pct[i]) << '\n';
        os << "scb,," << th::format_double(res.scb_pct) << '\n';
    }
    write_manifest(guard, sub, common, seed, out, {});
    guard.commit();
    return 0;
}

int run_tree_events(CLI::App* sub, const CommonFlags& common, const std::string& in,
                    double proximity, const std::string& out) {
    const std::vector<th::MetricTree> trees = th::trees_from_json_file(in);
    const th::EventTable table =
        th::build_event_table(std::span<const th::MetricTree>(trees), proximity);
    for (const std::string& w : table.warnings) std::cerr << "warning: " << w << '\n';

    OutputGuard guard;
    th::write_event_table_csv(table, guard.stage(out));
    write_manifest(guard, sub, common, common.resolve_seed(), out, {{in, ""}});
    guard.commit();
    return 0;
}

int run_cox_fit(CLI::App* sub, const CommonFlags& common, const std::string& in,
                const std::string& event_s, const std::string& covariates_s,
                const std::vector<std::string>& groups_s, bool factor,
                const std::string& ties_s, const std::string& out) {
    const th::EventTable table = th::read_event_table_csv(in);
    th::CoxTermSpec spec;
    spec.tree_factor = factor;
    spec.ties = ties_s == "efron" ? th::TieMethod::efron : th::TieMethod::breslow;
    {
        std::stringstream ss(covariates_s);
        std::string name;
        while (std::getline(ss, name, ','))
            if (!name.empty()) spec.covariates.push_back(name);
    }
    for (const std::string& g : groups_s) {
        const auto eq = g.find('=');
        if (eq == std::string::npos)
            throw CLI::ValidationError("--group", "expected name=col1+col2+...");
        std::vector<std::string> members;
        std::stringstream ss(g.substr(eq + 1));
        std::string name;
        while (std::getline(ss, name, '+'))
            if (!name.empty()) members.push_back(name);
        spec.groups.push_back({g.substr(0, eq), std::move(members)});
    }

    const th::CoxFit fit = th::cox_fit(table, th::event_status_from_string(event_s), spec);
    const th::HazardRatioResult hr = th::hazard_ratio_20_80(fit, table);
    for (const std::string& w : hr.warnings) std::cerr << "warning: " << w << '\n';

    nlohmann::json j;
    j["event"] = event_s;
    j["ties"] = ties_s;
    j["log_partial_likelihood"] = fit.log_partial_likelihood;
    j["iterations"] = fit.iterations;
    for (std::size_t t = 0; t < fit.terms.size(); ++t) {
        const th::CoxTerm& term = fit.terms[t];
        nlohmann::json tj;
        tj["term"] = term.name;
        if (term.kind == th::TermKind::covariate) {
            tj["coefficient"] = fit.coefficients(term.columns.front());
            tj["se"] = fit.se(term.columns.front());
        }
        tj["chi_square"] = term.chi_square;
        tj["df"] = term.df;
        tj["hr_20_80"] = hr.values[t].second;
        j["terms"].push_back(std::move(tj));
    }
    for (Eigen::Index c = 0; c < fit.coefficients.size(); ++c)
        j["coefficients"].push_back({{"name", fit.coef_names[static_cast<std::size_t>(c)]},
                                     {"coefficient", fit.coefficients(c)},
                                     {"se", fit.se(c)}});
    j["baseline"] = {{"levels", fit.baseline.levels}, {"values", fit.baseline.values}};
    if (!hr.warnings.empty()) j["warnings"] = hr.warnings;

    OutputGuard guard;
    {
        std::ofstream os(guard.stage(out));
        if (!os) throw std::runtime_error("cannot write '" + out + "'");
        os << j.dump(2) << '\n';
    }
    write_manifest(guard, sub, common, common.resolve_seed(), out, {{in, ""}});
    guard.commit();
    return 0;
}

int run_plot(CLI::App* sub, const CommonFlags& common,
             const std::vector<std::string>& curve_args,
             const std::vector<std::string>& line_args,
             const std::vector<std::string>& ref_args,
             const std::vector<std::string>& band_args, const std::string& title,
             const std::string& out) {
    auto split_label = [](const std::string& arg) {
        const auto pos = arg.rfind(':');
        // A bare path keeps its basename as the legend label.
        if (pos == std::string::npos || pos == 0) {
            std::string base = arg;
            const auto slash = base.find_last_of('/');
            if (slash != std::string::npos) base = base.substr(slash + 1);
            const auto dot = base.find_last_of('.');
            if (dot != std::string::npos) base = base.substr(0, dot);
            return std::pair<std::string, std::string>(arg, base);
        }
        return std::pair<std::string, std::string>(arg.substr(0, pos), arg.substr(pos + 1));
    };

    std::vector<th::cli::PlotCurve> curves;
    std::map<std::string, std::string> inputs;
    auto add_curves = [&](const std::vector<std::string>& args, bool step, bool dashed) {
        for (const std::string& arg : args) {
            const auto [path, label] = split_label(arg);
            const auto cols = read_columns(path, 2);
            curves.push_back({cols[0], cols[1], label, step, dashed});
            inputs[path] = "";
        }
    };
    add_curves(curve_args, /*step=*/true, /*dashed=*/false);
    add_curves(line_args, /*step=*/false, /*dashed=*/false);
    add_curves(ref_args, /*step=*/false, /*dashed=*/true);

    std::vector<th::cli::PlotBand> bands;
    for (const std::string& arg : band_args) {
        const auto [path, label] = split_label(arg);
        const auto cols = read_columns(path, 4);
        bands.push_back({cols[0], cols[2], cols[3], label});
        curves.push_back({cols[0], cols[1], label, false, false});
        inputs[path] = "";
    }

    OutputGuard guard;
    {
        std::ofstream os(guard.stage(out));
        if (!os) throw std::runtime_error("cannot write '" + out + "'");
        os << th::cli::render_svg(curves, bands, title);
    }
    write_manifest(guard, sub, common, common.resolve_seed(), out, inputs);
    guard.commit();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Event-history statistics for topological features of random "
                 "fields and embedded metric trees"};
    app.set_version_flag("--version", TOPOHAZARD_VERSION);
    app.require_subcommand(1);

    // simulate-field ---------------------------------------------------------
    auto common_sim = std::make_shared<CommonFlags>();
    std::string sim_model = "m1", sim_out;
    int sim_rows = 0, sim_cols = 0;
    double sim_eta = 0.0, sim_nu = 0.0;
    CLI::App* sim = app.add_subcommand("simulate-field",
                                       "Simulate a random field (models M1/M2/M3)");
    sim->add_option("--model", sim_model, "m1, m2 or m3")->capture_default_str();
    sim->add_option("--rows", sim_rows)->required();
    sim->add_option("--cols", sim_cols)->required();
    sim->add_option("--eta", sim_eta, "Matern range")->required();
    sim->add_option("--nu", sim_nu, "Matern smoothness")->required();
    sim->add_option("--out", sim_out, "output CSV grid")->required();
    common_sim->attach(sim);

    // na-field ---------------------------------------------------------------
    auto common_na = std::make_shared<CommonFlags>();
    std::string na_in, na_raw, na_sidecar, na_out, na_barcode;
    std::string na_direction = "sublevel", na_convention = "left";
    std::string na_boundary = "open", na_neighborhood = "edge4";
    bool na_exp = false;
    CLI::App* na = app.add_subcommand(
        "na-field", "Nelson-Aalen curve for component births of a field");
    na->add_option("--in", na_in, "input CSV grid");
    na->add_option("--raw", na_raw, "raw little-endian float64 array");
    na->add_option("--sidecar", na_sidecar, "JSON sidecar {nrows, ncols} for --raw");
    na->add_option("--out", na_out, "output CSV (level,A_hat,var_naive)")->required();
    na->add_option("--barcode-out", na_barcode, "optional CSV (birth,death,row,col)");
    na->add_option("--direction", na_direction, "sublevel or superlevel")
        ->capture_default_str();
    na->add_option("--risk-convention", na_convention, "left or strict")
        ->capture_default_str();
    na->add_option("--boundary", na_boundary, "open or torus")->capture_default_str();
    na->add_option("--neighborhood", na_neighborhood, "edge4 or vertex8")
        ->capture_default_str();
    na->add_flag("--exp-scale", na_exp, "relabel levels as exp(level) in outputs");
    common_na->attach(na);

    // limit ------------------------------------------------------------------
    auto common_limit = std::make_shared<CommonFlags>();
    int lim_rows = 0, lim_cols = 0, lim_points = 200, lim_samples = 20000,
        lim_internal = 400;
    double lim_eta = 0.0, lim_nu = 0.0, lim_lo = 0.0, lim_hi = 0.0;
    bool lim_iid = false;
    std::string lim_boundary = "open", lim_neighborhood = "edge4", lim_out;
    CLI::App* lim = app.add_subcommand("limit", "Limiting curve of the mean estimator");
    lim->add_option("--rows", lim_rows)->required();
    lim->add_option("--cols", lim_cols)->required();
    lim->add_option("--eta", lim_eta, "Matern range");
    lim->add_option("--nu", lim_nu, "Matern smoothness");
    lim->add_flag("--iid", lim_iid, "independent N(0,1) values (closed form)");
    lim->add_option("--boundary", lim_boundary)->capture_default_str();
    lim->add_option("--neighborhood", lim_neighborhood)->capture_default_str();
    lim->add_option("--grid-lo", lim_lo, "grid start (default: at-risk 0.95 level)");
    lim->add_option("--grid-hi", lim_hi, "grid end (default: at-risk 0.05 level)");
    lim->add_option("--grid-points", lim_points)->capture_default_str();
    lim->add_option("--mc-samples", lim_samples)->capture_default_str();
    lim->add_option("--internal-grid-points", lim_internal)->capture_default_str();
    lim->add_option("--out", lim_out, "output CSV (level,A,mc_se)")->required();
    common_limit->attach(lim);

    // band-replicates --------------------------------------------------------
    auto common_br = std::make_shared<CommonFlags>();
    std::vector<std::string> br_in;
    double br_alpha = 0.05;
    int br_draws = 10000, br_points = 200;
    std::string br_boundary = "open", br_neighborhood = "edge4", br_out;
    CLI::App* br = app.add_subcommand("band-replicates",
                                      "Simultaneous band from replicate fields");
    br->add_option("--in", br_in, "replicate field CSVs (repeat)")->required();
    br->add_option("--alpha", br_alpha)->capture_default_str();
    br->add_option("--mc-draws", br_draws)->capture_default_str();
    br->add_option("--grid-points", br_points)->capture_default_str();
    br->add_option("--boundary", br_boundary)->capture_default_str();
    br->add_option("--neighborhood", br_neighborhood)->capture_default_str();
    br->add_option("--out", br_out, "output CSV (level,center,lower,upper)")->required();
    common_br->attach(br);

    // band-bootstrap ---------------------------------------------------------
    auto common_bb = std::make_shared<CommonFlags>();
    std::string bb_in, bb_boundary = "open", bb_neighborhood = "edge4", bb_out;
    int bb_B = 200, bb_points = 200;
    double bb_alpha = 0.05;
    CLI::App* bb = app.add_subcommand("band-bootstrap",
                                      "Parametric-bootstrap band from a single field");
    bb->add_option("--in", bb_in, "input field CSV")->required();
    bb->add_option("--B", bb_B, "bootstrap replicates")->capture_default_str();
    bb->add_option("--alpha", bb_alpha)->capture_default_str();
    bb->add_option("--grid-points", bb_points)->capture_default_str();
    bb->add_option("--boundary", bb_boundary)->capture_default_str();
    bb->add_option("--neighborhood", bb_neighborhood)->capture_default_str();
    bb->add_option("--out", bb_out, "output CSV (level,center,lower,upper)")->required();
    common_bb->attach(bb);

    // coverage ---------------------------------------------------------------
    auto common_cov = std::make_shared<CommonFlags>();
    std::string cov_model = "m1", cov_method = "replicate", cov_out;
    int cov_rows = 60, cov_cols = 60, cov_trials = 100, cov_reps = 40, cov_B = 200;
    int cov_points = 200, cov_draws = 10000, cov_samples = 20000;
    double cov_eta = 5.0, cov_nu = 1.0, cov_alpha = 0.05;
    CLI::App* cov = app.add_subcommand("coverage", "Coverage experiment harness");
    cov->add_option("--model", cov_model)->capture_default_str();
    cov->add_option("--rows", cov_rows)->capture_default_str();
    cov->add_option("--cols", cov_cols)->capture_default_str();
    cov->add_option("--eta", cov_eta)->capture_default_str();
    cov->add_option("--nu", cov_nu)->capture_default_str();
    cov->add_option("--method", cov_method, "replicate, bootstrap or naive")
        ->capture_default_str();
    cov->add_option("--trials", cov_trials)->capture_default_str();
    cov->add_option("--replicates", cov_reps, "N per trial (replicate method)")
        ->capture_default_str();
    cov->add_option("--B", cov_B, "bootstrap replicates")->capture_default_str();
    cov->add_option("--alpha", cov_alpha)->capture_default_str();
    cov->add_option("--grid-points", cov_points)->capture_default_str();
    cov->add_option("--mc-draws", cov_draws)->capture_default_str();
    cov->add_option("--mc-samples", cov_samples)->capture_default_str();
    cov->add_option("--out", cov_out, "output CSV")->required();
    common_cov->attach(cov);

    // tree-events ------------------------------------------------------------
    auto common_te = std::make_shared<CommonFlags>();
    std::string te_in, te_out;
    double te_proximity = 200.0;
    CLI::App* te = app.add_subcommand("tree-events",
                                      "Event/covariate table from metric trees");
    te->add_option("--in", te_in, "trees JSON")->required();
    te->add_option("--proximity-radius", te_proximity)->capture_default_str();
    te->add_option("--out", te_out, "output CSV")->required();
    common_te->attach(te);

    // cox-fit ----------------------------------------------------------------
    auto common_cx = std::make_shared<CommonFlags>();
    std::string cx_in, cx_event = "leaf", cx_covariates, cx_ties = "breslow", cx_out;
    std::vector<std::string> cx_groups;
    bool cx_factor = false;
    CLI::App* cx = app.add_subcommand("cox-fit",
                                      "Proportional-hazards fit on an event table");
    cx->add_option("--in", cx_in, "event table CSV")->required();
    cx->add_option("--event", cx_event, "leaf or branch")->capture_default_str();
    cx->add_option("--covariates", cx_covariates, "comma-separated covariate names");
    cx->add_option("--group", cx_groups, "joint-Wald group, name=col1+col2 (repeat)");
    cx->add_flag("--factor", cx_factor, "tree_id fixed effects (first level reference)");
    cx->add_option("--ties", cx_ties, "breslow or efron")->capture_default_str();
    cx->add_option("--out", cx_out, "output JSON")->required();
    common_cx->attach(cx);

    // plot ---------------------------------------------------------------
    auto common_plot = std::make_shared<CommonFlags>();
    std::vector<std::string> plot_curves, plot_lines, plot_refs, plot_bands;
    std::string plot_title, plot_out;
    CLI::App* plot = app.add_subcommand("plot", "Render curves and bands to SVG");
    plot->add_option("--curve", plot_curves, "step-curve CSV, path[:label] (repeat)");
    plot->add_option("--line", plot_lines, "sampled-curve CSV, path[:label] (repeat)");
    plot->add_option("--ref", plot_refs, "reference-curve CSV, dashed (repeat)");
    plot->add_option("--band", plot_bands, "band CSV level,center,lower,upper (repeat)");
    plot->add_option("--title", plot_title);
    plot->add_option("--out", plot_out, "output SVG")->required();
    common_plot->attach(plot);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (sim->parsed()) {
            th::thread_cap() = common_sim->threads;
            return run_simulate_field(sim, *common_sim, sim_model, sim_rows, sim_cols,
                                      sim_eta, sim_nu, sim_out);
        }
        if (na->parsed()) {
            th::thread_cap() = common_na->threads;
            if (na_in.empty() && (na_raw.empty() || na_sidecar.empty()))
                throw std::runtime_error("na-field: need --in or --raw with --sidecar");
            return run_na_field(na, *common_na, na_in, na_raw, na_sidecar, na_out,
                                na_barcode, na_direction, na_convention, na_boundary,
                                na_neighborhood, na_exp);
        }
        if (lim->parsed()) {
            th::thread_cap() = common_limit->threads;
            if (!lim_iid && (lim_eta <= 0.0 || lim_nu <= 0.0))
                throw std::runtime_error("limit: need --eta and --nu, or --iid");
            return run_limit(lim, *common_limit, lim_rows, lim_cols, lim_iid, lim_eta,
                             lim_nu, lim_boundary, lim_neighborhood, lim_lo, lim_hi,
                             lim_points, lim_samples, lim_internal, lim_out);
        }
        if (br->parsed()) {
            th::thread_cap() = common_br->threads;
            return run_band_replicates(br, *common_br, br_in, br_alpha, br_draws,
                                       br_points, br_boundary, br_neighborhood, br_out);
        }
        if (bb->parsed()) {
            th::thread_cap() = common_bb->threads;
            return run_band_bootstrap(bb, *common_bb, bb_in, bb_B, bb_alpha, bb_points,
                                      bb_boundary, bb_neighborhood, bb_out);
        }
        if (cov->parsed()) {
            th::thread_cap() = common_cov->threads;
            return run_coverage(cov, *common_cov, cov_model, cov_rows, cov_cols, cov_eta,
                                cov_nu, cov_method, cov_trials, cov_reps, cov_B,
                                cov_alpha, cov_points, cov_draws, cov_samples, cov_out);
        }
        if (te->parsed()) {
            th::thread_cap() = common_te->threads;
            return run_tree_events(te, *common_te, te_in, te_proximity, te_out);
        }
        if (cx->parsed()) {
            th::thread_cap() = common_cx->threads;
            return run_cox_fit(cx, *common_cx, cx_in, cx_event, cx_covariates, cx_groups,
                               cx_factor, cx_ties, cx_out);
        }
        if (plot->parsed()) {
            th::thread_cap() = common_plot->threads;
            return run_plot(plot, *common_plot, plot_curves, plot_lines, plot_refs,
                            plot_bands, plot_title, plot_out);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
