#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "topohazard/csv.hpp"
#include "topohazard/num.hpp"

#ifndef TOPOHAZARD_CLI
#error "TOPOHAZARD_CLI must point at the binary"
#endif

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(TOPOHAZARD_CLI) + " " + args + " 2>cli_stderr.txt";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("na-field reproduces the 1x3 hand example") {
    std::ofstream("cli_tiny.csv") << "0.5,-1.0,0.2\n";
    REQUIRE(run("na-field --in cli_tiny.csv --out cli_curve.csv --seed 1") == 0);
    const std::string curve = slurp("cli_curve.csv");
    CHECK(curve == "level,A_hat,var_naive\n-1,0.3333333333333333,0.1111111111111111\n");
    CHECK(fs::exists("cli_curve.csv.manifest.json"));
}

TEST_CASE("simulate-field is byte-identical across runs with the same seed") {
    REQUIRE(run("simulate-field --model m2 --rows 6 --cols 5 --eta 2 --nu 1 "
                "--seed 7 --out cli_f1.csv") == 0);
    REQUIRE(run("simulate-field --model m2 --rows 6 --cols 5 --eta 2 --nu 1 "
                "--seed 7 --out cli_f2.csv") == 0);
    CHECK(slurp("cli_f1.csv") == slurp("cli_f2.csv"));
    REQUIRE(run("simulate-field --model m2 --rows 6 --cols 5 --eta 2 --nu 1 "
                "--seed 8 --out cli_f3.csv") == 0);
    CHECK(slurp("cli_f1.csv") != slurp("cli_f3.csv"));
}

TEST_CASE("omitting the seed still records one in the manifest") {
    REQUIRE(run("simulate-field --rows 3 --cols 3 --eta 1 --nu 1 --out cli_seedless.csv") ==
            0);
    const auto manifest = nlohmann::json::parse(slurp("cli_seedless.csv.manifest.json"));
    CHECK(manifest.at("seed").get<std::uint64_t>() != 0);
    CHECK(manifest.at("params").contains("seed"));
}

TEST_CASE("manifest params replay a run bit-for-bit via --config") {
    REQUIRE(run("simulate-field --model m3 --rows 5 --cols 4 --eta 2 --nu 0.8 "
                "--seed 99 --out cli_replay_a.csv") == 0);
    // Replay from the manifest, overriding only the output path.
    REQUIRE(run("simulate-field --config cli_replay_a.csv.manifest.json "
                "--out cli_replay_b.csv") == 0);
    CHECK(slurp("cli_replay_a.csv") == slurp("cli_replay_b.csv"));
}

TEST_CASE("unknown flags exit nonzero with usage text") {
    CHECK(run("na-field --does-not-exist 1") != 0);
    CHECK(run("frobnicate") != 0);
}

TEST_CASE("malformed input names the offending line and leaves no output") {
    std::ofstream("cli_bad.csv") << "1.0,2.0\n3.0,oops\n";
    fs::remove("cli_badcurve.csv");
    CHECK(run("na-field --in cli_bad.csv --out cli_badcurve.csv") != 0);
    CHECK(!fs::exists("cli_badcurve.csv"));
    const std::string err = slurp("cli_stderr.txt");
    CHECK(err.find("cli_bad.csv") != std::string::npos);
}

TEST_CASE("limit --iid emits the closed form") {
    REQUIRE(run("limit --rows 10 --cols 10 --iid --grid-lo -1 --grid-hi 1 "
                "--grid-points 5 --seed 3 --out cli_limit.csv") == 0);
    const auto table = topohazard::read_csv("cli_limit.csv", true);
    REQUIRE(table.rows.size() == 5);
    const double a_at_1 = topohazard::parse_double(table.rows[4][1], "A");
    CHECK(a_at_1 == doctest::Approx(-std::log(topohazard::normal_sf(1.0))).epsilon(1e-12));
}

TEST_CASE("band-replicates produces a band over replicate fields") {
    for (int i = 0; i < 4; ++i)
        REQUIRE(run("simulate-field --rows 12 --cols 12 --eta 2 --nu 1 --seed " +
                    std::to_string(100 + i) + " --out cli_rep" + std::to_string(i) +
                    ".csv") == 0);
    REQUIRE(run("band-replicates --in cli_rep0.csv --in cli_rep1.csv --in cli_rep2.csv "
                "--in cli_rep3.csv --grid-points 30 --seed 5 --out cli_band.csv") == 0);
    const auto band = topohazard::read_csv("cli_band.csv", true);
    REQUIRE(band.rows.size() == 30);
    for (const auto& r : band.rows) {
        const double lower = topohazard::parse_double(r[2], "lower");
        const double center = topohazard::parse_double(r[1], "center");
        const double upper = topohazard::parse_double(r[3], "upper");
        CHECK(lower <= center);
        CHECK(center <= upper);
    }
    const auto manifest = nlohmann::json::parse(slurp("cli_band.csv.manifest.json"));
    CHECK(manifest.at("results").at("threshold").get<double>() > 0.0);
}

TEST_CASE("tree-events and cox-fit run end to end") {
    std::ofstream("cli_trees.json") << R"([{
      "tree_id": "p1",
      "nodes": [
        {"id": "root", "x": 0, "y": 0, "kind": "root"},
        {"id": "A", "x": 0, "y": 1, "kind": "branch"},
        {"id": "B", "x": -1, "y": 2, "kind": "leaf"},
        {"id": "C", "x": 1, "y": 1.8, "kind": "censored"}
      ],
      "edges": [
        {"parent": "root", "child": "A", "width": 2.0},
        {"parent": "A", "child": "B", "width": 1.0},
        {"parent": "A", "child": "C", "width": 1.5}
      ]
    },{
      "tree_id": "p2",
      "nodes": [
        {"id": "root", "x": 0, "y": 0, "kind": "root"},
        {"id": "A", "x": 0.5, "y": 0.9, "kind": "branch"},
        {"id": "B", "x": -0.8, "y": 2.1, "kind": "leaf"},
        {"id": "C", "x": 1.1, "y": 1.9, "kind": "leaf"}
      ],
      "edges": [
        {"parent": "root", "child": "A", "width": 1.8},
        {"parent": "A", "child": "B", "width": 0.9},
        {"parent": "A", "child": "C", "width": 1.2}
      ]
    }])";
    REQUIRE(run("tree-events --in cli_trees.json --out cli_events.csv") == 0);
    const auto events = topohazard::read_csv("cli_events.csv", true);
    CHECK(events.rows.size() == 6);

    REQUIRE(run("cox-fit --in cli_events.csv --event leaf --covariates width "
                "--out cli_fit.json") == 0);
    const auto fit = nlohmann::json::parse(slurp("cli_fit.json"));
    CHECK(fit.at("terms").size() == 1);
    CHECK(fit.at("terms")[0].at("term") == "width");
    CHECK(fit.at("terms")[0].contains("hr_20_80"));
    CHECK(fit.contains("baseline"));
}

TEST_CASE("plot renders curves and bands, and tolerates empty input") {
    std::ofstream("cli_empty.csv") << "level,A_hat,var_naive\n";
    REQUIRE(run("plot --curve cli_empty.csv --out cli_empty.svg") == 0);
    const std::string empty_svg = slurp("cli_empty.svg");
    CHECK(empty_svg.find("<svg") == 0);
    CHECK(empty_svg.find("</svg>") != std::string::npos);

    REQUIRE(run("plot --curve cli_curve.csv:estimate --band cli_band.csv:band "
                "--out cli_plot.svg --title demo") == 0);
    const std::string svg = slurp("cli_plot.svg");
    CHECK(svg.find("estimate") != std::string::npos);
    CHECK(svg.find("path") != std::string::npos);
}
