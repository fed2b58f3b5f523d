#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>
#include <stdexcept>

#include "topohazard/lattice.hpp"
#include "topohazard/num.hpp"
#include "test_util.hpp"

using namespace topohazard;

TEST_CASE("neighbor counts on a 3x3 open lattice") {
    auto f = test_util::random_field(3, 3, 1);
    CHECK(f.neighbors({1, 1}).size() == 4);  // interior
    CHECK(f.neighbors({0, 0}).size() == 2);  // corner
    CHECK(f.neighbors({0, 1}).size() == 3);  // edge
}

TEST_CASE("torus wraps corner neighbors") {
    auto f = test_util::random_field(3, 3, 2, Boundary::torus);
    const NeighborList nb = f.neighbors({0, 0});
    CHECK(nb.size() == 4);
    std::set<std::pair<int, int>> got;
    for (const GridIndex& ix : nb) got.insert({ix.row, ix.col});
    CHECK(got == std::set<std::pair<int, int>>{{2, 0}, {1, 0}, {0, 2}, {0, 1}});
}

TEST_CASE("vertex8 includes diagonal neighbors") {
    auto f = test_util::random_field(3, 3, 3, Boundary::open, Neighborhood::vertex8);
    CHECK(f.neighbors({1, 1}).size() == 8);
    CHECK(f.neighbors({0, 0}).size() == 3);
}

TEST_CASE("out-of-bounds index is a domain error") {
    auto f = test_util::random_field(3, 3, 4);
    CHECK_THROWS_AS(f.neighbors({3, 0}), std::domain_error);
    CHECK_THROWS_AS(f.neighbors({0, -1}), std::domain_error);
}

TEST_CASE("neighborhood symmetry under every boundary/neighborhood combination") {
    for (Boundary b : {Boundary::open, Boundary::torus})
        for (Neighborhood nh : {Neighborhood::edge4, Neighborhood::vertex8}) {
            auto f = test_util::random_field(5, 7, 5, b, nh);
            for (int r = 0; r < f.nrows(); ++r)
                for (int c = 0; c < f.ncols(); ++c)
                    for (const GridIndex& nb : f.neighbors({r, c})) {
                        bool back = false;
                        for (const GridIndex& nn : f.neighbors(nb))
                            if (nn == GridIndex{r, c}) back = true;
                        CHECK(back);
                    }
        }
}

TEST_CASE("sublevel mask extremes and median count") {
    auto f = test_util::random_field(10, 10, 6);
    double lo = f.value_flat(0), hi = f.value_flat(0);
    for (int i = 0; i < f.size(); ++i) {
        lo = std::min(lo, f.value_flat(i));
        hi = std::max(hi, f.value_flat(i));
    }
    auto none = f.sublevel_mask(lo - 1.0);
    auto all = f.sublevel_mask(hi);
    CHECK(std::count(none.begin(), none.end(), 1) == 0);
    CHECK(std::count(all.begin(), all.end(), 1) == 100);

    // Exactly 50 cells at or below the 50th-smallest value.
    std::vector<double> sorted(f.values());
    std::sort(sorted.begin(), sorted.end());
    auto half = f.sublevel_mask(sorted[49]);
    CHECK(std::count(half.begin(), half.end(), 1) == 50);
}

TEST_CASE("sublevel masks are nested in t") {
    auto f = test_util::random_field(8, 8, 7);
    RngStream rng(8, 1);
    for (int k = 0; k < 20; ++k) {
        double t1 = rng.normal(), t2 = rng.normal();
        if (t1 > t2) std::swap(t1, t2);
        auto m1 = f.sublevel_mask(t1);
        auto m2 = f.sublevel_mask(t2);
        for (std::size_t i = 0; i < m1.size(); ++i)
            if (m1[i]) CHECK(m2[i]);
    }
}

TEST_CASE("non-finite values are rejected") {
    CHECK_THROWS_AS(LatticeField(1, 2, {1.0, std::nan("")}), std::invalid_argument);
    CHECK_THROWS_AS(LatticeField(1, 2, {1.0, topohazard::kInf}), std::invalid_argument);
}

TEST_CASE("ties are broken deterministically and order is preserved") {
    LatticeField a(2, 2, {1.0, 1.0, 0.5, 2.0});
    LatticeField b(2, 2, {1.0, 1.0, 0.5, 2.0});
    CHECK(a.ties_broken());
    CHECK(a.values() == b.values());
    std::set<double> distinct(a.values().begin(), a.values().end());
    CHECK(distinct.size() == 4);
    // Earlier row-major index keeps the smaller perturbed value.
    CHECK(a.value(0, 0) < a.value(0, 1));
    CHECK(a.value(1, 0) < a.value(0, 0));
    CHECK(a.value(0, 1) < a.value(1, 1));

    LatticeField untied(1, 3, {0.5, -1.0, 0.2});
    CHECK(!untied.ties_broken());
}

TEST_CASE("constant field still separates") {
    LatticeField f(2, 3, {1.0, 1.0, 1.0, 1.0, 1.0, 1.0});
    CHECK(f.ties_broken());
    std::set<double> distinct(f.values().begin(), f.values().end());
    CHECK(distinct.size() == 6);
}

TEST_CASE("csv round trip") {
    auto f = test_util::random_field(4, 6, 9);
    f.to_csv("lattice_roundtrip.csv");
    auto g = LatticeField::from_csv("lattice_roundtrip.csv");
    CHECK(f.values() == g.values());
    CHECK(g.nrows() == 4);
    CHECK(g.ncols() == 6);
}

#include <fstream>

TEST_CASE("raw ingestion with json sidecar") {
    auto f = test_util::random_field(3, 5, 10);
    {
        std::ofstream raw("lattice_raw.bin", std::ios::binary);
        raw.write(reinterpret_cast<const char*>(f.values().data()),
                  static_cast<std::streamsize>(f.values().size() * sizeof(double)));
        std::ofstream side("lattice_raw.json");
        side << "{\"nrows\": 3, \"ncols\": 5}\n";
    }
    auto g = LatticeField::from_raw("lattice_raw.bin", "lattice_raw.json");
    CHECK(f.values() == g.values());
}
