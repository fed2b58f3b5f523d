#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <queue>

#include "topohazard/filtration.hpp"
#include "topohazard/num.hpp"
#include "test_util.hpp"

using namespace topohazard;

namespace {

/// Brute-force local minima: compare each cell against all of its neighbors.
std::vector<std::pair<GridIndex, double>> brute_minima(const LatticeField& f) {
    std::vector<std::pair<GridIndex, double>> out;
    for (int r = 0; r < f.nrows(); ++r)
        for (int c = 0; c < f.ncols(); ++c) {
            bool is_min = true;
            for (const GridIndex& nb : f.neighbors({r, c}))
                if (f.value(nb) < f.value(r, c)) is_min = false;
            if (is_min) out.push_back({{r, c}, f.value(r, c)});
        }
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) { return a.second < b.second; });
    return out;
}

/// Flood-fill component count of the sublevel set at t.
std::int64_t flood_fill_b0(const LatticeField& f, double t) {
    const auto mask = f.sublevel_mask(t);
    std::vector<std::uint8_t> seen(mask.size(), 0);
    std::int64_t components = 0;
    for (int i = 0; i < f.size(); ++i) {
        if (!mask[static_cast<std::size_t>(i)] || seen[static_cast<std::size_t>(i)]) continue;
        ++components;
        std::queue<int> q;
        q.push(i);
        seen[static_cast<std::size_t>(i)] = 1;
        while (!q.empty()) {
            const int cur = q.front();
            q.pop();
            for (const GridIndex& nb : f.neighbors(f.unflat(cur))) {
                const int j = f.flat(nb.row, nb.col);
                if (mask[static_cast<std::size_t>(j)] && !seen[static_cast<std::size_t>(j)]) {
                    seen[static_cast<std::size_t>(j)] = 1;
                    q.push(j);
                }
            }
        }
    }
    return components;
}

}  // namespace

TEST_CASE("1x3 field: one local minimum") {
    LatticeField f(1, 3, {0.5, -1.0, 0.2});
    auto minima = local_minima(f);
    REQUIRE(minima.size() == 1);
    CHECK(minima[0].first == GridIndex{0, 1});
    CHECK(minima[0].second == -1.0);
}

TEST_CASE("strictly increasing raster has only the global minimum") {
    std::vector<double> v(9);
    for (int i = 0; i < 9; ++i) v[static_cast<std::size_t>(i)] = i;
    LatticeField f(3, 3, v);
    auto minima = local_minima(f);
    REQUIRE(minima.size() == 1);
    CHECK(minima[0].first == GridIndex{0, 0});
}

TEST_CASE("local minima match the brute-force scan on random fields") {
    for (std::uint64_t seed : {11u, 12u, 13u}) {
        auto f = test_util::random_field(20, 20, seed);
        auto fast = local_minima(f);
        auto brute = brute_minima(f);
        REQUIRE(fast.size() == brute.size());
        for (std::size_t i = 0; i < fast.size(); ++i) {
            CHECK(fast[i].first == brute[i].first);
            CHECK(fast[i].second == brute[i].second);
        }
    }
}

TEST_CASE("1x3 field: birth process and at-risk steps") {
    LatticeField f(1, 3, {0.5, -1.0, 0.2});
    BirthProcess bp = birth_process(f);
    REQUIRE(bp.births.size() == 1);
    CHECK(bp.births[0].level == -1.0);
    CHECK(bp.births[0].at_risk_left == 3);
    // Under strict inequalities both neighbors of the birth cell drop out.
    CHECK(bp.births[0].at_risk_strict == 1);
    CHECK(bp.at_risk_left(-1.0) == 3);
    CHECK(bp.at_risk_left(-2.0) == 3);
    // After the birth both flanking cells have a neighbor below any t > -1.
    CHECK(bp.at_risk_left(0.2) == 0);
    CHECK(bp.at_risk_left(0.0) == 0);
}

TEST_CASE("monotone field: single birth with the full lattice at risk") {
    std::vector<double> v(25);
    for (int i = 0; i < 25; ++i) v[static_cast<std::size_t>(i)] = 10.0 + i;
    LatticeField f(5, 5, v);
    BirthProcess bp = birth_process(f);
    REQUIRE(bp.births.size() == 1);
    CHECK(bp.births[0].at_risk_left == 25);
}

TEST_CASE("number of births equals number of local minima") {
    auto f = test_util::random_field(15, 15, 21);
    CHECK(birth_process(f).births.size() == local_minima(f).size());
}

TEST_CASE("superlevel process equals sublevel of the negated field") {
    auto f = test_util::random_field(9, 9, 22);
    BirthProcess sup = birth_process(f, Direction::superlevel);
    BirthProcess neg = birth_process(f.negated(), Direction::sublevel);
    REQUIRE(sup.births.size() == neg.births.size());
    for (std::size_t i = 0; i < sup.births.size(); ++i) {
        CHECK(sup.births[i].level == neg.births[i].level);
        CHECK(sup.births[i].at_risk_left == neg.births[i].at_risk_left);
    }
    CHECK(sup.direction == Direction::superlevel);
}

TEST_CASE("minima of the negated field are the maxima of the field") {
    auto f = test_util::random_field(12, 12, 23);
    auto maxima = local_minima(f.negated());
    for (const auto& [ix, level] : maxima) {
        for (const GridIndex& nb : f.neighbors(ix)) CHECK(f.value(nb) < f.value(ix));
        CHECK(level == -f.value(ix));
    }
}

TEST_CASE("at-risk counts are non-increasing in the level") {
    auto f = test_util::random_field(10, 10, 24);
    BirthProcess bp = birth_process(f);
    double max_value = *std::max_element(f.values().begin(), f.values().end());
    CHECK(bp.at_risk_left(max_value + 1e-9) == 0);
    std::int64_t prev = bp.n_cells;
    for (double t = -3.0; t <= 3.0; t += 0.1) {
        const std::int64_t y = bp.at_risk_left(t);
        CHECK(y <= prev);
        prev = y;
    }
}

TEST_CASE("two-basin field: barcode has one finite and one infinite interval") {
    // Basins at the two ends, ridge in the middle; merge at 5.0.
    LatticeField f(1, 5, {-2.0, 1.0, 5.0, 2.0, -3.0});
    Barcode bc = barcode(f);
    REQUIRE(bc.intervals.size() == 2);
    CHECK(bc.intervals[0].birth == -3.0);
    CHECK(bc.intervals[0].death == kInf);  // first born lives forever
    CHECK(bc.intervals[1].birth == -2.0);
    CHECK(bc.intervals[1].death == 5.0);
}

TEST_CASE("first-born component carries the infinite death on random fields") {
    for (std::uint64_t seed : {31u, 32u}) {
        auto f = test_util::random_field(12, 12, seed);
        Barcode bc = barcode(f);
        int infinite = 0;
        for (const auto& iv : bc.intervals) {
            CHECK(iv.birth < iv.death);
            if (iv.death == kInf) ++infinite;
        }
        CHECK(infinite == 1);
        CHECK(bc.intervals[0].death == kInf);
        CHECK(bc.intervals.size() == local_minima(f).size());
    }
}

TEST_CASE("alive intervals equal flood-fill component counts at every level") {
    for (std::uint64_t seed = 100; seed < 110; ++seed) {
        auto f = test_util::random_field(15, 15, seed);
        Barcode bc = barcode(f);
        for (double level : f.values())
            CHECK(bc.alive_at(level) == flood_fill_b0(f, level));
    }
}

TEST_CASE("births minus deaths track flood-fill across neighborhood variants") {
    auto f = test_util::random_field(10, 10, 200, Boundary::torus, Neighborhood::vertex8);
    Barcode bc = barcode(f);
    for (double level : f.values())
        CHECK(bc.alive_at(level) == flood_fill_b0(f, level));
}
