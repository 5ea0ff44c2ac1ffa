#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <set>

#include "tb/errors.hpp"
#include "tb/grid.hpp"

using namespace tb;

namespace {

GridParams p1(int L, int r) { return GridParams::make(1, L, 0, 1.0, r); }

}  // namespace

TEST_CASE("epsilon follows eta and dimension") {
    CHECK(GridParams::make(1, 8, 0, 1.0, 4).epsilon == doctest::Approx(0.25));
    CHECK(GridParams::make(2, 8, 0, 1.0, 4).epsilon == doctest::Approx(1.0 / 6.0));
    CHECK_FALSE(GridParams::make(1, 8, 0, 1.0, 4).warnings().empty());
    CHECK(GridParams::make(1, 20, 0, 1.0, 12).warnings().empty());
}

TEST_CASE("invalid parameters are configuration errors") {
    CHECK_THROWS_AS(GridParams::make(4, 8, 0, 1.0, 4).validate(), ConfigError);
    CHECK_THROWS_AS(GridParams::make(1, 4, 0, 1.0, 4).validate(), ConfigError);
    CHECK_THROWS_AS(new_random_grid(p1(8, 4), 3, 0), ConfigError);
}

TEST_CASE("same seed gives identical shifts") {
    const auto a = new_random_grid(p1(10, 4), 1, 0);
    const auto b = new_random_grid(p1(10, 4), 1, 0);
    CHECK(a.omega() == b.omega());
    const auto c = new_random_grid(p1(10, 4), 2, 0);
    CHECK(a.omega() != c.omega());
}

TEST_CASE("zero shifts give the standard dyadic grid") {
    const auto g = zero_shift_grid(GridParams::make(2, 5, 0, 1.0, 2), 1);
    for (int k = 0; k <= 5; ++k) {
        CHECK(g.level_end(k) - g.level_begin(k) == (1 << (2 * k)));
        for (int id = g.level_begin(k); id < g.level_end(k); ++id) {
            const auto& c = g.cube(id);
            CHECK_FALSE(c.clipped);
            for (int d = 0; d < 2; ++d) CHECK(c.lo[d] == c.index[d] * g.side_cells(k));
        }
    }
}

TEST_CASE("shift bits are uniform over many seeds") {
    const int trials = 10000;
    const auto prm = p1(10, 4);
    std::vector<int> ones(11, 0);
    for (int s = 0; s < trials; ++s) {
        const auto g = new_random_grid(prm, 1, static_cast<std::uint64_t>(s));
        for (int j = 1; j <= 10; ++j) ones[j] += static_cast<int>(g.omega()[j][0]);
    }
    double chi2 = 0;
    for (int j = 1; j <= 10; ++j) {
        const double e = trials / 2.0;
        chi2 += 2 * (ones[j] - e) * (ones[j] - e) / e;
        CHECK(std::abs(ones[j] - e) <= 3 * std::sqrt(trials * 0.25));
    }
    // 10 degrees of freedom, 0.999 quantile
    CHECK(chi2 < 29.59);
}

TEST_CASE("levels tile the domain and children partition parents") {
    for (int n = 1; n <= 3; ++n) {
        const auto g = new_random_grid(GridParams::make(n, n == 3 ? 4 : 6, 0, 1.0, 2), 2, 7);
        for (int k = g.top(); k <= g.L(); ++k) {
            std::vector<int> hits(static_cast<std::size_t>(g.total_cells()), 0);
            for (int id = g.level_begin(k); id < g.level_end(k); ++id)
                g.for_each_cell(id, [&](std::int64_t i, std::int64_t) { ++hits[i]; });
            for (int h : hits) REQUIRE(h == 1);
        }
        for (int id = 0; id < g.level_begin(g.L()); ++id) {
            const auto& c = g.cube(id);
            std::int64_t cells = 0;
            for (int i = 0; i < c.nkids; ++i) {
                CHECK(g.cube(c.kids[i]).parent == id);
                CHECK(g.contains(id, c.kids[i]));
                cells += g.cube(c.kids[i]).cells;
            }
            CHECK(cells == c.cells);
            if (!c.clipped) CHECK(c.nkids == (1 << n));
            CHECK(g.cube(c.kids[0]).hi[0] - g.cube(c.kids[0]).lo[0] == (c.hi[0] - c.lo[0]) / 2);
        }
    }
}

TEST_CASE("distance to boundary examples") {
    const auto g1 = zero_shift_grid(GridParams::make(1, 2, 0, 1.0, 1), 1);
    const int top = g1.find(0, {0, 0, 0});
    const int q = g1.find(2, {1, 0, 0});
    CHECK(dist_to_boundary(g1, q, g1, top) == 1);  // 1/4 in cells of side 1/4
    CHECK(dist_to_boundary(g1, top, g1, top) == 0);
    const auto g2 = zero_shift_grid(GridParams::make(2, 3, 0, 1.0, 1), 1);
    CHECK(dist_to_boundary(g2, g2.find(2, {0, 0, 0}), g2, g2.find(0, {0, 0, 0})) == 0);
    const auto g3 = zero_shift_grid(GridParams::make(2, 2, 0, 1.0, 1), 1);
    CHECK_THROWS_AS(dist_to_boundary(g1, q, g3, 0), PreconditionError);
}

TEST_CASE("goodness is vacuous when r leaves no admissible level") {
    const auto prm = p1(6, 5);
    const auto g1 = new_random_grid(prm, 1, 1);
    const auto g2 = new_random_grid(prm, 2, 1);
    for (int id = 0; id < g1.level_begin(4); ++id) CHECK_FALSE(classify_goodness(g1, id, g2, prm).bad);
}

TEST_CASE("a cube sharing a face with a large cube is bad") {
    const auto prm = p1(8, 3);
    const auto g = zero_shift_grid(prm, 1);
    const int q = g.find(5, {0, 0, 0});
    const auto v = classify_goodness(g, q, g, prm);
    CHECK(v.bad);
    REQUIRE(v.witness.has_value());
    CHECK(g.cube(*v.witness).level <= 5 - prm.r);
    CHECK(v.cap_level == 0);
}

TEST_CASE("fast goodness equals exhaustive scan") {
    struct Case {
        int n, L, r;
    };
    for (const Case cs : {Case{1, 12, 4}, Case{1, 10, 3}, Case{2, 6, 2}, Case{2, 6, 3}}) {
        const auto prm = GridParams::make(cs.n, cs.L, 0, 1.0, cs.r);
        for (std::uint64_t s = 0; s < 5; ++s) {
            const auto g1 = new_random_grid(prm, 1, 100 + s);
            const auto g2 = new_random_grid(prm, 2, 200 + s);
            int mismatches = 0;
            for (int q = 0; q < g1.size(); ++q)
                mismatches += classify_goodness(g1, q, g2, prm).bad != classify_goodness_bruteforce(g1, q, g2, prm).bad;
            for (int q = 0; q < g2.size(); ++q)
                mismatches += classify_goodness(g2, q, g1, prm).bad != classify_goodness_bruteforce(g2, q, g1, prm).bad;
            CHECK(mismatches == 0);
        }
    }
}

TEST_CASE("verdicts depend only on the other grid") {
    const auto prm = p1(9, 3);
    const auto other = new_random_grid(prm, 2, 5);
    const auto ga = new_random_grid(prm, 1, 11);
    const auto gb = new_random_grid(prm, 1, 12);
    std::map<std::pair<int, std::int64_t>, bool> seen;
    for (int q = 0; q < ga.size(); ++q)
        seen[{ga.cube(q).level, ga.cube(q).lo[0]}] = classify_goodness(ga, q, other, prm).bad;
    int compared = 0;
    for (int q = 0; q < gb.size(); ++q) {
        auto it = seen.find({gb.cube(q).level, gb.cube(q).lo[0]});
        if (it == seen.end()) continue;
        ++compared;
        CHECK(it->second == classify_goodness(gb, q, other, prm).bad);
    }
    CHECK(compared > 100);
}

TEST_CASE("bad-probability estimator") {
    CHECK_THROWS_AS(estimate_pi_bad(8, p1(10, 4), 50, 0), PreconditionError);
    const auto none = estimate_pi_bad(4, p1(10, 5), 500, 0);
    CHECK(none.estimate == 0.0);
    const auto e = estimate_pi_bad(10, p1(10, 4), 2000, 3);
    CHECK(e.estimate > 0.0);
    CHECK(e.estimate <= 1.0);
    const auto again = estimate_pi_bad(10, p1(10, 4), 2000, 3);
    CHECK(again.bad == e.bad);
}

TEST_CASE("estimator agrees with direct classification on trial grids") {
    const auto prm = p1(10, 6);
    const int level = 10;
    const auto gj = zero_shift_grid(prm, 1);
    const int q = gj.at_cell(level, {256, 0, 0});
    int bad = 0;
    const int trials = 400;
    for (int t = 0; t < trials; ++t) bad += classify_goodness(gj, q, trial_grid(prm, 2, 9, t), prm).bad;
    CHECK(estimate_pi_bad(level, prm, trials, 9).bad == bad);
}
