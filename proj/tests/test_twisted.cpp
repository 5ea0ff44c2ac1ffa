#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tb/errors.hpp"
#include "tb/rng.hpp"
#include "tb/twisted.hpp"

using namespace tb;

namespace {

const GridParams kPrm = GridParams::make(1, 6, 0, 1.0, 2);

DyadicFunction random_function(const DyadicGrid& g, std::uint64_t seed, double lo = -1, double hi = 1) {
    DyadicFunction f = DyadicFunction::like(g);
    Stream s(derive_key(seed, {1}));
    for (auto& x : f.values()) x = lo + (hi - lo) * s.uniform();
    return f;
}

// 1 + a on even finest cells and 1 - a on odd ones
DyadicFunction wiggle(const DyadicGrid& g, double a) {
    DyadicFunction b = DyadicFunction::like(g);
    for (std::int64_t i = 0; i < b.size(); ++i) b[i] = 1 + (i % 2 ? -a : a);
    return b;
}

DyadicFunction coarse_wiggle(const DyadicGrid& g, double a, int block) {
    DyadicFunction b = DyadicFunction::like(g);
    for (std::int64_t i = 0; i < b.size(); ++i) b[i] = 1 + ((i / block) % 2 ? -a : a);
    return b;
}

}  // namespace

TEST_CASE("trivial context reproduces classical differences") {
    const auto g = zero_shift_grid(kPrm, 1);
    const int s0 = g.find(0, {0, 0, 0});
    const auto ctx = make_admissible(g, s0, DyadicFunction::constant(1, 6, 1.0), {}, 2.0);
    CHECK(ctx.family.size() == 63);
    const auto f = random_function(g, 3);
    const auto favg = cube_averages(f, g);
    for (int q : ctx.family) {
        const Patch d = martingale_diff_patch(favg, g, q);
        const Patch a = twisted_diff(ctx, favg, q), b = half_twisted_diff(ctx, favg, q),
                    c = plain_twisted_diff(ctx, favg, q), m = box_majorant(ctx, favg, q);
        for (std::size_t i = 0; i < d.v.size(); ++i) {
            REQUIRE(a.v[i] == doctest::Approx(d.v[i]).epsilon(1e-14).scale(1));
            REQUIRE(b.v[i] == doctest::Approx(d.v[i]).epsilon(1e-14).scale(1));
            REQUIRE(c.v[i] == doctest::Approx(d.v[i]).epsilon(1e-14).scale(1));
            REQUIRE(m.v[i] == doctest::Approx(std::abs(d.v[i])).epsilon(1e-14).scale(1));
        }
    }
    const auto adm = check_admissible(ctx);
    CHECK(adm.ok);
    CHECK(adm.min_mean == doctest::Approx(1.0));
}

TEST_CASE("constant function inside one block") {
    const auto g = zero_shift_grid(kPrm, 1);
    const int s0 = g.find(0, {0, 0, 0});
    const auto b = coarse_wiggle(g, 0.5, 4);
    const auto ctx = make_admissible(g, s0, b, {}, 2.0);
    const double c = 1.7;
    const auto f = DyadicFunction::constant(1, 6, c);
    const auto favg = cube_averages(f, g);
    const auto bavg = cube_averages(b, g);
    bool nonzero = false;
    for (int q : ctx.family) {
        const Patch d = twisted_diff(ctx, favg, q);
        const CubeRec& r = g.cube(q);
        for (int i = 0; i < r.nkids; ++i) {
            const int k = r.kids[i];
            g.for_each_cell(k, [&](std::int64_t cell, std::int64_t) {
                const double expect = c * b[cell] * (1 / bavg[k] - 1 / bavg[q]);
                const std::int64_t l = cell - r.clo[0];
                REQUIRE(d.v[static_cast<std::size_t>(l)] == doctest::Approx(expect).epsilon(1e-13).scale(1));
                nonzero = nonzero || std::abs(expect) > 1e-3;
            });
        }
    }
    CHECK(nonzero);
}

TEST_CASE("block sums telescope") {
    const auto g = zero_shift_grid(kPrm, 1);
    const int s0 = g.find(1, {1, 0, 0});
    const auto b = coarse_wiggle(g, 0.3, 2);
    const auto ctx = make_admissible(g, s0, b, {}, 2.0);
    const auto f = random_function(g, 8);
    const auto favg = cube_averages(f, g);
    const auto bavg = cube_averages(b, g);
    DyadicFunction sum = DyadicFunction::like(g);
    for (int q : ctx.family) add_patch(sum, g, twisted_diff(ctx, favg, q));
    g.for_each_cell(s0, [&](std::int64_t cell, std::int64_t) {
        const double expect = (f[cell] / b[cell] - favg[s0] / bavg[s0]) * b[cell];
        REQUIRE(sum[cell] == doctest::Approx(expect).epsilon(1e-12).scale(1));
    });
    CHECK(sum[0] == 0.0);
}

TEST_CASE("terminal children") {
    const auto g = zero_shift_grid(kPrm, 1);
    const int s0 = g.find(0, {0, 0, 0});
    const int q = g.find(3, {2, 0, 0});
    const auto& r = g.cube(q);
    const auto b = wiggle(g, 0.4);
    std::vector<Terminal> terms;
    for (int i = 0; i < r.nkids; ++i) terms.push_back({r.kids[i], coarse_wiggle(g, 0.2 * (i + 1), 2)});
    const int other = g.find(4, {12, 0, 0});
    terms.push_back({other, DyadicFunction::constant(1, 6, 1.0)});
    const auto ctx = make_admissible(g, s0, b, terms, 2.0);
    CHECK(ctx.has_stopping_child(q));
    const auto f = random_function(g, 4, 0.5, 2.0);
    const auto favg = cube_averages(f, g);
    const double rq = ctx.ratio(favg, q);

    const Patch half = half_twisted_diff(ctx, favg, q);
    for (double x : half.v) CHECK(x == doctest::Approx(-rq).epsilon(1e-14));
    const Patch plain = plain_twisted_diff(ctx, favg, q);
    for (double x : plain.v) CHECK(x == 0.0);

    const Patch zero_box = box_majorant(ctx, std::vector<double>(favg.size(), 0.0), q);
    for (double x : zero_box.v) CHECK(x == 1.0);

    // Delta = tilde D * b_S plus the terminal corrections, cellwise
    for (int p : ctx.family) {
        const Patch full = twisted_diff(ctx, favg, p), t = half_twisted_diff(ctx, favg, p);
        const CubeRec& pr = g.cube(p);
        g.for_each_cell(p, [&](std::int64_t cell, std::int64_t l) {
            double expect = t.v[l] * b[cell];
            for (int i = 0; i < pr.nkids; ++i) {
                const int k = pr.kids[i];
                if (ctx.parent(k) == ctx.parent(p) || !g.contains(k, g.at_cell(g.L(), g.unlinear(cell)))) continue;
                expect += ctx.ratio(favg, k) * ctx.function(k)[cell];
            }
            REQUIRE(full.v[l] == doctest::Approx(expect).epsilon(1e-13).scale(1));
        });
    }
    // a family cube without terminal children has box = |tilde D|
    const int plain_cube = g.find(2, {3, 0, 0});
    CHECK_FALSE(ctx.has_stopping_child(plain_cube));
    const Patch bx = box_majorant(ctx, favg, plain_cube), hd = half_twisted_diff(ctx, favg, plain_cube);
    for (std::size_t i = 0; i < bx.v.size(); ++i) CHECK(bx.v[i] == std::abs(hd.v[i]));
}

TEST_CASE("admissible collection errors") {
    const auto g = zero_shift_grid(kPrm, 1);
    const int s0 = g.find(1, {0, 0, 0});
    const auto one = DyadicFunction::constant(1, 6, 1.0);
    CHECK_THROWS_AS(make_admissible(g, s0, one, {{g.find(2, {3, 0, 0}), one}}, 2.0), PreconditionError);
    CHECK_THROWS_AS(make_admissible(g, s0, one, {{s0, one}}, 2.0), PreconditionError);
    CHECK_THROWS_AS(make_admissible(g, s0, one, {{g.find(3, {1, 0, 0}), one}, {g.find(4, {2, 0, 0}), one}}, 2.0),
                    PreconditionError);
    CHECK_THROWS_AS(make_admissible(g, s0, one, {{g.find(3, {1, 0, 0}), one}, {g.find(3, {1, 0, 0}), one}}, 2.0),
                    PreconditionError);

    DyadicFunction b = one;
    for (std::int64_t i = 0; i < 8; ++i) b[i] = i < 4 ? 1.0 : -1.0;
    const auto ctx = make_admissible(g, s0, b, {}, 2.0);
    const auto favg = cube_averages(one, g);
    const int vanishing = g.find(3, {0, 0, 0});
    try {
        (void)twisted_diff(ctx, favg, vanishing);
        FAIL("expected a vanishing denominator");
    } catch (const InvariantError& e) {
        CHECK(std::string(e.what()).find(g.name(vanishing)) != std::string::npos);
    }
    CHECK_FALSE(check_admissible(ctx).ok);
    std::vector<double> big(static_cast<std::size_t>(g.size()), 1.5);
    CHECK_THROWS_AS(transform_norm(make_admissible(g, s0, one, {}, 2.0), one, {s0}, big, 2.0), PreconditionError);
}

TEST_CASE("sign patterns") {
    const auto r = sign_pattern(100, PatternKind::Rademacher, 5);
    int plus = 0;
    for (double x : r) {
        CHECK(std::abs(x) == 1.0);
        plus += x > 0;
    }
    CHECK(plus > 25);
    CHECK(plus < 75);
    CHECK(r == sign_pattern(100, PatternKind::Rademacher, 5));
    CHECK(r != sign_pattern(100, PatternKind::Rademacher, 6));
    for (double x : sign_pattern(10, PatternKind::AllOnes, 0)) CHECK(x == 1.0);
    const auto a = sign_pattern(4, PatternKind::Alternating, 0);
    CHECK(a == std::vector<double>{1, -1, 1, -1});
}

TEST_CASE("universal transform test") {
    const auto g = zero_shift_grid(kPrm, 1);
    const int s0 = g.find(0, {0, 0, 0});
    const auto triv = make_admissible(g, s0, DyadicFunction::constant(1, 6, 1.0), {}, 2.0);
    const auto zero = universal_transform_test(triv, DyadicFunction::like(g), 2.0, 10, 1);
    CHECK(zero.tilde == 0.0);
    CHECK(zero.plain == 0.0);
    CHECK(zero.full == 0.0);

    const auto f = random_function(g, 2);
    const auto rep = universal_transform_test(triv, f, 2.0, 20, 1);
    CHECK(rep.patterns == 22);
    CHECK(rep.tilde <= 1 + 1e-12);
    CHECK(rep.plain <= 1 + 1e-12);
    CHECK(rep.full <= 1 + 1e-12);
    CHECK(rep.tilde > 0.5);

    const auto osc = make_admissible(g, s0, coarse_wiggle(g, 0.5, 4), {}, 3.0);
    const auto r3 = universal_transform_test(osc, f, 3.0, 20, 1);
    CHECK(std::isfinite(r3.tilde));
    CHECK(r3.full > 0);
    const auto r15 = universal_transform_test(osc, f, 1.5, 20, 1);
    CHECK(r15.full == 0.0);
    CHECK(r15.tilde > 0);
}

TEST_CASE("perturbation inequality harness") {
    const auto g = zero_shift_grid(kPrm, 1);
    const int s0 = g.find(0, {0, 0, 0});
    const auto b = coarse_wiggle(g, 0.3, 8);
    const auto f = random_function(g, 6);
    const auto cb = make_admissible(g, s0, b, {}, 2.0);
    const auto same = perturbation_test(cb, make_admissible(g, s0, b, {}, 2.0), f, 0.05, 1.0);
    CHECK(same.lhs_full == 0.0);
    CHECK(same.lhs_half == 0.0);
    CHECK(same.control_ok);

    const auto w = wiggle(g, 1.0);  // +-1 pattern, mean zero on every cube above the finest level
    auto perturbed = [&](double t) {
        DyadicFunction beta = b;
        for (std::int64_t i = 0; i < beta.size(); ++i) beta[i] -= t * (w[i] - 1);
        return make_admissible(g, s0, beta, {}, 2.0);
    };
    const auto r1 = perturbation_test(cb, perturbed(0.1), f, 0.1, 1.0);
    const auto r2 = perturbation_test(cb, perturbed(0.05), f, 0.05, 1.0);
    CHECK(r1.closeness == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(r1.lhs_full / r2.lhs_full == doctest::Approx(2.0).epsilon(0.2));
    CHECK(r1.control_ok);
    CHECK(r1.control_checks > 0);
    CHECK(r1.ratio_full > 0);

    CHECK_THROWS_AS(perturbation_test(cb, perturbed(0.1), f, 0.05, 1.0), PreconditionError);
    CHECK_THROWS_AS(perturbation_test(cb, perturbed(0.1), f, 0.2, 1.0), PreconditionError);
    CHECK_THROWS_AS(perturbation_test(cb, perturbed(0.1), f, 0.1, 1e-3), PreconditionError);
    const auto other = make_admissible(g, g.find(1, {0, 0, 0}), b, {}, 2.0);
    CHECK_THROWS_AS(perturbation_test(cb, other, f, 0.1, 1.0), PreconditionError);
    try {
        (void)perturbation_test(cb, perturbed(0.1), f, 0.05, 1.0);
    } catch (const PreconditionError& e) {
        CHECK(std::string(e.what()).find("closeness fails on g1_") != std::string::npos);
    }
}
