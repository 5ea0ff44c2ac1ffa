#include "tb/twisted.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "tb/errors.hpp"
#include "tb/parallel.hpp"
#include "tb/rng.hpp"

namespace tb {

namespace {

constexpr double kDenominatorFloor = 1e-14;

// child of q containing the finest cell with coordinates x
int child_containing(const DyadicGrid& g, const CubeRec& c, const IVec& x) {
    for (int i = 0; i < c.nkids; ++i) {
        const CubeRec& k = g.cube(c.kids[i]);
        bool in = true;
        for (int d = 0; d < g.n() && in; ++d) in = x[d] >= k.clo[d] && x[d] < k.chi[d];
        if (in) return c.kids[i];
    }
    return -1;
}

DyadicFunction abs_pow(const DyadicFunction& f, double p) {
    DyadicFunction out = f;
    for (auto& x : out.values()) x = std::pow(std::abs(x), p);
    return out;
}

void require_parent(const TwistedContext& ctx, int q) {
    if (q < 0 || q >= ctx.grid().size()) throw PreconditionError("twisted difference: cube id out of range");
    if (ctx.parent(q) < 0)
        throw PreconditionError("twisted difference: " + ctx.grid().name(q) + " has no stopping parent");
    if (ctx.grid().cube(q).nkids == 0)
        throw PreconditionError("twisted difference: " + ctx.grid().name(q) + " is a finest cell");
}

struct Worst {
    double value = 0;
    int cube = -1;
};

Worst closeness_worst(const TwistedContext& cb, const TwistedContext& cbeta) {
    const DyadicGrid& g = cb.grid();
    const double p = cb.p();
    Worst w;
    auto consider = [&](double v, int q) {
        if (v > w.value || w.cube < 0) w = {v, q};
    };
    if (cb.root >= 0) {
        const auto diff = abs_pow(cb.function(cb.root) - cbeta.function(cb.root), p);
        const auto sums = cube_sums(diff, g);
        for (int q : cb.family) consider(std::pow(sums[q] / g.cube(q).cells, 1.0 / p), q);
    }
    for (int s : cb.carriers()) {
        if (s == cb.root) continue;
        const auto diff = abs_pow(cb.function(s) - cbeta.function(s), p);
        consider(std::pow(sum_over(diff, g, s) / g.cube(s).cells, 1.0 / p), s);
    }
    return w;
}

}  // namespace

TwistedContext::TwistedContext(const DyadicGrid& g, double p)
    : grid_(&g), p_(p), parent_(static_cast<std::size_t>(g.size()), -1),
      slot_(static_cast<std::size_t>(g.size()), -1) {}

void TwistedContext::set_function(int s, DyadicFunction f) {
    require_compatible(f, *grid_);
    auto a = cube_averages(f, *grid_);
    if (slot_[s] >= 0) {
        funcs_[slot_[s]] = std::move(f);
        avgs_[slot_[s]] = std::move(a);
        return;
    }
    slot_[s] = static_cast<int>(funcs_.size());
    funcs_.push_back(std::move(f));
    avgs_.push_back(std::move(a));
}

const DyadicFunction& TwistedContext::function(int s) const {
    if (slot_[s] < 0) throw PreconditionError("twisted context: " + grid_->name(s) + " carries no function");
    return funcs_[slot_[s]];
}

double TwistedContext::average(int s, int q) const {
    if (slot_[s] < 0) throw PreconditionError("twisted context: " + grid_->name(s) + " carries no function");
    return avgs_[slot_[s]][q];
}

std::vector<int> TwistedContext::carriers() const {
    std::vector<int> out;
    for (int q = 0; q < grid_->size(); ++q)
        if (slot_[q] >= 0) out.push_back(q);
    return out;
}

double TwistedContext::ratio(const std::vector<double>& favg, int q) const {
    const int s = parent_[q];
    if (s < 0) throw PreconditionError("twisted ratio: " + grid_->name(q) + " has no stopping parent");
    const double den = average(s, q);
    if (!(std::abs(den) > kDenominatorFloor)) {
        std::ostringstream os;
        os << grid_->name(q) << " has <b>_Q = " << den << " for stopping parent " << grid_->name(s);
        throw InvariantError("twisted ratio denominator", os.str());
    }
    return favg[q] / den;
}

bool TwistedContext::has_stopping_child(int q) const {
    const CubeRec& c = grid_->cube(q);
    for (int i = 0; i < c.nkids; ++i)
        if (parent_[c.kids[i]] != parent_[q]) return true;
    return false;
}

Patch twisted_diff(const TwistedContext& ctx, const std::vector<double>& favg, int q) {
    require_parent(ctx, q);
    const DyadicGrid& g = ctx.grid();
    const CubeRec& c = g.cube(q);
    const int s = ctx.parent(q);
    const double rq = ctx.ratio(favg, q);
    const DyadicFunction& bq = ctx.function(s);
    double rk[8];
    const DyadicFunction* bk[8];
    for (int i = 0; i < c.nkids; ++i) {
        const int k = c.kids[i];
        if (ctx.parent(k) < 0)
            throw PreconditionError("twisted difference: child " + g.name(k) + " has no stopping parent");
        rk[i] = ctx.ratio(favg, k);
        bk[i] = &ctx.function(ctx.parent(k));
    }
    Patch out{q, std::vector<double>(static_cast<std::size_t>(c.cells))};
    g.for_each_cell(q, [&](std::int64_t cell, std::int64_t l) {
        const int k = child_containing(g, c, g.unlinear(cell));
        int i = 0;
        while (c.kids[i] != k) ++i;
        out.v[l] = rk[i] * (*bk[i])[cell] - rq * bq[cell];
    });
    return out;
}

namespace {

Patch same_parent_diff(const TwistedContext& ctx, const std::vector<double>& favg, int q, bool subtract_everywhere) {
    require_parent(ctx, q);
    const DyadicGrid& g = ctx.grid();
    const CubeRec& c = g.cube(q);
    const int s = ctx.parent(q);
    const double rq = ctx.ratio(favg, q);
    double val[8];
    for (int i = 0; i < c.nkids; ++i) {
        const int k = c.kids[i];
        if (ctx.parent(k) == s)
            val[i] = ctx.ratio(favg, k) - rq;
        else
            val[i] = subtract_everywhere ? -rq : 0.0;
    }
    Patch out{q, std::vector<double>(static_cast<std::size_t>(c.cells))};
    g.for_each_cell(q, [&](std::int64_t cell, std::int64_t l) {
        const int k = child_containing(g, c, g.unlinear(cell));
        int i = 0;
        while (c.kids[i] != k) ++i;
        out.v[l] = val[i];
    });
    return out;
}

}  // namespace

Patch half_twisted_diff(const TwistedContext& ctx, const std::vector<double>& favg, int q) {
    return same_parent_diff(ctx, favg, q, true);
}

Patch plain_twisted_diff(const TwistedContext& ctx, const std::vector<double>& favg, int q) {
    return same_parent_diff(ctx, favg, q, false);
}

Patch box_majorant(const TwistedContext& ctx, const std::vector<double>& favg, int q) {
    Patch out = half_twisted_diff(ctx, favg, q);
    const double chi = ctx.has_stopping_child(q) ? 1.0 : 0.0;
    for (auto& x : out.v) x = std::abs(x) + chi;
    return out;
}

TwistedContext make_admissible(const DyadicGrid& g, int s0, DyadicFunction b, std::vector<Terminal> terminals,
                               double p) {
    TwistedContext ctx(g, p);
    ctx.root = s0;
    std::vector<std::uint8_t> is_term(static_cast<std::size_t>(g.size()), 0);
    for (auto& t : terminals) {
        if (t.cube == s0 || !g.contains(s0, t.cube))
            throw PreconditionError("admissible collection: terminal " + g.name(t.cube) + " is not a strict subcube");
        if (is_term[t.cube]) throw PreconditionError("admissible collection: duplicate terminal " + g.name(t.cube));
        is_term[t.cube] = 1;
    }
    for (auto& t : terminals)
        for (int a = g.cube(t.cube).parent; a >= 0 && a != s0; a = g.cube(a).parent)
            if (is_term[a]) throw PreconditionError("admissible collection: terminals must be disjoint");
    ctx.set_function(s0, std::move(b));
    for (auto& t : terminals) {
        ctx.set_parent(t.cube, t.cube);
        ctx.set_function(t.cube, std::move(t.b));
    }
    std::vector<int> stack{s0};
    while (!stack.empty()) {
        const int q = stack.back();
        stack.pop_back();
        if (is_term[q]) continue;
        ctx.set_parent(q, s0);
        const CubeRec& c = g.cube(q);
        if (c.level < g.L()) ctx.family.push_back(q);
        for (int i = 0; i < c.nkids; ++i) stack.push_back(c.kids[i]);
    }
    std::sort(ctx.family.begin(), ctx.family.end());
    return ctx;
}

Admissibility check_admissible(const TwistedContext& ctx) {
    Admissibility a;
    if (ctx.root < 0 || ctx.family.empty()) return a;
    const DyadicGrid& g = ctx.grid();
    const auto pw = cube_averages(abs_pow(ctx.function(ctx.root), ctx.p()), g);
    a.min_mean = std::numeric_limits<double>::infinity();
    for (int q : ctx.family) {
        a.min_mean = std::min(a.min_mean, std::abs(ctx.average(ctx.root, q)));
        a.max_power_avg = std::max(a.max_power_avg, pw[q]);
    }
    a.ok = a.min_mean >= 0.25;
    return a;
}

std::vector<double> sign_pattern(int cubes, PatternKind kind, std::uint64_t seed) {
    std::vector<double> eps(static_cast<std::size_t>(cubes), 1.0);
    if (kind == PatternKind::Rademacher) {
        const Stream s(derive_key(seed, {0x7369676e}));
        for (int i = 0; i < cubes; ++i) eps[i] = s.bit(static_cast<std::uint64_t>(i)) ? 1.0 : -1.0;
    } else if (kind == PatternKind::Alternating) {
        for (int i = 0; i < cubes; ++i) eps[i] = (i % 2) ? -1.0 : 1.0;
    }
    return eps;
}

TransformReport universal_transform_test(const TwistedContext& ctx, const DyadicFunction& f, double q, int trials,
                                         std::uint64_t seed) {
    const DyadicGrid& g = ctx.grid();
    require_compatible(f, g);
    TransformReport rep;
    rep.patterns = trials + 2;
    const DyadicFunction fr = ctx.root >= 0 ? [&] {
        DyadicFunction t = DyadicFunction::like(g);
        add_patch(t, g, restrict_to(f, g, ctx.root));
        return t;
    }()
                                            : f;
    rep.input_norm = lq_norm(fr, q);
    if (rep.input_norm == 0) return rep;
    const auto favg = cube_averages(fr, g);
    const bool full = std::abs(q - ctx.p()) < 1e-12;
    const std::size_t m = ctx.family.size();
    std::vector<Patch> dt(m), dp(m), df(full ? m : 0);
    parallel_for(static_cast<std::int64_t>(m), [&](std::int64_t i) {
        dt[i] = half_twisted_diff(ctx, favg, ctx.family[i]);
        dp[i] = plain_twisted_diff(ctx, favg, ctx.family[i]);
        if (full) df[i] = twisted_diff(ctx, favg, ctx.family[i]);
    });
    std::vector<double> rt(rep.patterns), rp(rep.patterns), rf(rep.patterns);
    parallel_for(rep.patterns, [&](std::int64_t t) {
        const PatternKind kind = t < trials ? PatternKind::Rademacher
                                            : (t == trials ? PatternKind::AllOnes : PatternKind::Alternating);
        const auto eps = sign_pattern(g.size(), kind, derive_key(seed, {static_cast<std::uint64_t>(t)}));
        DyadicFunction st = DyadicFunction::like(g), sp = st, sf = st;
        for (std::size_t i = 0; i < m; ++i) {
            const double e = eps[ctx.family[i]];
            add_patch(st, g, dt[i], e);
            add_patch(sp, g, dp[i], e);
            if (full) add_patch(sf, g, df[i], e);
        }
        rt[t] = lq_norm(st, q) / rep.input_norm;
        rp[t] = lq_norm(sp, q) / rep.input_norm;
        rf[t] = full ? lq_norm(sf, q) / rep.input_norm : 0.0;
    });
    rep.tilde = *std::max_element(rt.begin(), rt.end());
    rep.plain = *std::max_element(rp.begin(), rp.end());
    rep.full = *std::max_element(rf.begin(), rf.end());
    return rep;
}

double transform_norm(const TwistedContext& ctx, const DyadicFunction& f, const std::vector<int>& cubes,
                      const std::vector<double>& coeffs, double p) {
    const DyadicGrid& g = ctx.grid();
    const auto favg = cube_averages(f, g);
    DyadicFunction sum = DyadicFunction::like(g);
    for (int q : cubes) {
        if (std::abs(coeffs[q]) > 1.0 + 1e-12) throw PreconditionError("transform coefficients must satisfy |eps| <= 1");
        if (coeffs[q] == 0) continue;
        add_patch(sum, g, twisted_diff(ctx, favg, q), coeffs[q]);
    }
    return lq_norm(sum, p);
}

double measured_closeness(const TwistedContext& ctx_b, const TwistedContext& ctx_beta) {
    return closeness_worst(ctx_b, ctx_beta).value;
}

PerturbationReport perturbation_test(const TwistedContext& ctx_b, const TwistedContext& ctx_beta,
                                     const DyadicFunction& f, double upsilon, double lambda_cap) {
    const DyadicGrid& g = ctx_b.grid();
    if (ctx_b.root < 0 || ctx_b.root != ctx_beta.root || ctx_b.family != ctx_beta.family ||
        ctx_b.parents() != ctx_beta.parents())
        throw PreconditionError("perturbation test: contexts must share root, family and parents");
    if (!(upsilon > 0) || !(upsilon < 0.125)) throw PreconditionError("perturbation test: upsilon must lie in (0, 1/8)");
    require_compatible(f, g);
    const double p = ctx_b.p();
    const int s0 = ctx_b.root;

    const Worst close = closeness_worst(ctx_b, ctx_beta);
    if (close.value > upsilon * (1 + 1e-9)) {
        std::ostringstream os;
        os << "closeness fails on " << g.name(close.cube) << ": " << close.value << " > upsilon = " << upsilon;
        throw PreconditionError(os.str());
    }
    DyadicFunction fr = DyadicFunction::like(g);
    add_patch(fr, g, restrict_to(f, g, s0));
    const auto favg = cube_averages(fr, g);
    auto check_avg = [&](int q) {
        if (std::abs(favg[q]) > lambda_cap * (1 + 1e-12)) {
            std::ostringstream os;
            os << "average bound fails on " << g.name(q) << ": |<f>| = " << std::abs(favg[q]) << " > " << lambda_cap;
            throw PreconditionError(os.str());
        }
    };
    for (int q : ctx_b.family) check_avg(q);
    for (int s : ctx_b.carriers())
        if (s != s0) check_avg(s);

    PerturbationReport rep;
    rep.upsilon = upsilon;
    rep.lambda = lambda_cap;
    rep.closeness = close.value;
    DyadicFunction sq_full = DyadicFunction::like(g), sq_half = sq_full;
    for (int q : ctx_b.family) {
        const Patch a = twisted_diff(ctx_beta, favg, q), b = twisted_diff(ctx_b, favg, q);
        const Patch c = plain_twisted_diff(ctx_beta, favg, q), d = plain_twisted_diff(ctx_b, favg, q);
        Patch u{q, a.v}, v{q, c.v};
        for (std::size_t i = 0; i < u.v.size(); ++i) {
            u.v[i] = (a.v[i] - b.v[i]) * (a.v[i] - b.v[i]);
            v.v[i] = (c.v[i] - d.v[i]) * (c.v[i] - d.v[i]);
        }
        add_patch(sq_full, g, u);
        add_patch(sq_half, g, v);
    }
    for (auto& x : sq_full.values()) x = std::sqrt(x);
    for (auto& x : sq_half.values()) x = std::sqrt(x);
    rep.lhs_full = lq_norm(sq_full, p);
    rep.lhs_half = lq_norm(sq_half, p);
    const double vol = static_cast<double>(g.cube(s0).cells) * g.cell_volume();
    rep.rhs = upsilon * (lq_norm(fr, p) + lambda_cap * std::pow(vol, 1.0 / p));
    rep.ratio_full = rep.rhs > 0 ? rep.lhs_full / rep.rhs : 0.0;
    rep.ratio_half = rep.rhs > 0 ? rep.lhs_half / rep.rhs : 0.0;

    // control inequalities for beta_{k,X} = (<b - beta>_X / <beta>_X)^k, k <= 20
    const double tail = 2 * std::pow(4 * upsilon, 21) / (1 - 4 * upsilon);
    rep.control_slack = std::numeric_limits<double>::infinity();
    auto beta1 = [&](int x) {
        const double be = ctx_beta.average(s0, x);
        return (ctx_b.average(s0, x) - be) / be;
    };
    for (int q : ctx_b.family) {
        const CubeRec& c = g.cube(q);
        const double b1q = beta1(q);
        for (int i = 0; i < c.nkids; ++i) {
            const int k = c.kids[i];
            if (ctx_b.parent(k) != s0) continue;
            const double b1k = beta1(k);
            for (int kk = 1; kk <= 20; ++kk) {
                const double bq = std::pow(b1q, kk), bk = std::pow(b1k, kk);
                const double lhs1 = std::abs(bk) + std::abs(bq);
                const double rhs1 = 2 * std::pow(4 * upsilon, kk) + tail;
                const double lhs2 = std::abs(bk - bq);
                const double rhs2 = std::abs(b1k - b1q) * kk * std::pow(8 * upsilon, kk - 1) + tail;
                const double slack = std::min(rhs1 - lhs1 + 1e-15 * rhs1, rhs2 - lhs2 + 1e-15 * (rhs2 + lhs2));
                rep.control_slack = std::min(rep.control_slack, slack);
                ++rep.control_checks;
            }
        }
    }
    if (rep.control_checks == 0) rep.control_slack = 0;
    rep.control_ok = rep.control_slack >= 0;
    return rep;
}

}  // namespace tb
