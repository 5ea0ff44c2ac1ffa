#include "tb/corona.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "tb/errors.hpp"
#include "tb/parallel.hpp"

namespace tb {

namespace {

DyadicFunction abs_pow(const DyadicFunction& f, double p) {
    DyadicFunction out = f;
    for (auto& x : out.values()) x = std::pow(std::abs(x), p);
    return out;
}

// min over the clipped box of every cube, bottom-up
std::vector<double> cube_mins(const DyadicFunction& f, const DyadicGrid& g) {
    std::vector<double> m(static_cast<std::size_t>(g.size()));
    for (int id = g.size() - 1; id >= 0; --id) {
        const CubeRec& c = g.cube(id);
        if (c.level == g.L()) {
            g.for_each_cell(id, [&](std::int64_t cell, std::int64_t) { m[id] = f[cell]; });
            continue;
        }
        double v = std::numeric_limits<double>::infinity();
        for (int i = 0; i < c.nkids; ++i) v = std::min(v, m[c.kids[i]]);
        m[id] = v;
    }
    return m;
}

std::int64_t local_index(const CubeRec& c, const IVec& x, int n) {
    std::int64_t idx = 0;
    for (int d = 0; d < n; ++d) idx = idx * (c.chi[d] - c.clo[d]) + (x[d] - c.clo[d]);
    return idx;
}

double volume(const DyadicGrid& g, int q) { return static_cast<double>(g.cube(q).cells) * g.cell_volume(); }

template <class F>
void for_each_descendant(const DyadicGrid& g, int q, F&& visit) {
    std::vector<int> stack;
    const CubeRec& c = g.cube(q);
    for (int i = 0; i < c.nkids; ++i) stack.push_back(c.kids[i]);
    while (!stack.empty()) {
        const int x = stack.back();
        stack.pop_back();
        if (!visit(x)) continue;
        const CubeRec& k = g.cube(x);
        for (int i = 0; i < k.nkids; ++i) stack.push_back(k.kids[i]);
    }
}

std::string reason_text(unsigned r) {
    std::string s;
    auto add = [&](unsigned bit, const char* name) {
        if (r & bit) s += (s.empty() ? "" : "+") + std::string(name);
    };
    add(kStopRoot, "root");
    add(kStopMean, "mean");
    add(kStopMaximal, "maximal");
    add(kStopOperator, "operator");
    add(kStopInfimum, "infimum");
    return s;
}

}  // namespace

void CoronaParams::validate(int n) const {
    if (!(p1 > 1) || !(p2 > 1)) throw ConfigError("p1 and p2 must exceed 1");
    if (1 / p1 + 1 / p2 > 1 + 1e-12) throw ConfigError("1/p1 + 1/p2 must not exceed 1");
    if (!(delta > 0 && delta < 1)) throw ConfigError("delta must lie in (0, 1)");
    if (!(tau > 0 && tau < 1)) throw ConfigError("tau must lie in (0, 1)");
    if (!(Lambda > 1)) throw ConfigError("Lambda must exceed 1");
    if (!(upsilon1 > 0 && upsilon1 < std::pow(4.0, -1 - n)))
        throw ConfigError("upsilon1 must lie in (0, 4^{-1-n})");
}

void q0_box(int n, int L, IVec& lo, IVec& hi) {
    lo = {};
    hi = {};
    const std::int64_t N = std::int64_t{1} << L;
    for (int d = 0; d < n; ++d) {
        lo[d] = 3 * N / 8;
        hi[d] = 5 * N / 8;
    }
}

std::vector<int> a_star_cubes(const DyadicGrid& g) {
    if (g.top() > 1) throw ConfigError("the reference cube needs top_level <= 1");
    if (g.L() < 3) throw ConfigError("the reference construction needs L >= 3");
    IVec lo, hi;
    q0_box(g.n(), g.L(), lo, hi);
    std::vector<int> out;
    for (int id = g.level_begin(2); id < g.level_end(2); ++id) {
        const CubeRec& c = g.cube(id);
        if (box_gap(c.clo, c.chi, lo, hi, g.n()) > 0) continue;
        bool overlap = true;
        for (int d = 0; d < g.n(); ++d) overlap = overlap && c.clo[d] < hi[d] && lo[d] < c.chi[d];
        if (!overlap) continue;
        if (c.clipped) throw InvariantError("reference cubes unclipped", g.name(id) + " is clipped");
        out.push_back(id);
    }
    return out;
}

WitnessPair reference_witness(const DiscretizedOperator& op) {
    if (op.L() < 3) throw ConfigError("the reference construction needs L >= 3");
    IVec lo, hi;
    q0_box(op.n(), op.L(), lo, hi);
    WitnessPair w{DyadicFunction(op.n(), op.L()), DyadicFunction(op.n(), op.L()), 0};
    const std::int64_t N = std::int64_t{1} << op.L();
    for (std::int64_t i = 0; i < w.f1.size(); ++i) {
        std::int64_t rest = i;
        bool in = true;
        for (int d = op.n() - 1; d >= 0; --d) {
            const std::int64_t x = rest % N;
            rest /= N;
            in = in && x >= lo[d] && x < hi[d];
        }
        w.f1[i] = in ? 1.0 : 0.0;
    }
    const auto t = op.apply(w.f1);
    for (std::int64_t i = 0; i < w.f1.size(); ++i) {
        if (w.f1[i] == 0) continue;
        w.f2[i] = t[i] >= 0 ? 1.0 : -1.0;
        w.pairing += std::abs(t[i]);
    }
    w.pairing *= w.f1.cell_volume();
    return w;
}

std::vector<std::uint8_t> descendants_of(const DyadicGrid& g, const std::vector<int>& roots) {
    std::vector<std::uint8_t> in(static_cast<std::size_t>(g.size()), 0);
    for (int r : roots) {
        in[r] = 1;
        for_each_descendant(g, r, [&](int x) {
            in[x] = 1;
            return true;
        });
    }
    return in;
}

std::vector<int> StoppingTree::children(int s) const {
    std::vector<int> out;
    for (int q : cubes)
        if (tree_parent[q] == s) out.push_back(q);
    return out;
}

StoppingTree build_auxiliary_tree(const AccretiveSystem& sys, const DiscretizedOperator& op,
                                  const StoppingThresholds& th, const std::vector<int>& roots) {
    const DyadicGrid& g = sys.grid();
    StoppingTree t;
    t.parent.assign(static_cast<std::size_t>(g.size()), -1);
    t.tree_parent.assign(static_cast<std::size_t>(g.size()), -1);
    t.reason.assign(static_cast<std::size_t>(g.size()), 0);
    for (int r : roots) {
        t.reason[r] = kStopRoot;
        t.parent[r] = r;
        t.cubes.push_back(r);
    }
    const double max_bound = std::pow(th.A, th.p) / th.delta;
    const double op_bound = std::pow(th.t_loc, th.p_dual) / th.delta;
    for (std::size_t i = 0; i < t.cubes.size(); ++i) {
        const int s = t.cubes[i];
        if (g.cube(s).level == g.L()) {
            if (!(t.reason[s] & kStopRoot)) t.finest.push_back(s);
            continue;
        }
        const DyadicFunction b = sys.b_function(s);
        const auto avg_b = cube_averages(b, g);
        const auto avg_m = cube_averages(abs_pow(maximal(b, g), th.p), g);
        const auto inf_m = cube_mins(maximal(abs_pow(b, th.p), g), g);
        const auto avg_t = cube_averages(abs_pow(op.apply_patch(g, sys.b(s)), th.p_dual), g);
        for_each_descendant(g, s, [&](int q) {
            unsigned bits = 0;
            if (avg_b[q] < 0.5) bits |= kStopMean;
            if (avg_m[q] > max_bound * (1 + 1e-12)) bits |= kStopMaximal;
            if (avg_t[q] > op_bound * (1 + 1e-9) && avg_t[q] > 1e-24) bits |= kStopOperator;
            if (inf_m[q] > max_bound * (1 + 1e-12)) bits |= kStopInfimum;
            if (bits) {
                t.reason[q] = bits;
                t.tree_parent[q] = s;
                t.parent[q] = q;
                t.cubes.push_back(q);
                return false;
            }
            t.parent[q] = s;
            return true;
        });
    }
    if (!t.finest.empty()) {
        std::ostringstream os;
        os << "stopping recursion reached the finest level at " << t.finest.size() << " cubes";
        t.warnings.push_back(os.str());
    }
    return t;
}

TreeChecks check_tree(const StoppingTree& tree, const AccretiveSystem& sys, double p, double tau) {
    const DyadicGrid& g = sys.grid();
    TreeChecks rep;
    const double pd = p / (p - 1);
    rep.escape_bound = std::pow(2 * sys.A(), -pd);
    std::vector<double> child_cells(static_cast<std::size_t>(g.size()), 0.0);
    for (int q : tree.cubes)
        if (tree.tree_parent[q] >= 0) child_cells[tree.tree_parent[q]] += static_cast<double>(g.cube(q).cells);
    for (int s : tree.cubes) {
        const double cells = static_cast<double>(g.cube(s).cells);
        const double ratio = child_cells[s] / cells;
        if (ratio > rep.worst_sparse || rep.sparse_cube < 0) {
            rep.worst_sparse = ratio;
            rep.sparse_cube = s;
        }
        const auto avg_b = cube_averages(sys.b_function(s), g);
        double e = 0;
        for_each_descendant(g, s, [&](int q) {
            if (avg_b[q] < 0.5) {
                e += static_cast<double>(g.cube(q).cells);
                return false;
            }
            return true;
        });
        const double escape = 1 - e / cells;
        if (escape < rep.worst_escape || rep.escape_cube < 0) {
            rep.worst_escape = escape;
            rep.escape_cube = s;
        }
    }
    rep.sparse_ok = rep.worst_sparse <= tau * (1 + 1e-12);
    rep.escape_ok = rep.worst_escape >= rep.escape_bound;
    return rep;
}

SelectedF select_f(const DyadicGrid& g, const std::vector<int>& a_star, const std::vector<std::uint8_t>& in_A,
                   const std::vector<std::uint8_t>& good, const DyadicFunction& f_tilde) {
    require_compatible(f_tilde, g);
    const auto a = cube_averages(f_tilde, g);
    SelectedF out{DyadicFunction::like(g), 0};
    for (int q : a_star) {
        Patch p{q, std::vector<double>(static_cast<std::size_t>(g.cube(q).cells), a[q])};
        add_patch(out.f, g, p);
    }
    for (int q = 0; q < g.level_begin(g.L()); ++q)
        if (in_A[q] && good[q]) add_patch(out.f, g, martingale_diff_patch(a, g, q));
    const auto d = f_tilde - out.f;
    out.diff_l2 = lq_norm(d, 2.0);
    return out;
}

Perturbed perturb_b(const StoppingTree& tree, const AccretiveSystem& sys, const std::vector<std::uint8_t>& in_A,
                    const std::vector<std::uint8_t>& good, int s) {
    const DyadicGrid& g = sys.grid();
    if (!tree.is_stopping(s)) throw PreconditionError("perturb_b: " + g.name(s) + " is not a stopping cube");
    const DyadicFunction b = sys.b_function(s);
    const auto a = cube_averages(b, g);
    Perturbed out{b, DyadicFunction::like(g)};
    auto visit = [&](int q) {
        if (tree.parent[q] != s) return false;
        if (in_A[q] && !good[q] && g.cube(q).level < g.L()) add_patch(out.beta_tilde, g, martingale_diff_patch(a, g, q));
        return true;
    };
    visit(s);
    for_each_descendant(g, s, visit);
    out.beta -= out.beta_tilde;
    return out;
}

std::vector<int> Corona::G() const {
    std::vector<int> out;
    for (int q = 0; q < grid->size(); ++q)
        if (in_G[q]) out.push_back(q);
    return out;
}

std::vector<int> Corona::S() const {
    std::vector<int> out;
    for (int q : tree.cubes)
        if (in_S[q]) out.push_back(q);
    return out;
}

double Corona::measure(const std::vector<int>& cubes) const {
    double m = 0;
    for (int q : cubes) m += volume(*grid, q);
    return m;
}

Corona build_corona(int j, const AccretiveSystem& sys, const DyadicGrid& other, const DiscretizedOperator& op,
                    const DyadicFunction& f_tilde, const CoronaParams& params) {
    const DyadicGrid& g = sys.grid();
    if (j != 1 && j != 2) throw ConfigError("corona index must be 1 or 2");
    params.validate(g.n());
    if (op.n() != g.n() || op.L() != g.L()) throw PreconditionError("operator and grid resolutions differ");
    Corona c;
    c.j = j;
    c.grid = &g;
    c.other = &other;
    c.sys = &sys;
    c.op = &op;
    c.params = params;
    c.p = params.p(j);
    c.p_dual = params.p_dual(j);
    if (std::abs(sys.p() - c.p) > 1e-12) throw ConfigError("accretive system exponent differs from p_j");

    c.a_star = a_star_cubes(g);
    c.in_A = descendants_of(g, c.a_star);
    c.good = params.all_good ? std::vector<std::uint8_t>(static_cast<std::size_t>(g.size()), 1)
                             : goodness_table(g, other, g.params());
    c.f_tilde = f_tilde;
    auto sel = select_f(g, c.a_star, c.in_A, c.good, f_tilde);
    c.f = std::move(sel.f);
    c.f_diff_l2 = sel.diff_l2;

    c.t_loc = testing_constant(op, sys, c.p_dual);
    c.tb_proxy = params.tb_proxy >= 0 ? params.tb_proxy : estimate_opnorm(op, 2, 0x7470726f78ULL).value;
    StoppingThresholds th{c.p, c.p_dual, sys.A(), params.delta, c.t_loc};
    c.tree = build_auxiliary_tree(sys, op, th, c.a_star);

    c.slot.assign(static_cast<std::size_t>(g.size()), -1);
    const std::size_t ns = c.tree.cubes.size();
    c.b_S.resize(ns);
    c.beta.resize(ns);
    c.beta_tilde.resize(ns);
    for (std::size_t i = 0; i < ns; ++i) c.slot[c.tree.cubes[i]] = static_cast<int>(i);
    parallel_for(static_cast<std::int64_t>(ns), [&](std::int64_t i) {
        const int s = c.tree.cubes[i];
        auto pb = perturb_b(c.tree, sys, c.in_A, c.good, s);
        c.b_S[i] = sys.b_function(s);
        c.beta[i] = std::move(pb.beta);
        c.beta_tilde[i] = std::move(pb.beta_tilde);
    });
    classify_types(c);
    truncate(c);
    return c;
}

void classify_types(Corona& c) {
    const DyadicGrid& g = *c.grid;
    const int size = g.size();
    const double u = c.params.upsilon1;
    const double thr_m = std::pow(u, c.p);
    const double thr_t = std::pow(u * c.tb_proxy, c.p_dual);
    std::vector<std::uint8_t> own_a(static_cast<std::size_t>(size), 0);
    const std::size_t ns = c.tree.cubes.size();
    parallel_for(static_cast<std::int64_t>(ns), [&](std::int64_t i) {
        const int s = c.tree.cubes[i];
        const auto& bt = c.beta_tilde[i];
        const auto avg_m = cube_averages(abs_pow(maximal(bt, g), c.p), g);
        const auto avg_t = cube_averages(abs_pow(c.op->apply_patch(g, restrict_to(bt, g, s)), c.p_dual), g);
        auto test = [&](int q) {
            if (c.tree.parent[q] != s) return false;
            if (c.in_A[q]) own_a[q] = avg_m[q] >= thr_m || (avg_t[q] > 0 && avg_t[q] >= thr_t);
            return true;
        };
        test(s);
        for_each_descendant(g, s, test);
    });
    const auto avg_f = cube_averages(abs_pow(c.f, 1.0), g);
    c.type.assign(static_cast<std::size_t>(size), 0);
    for (int q = 0; q < size; ++q) {
        if (!c.in_A[q]) continue;
        const CubeRec& r = g.cube(q);
        bool a = own_a[q];
        bool stop_child = false;
        for (int i = 0; i < r.nkids; ++i) {
            const int k = r.kids[i];
            if (c.tree.is_stopping(k)) {
                stop_child = true;
                a = a || own_a[k];
            }
        }
        if (a)
            c.type[q] = kTypeA;
        else if (stop_child && !c.good[q])
            c.type[q] = kTypeB;
        else if (avg_f[q] > c.params.Lambda)
            c.type[q] = kTypeC;
    }
    c.B_A.clear();
    c.B_B.clear();
    c.B_C.clear();
    c.B.clear();
    // top-down: a cube is maximal of a type when no strict ancestor in A has that type
    std::vector<unsigned> seen(static_cast<std::size_t>(size), 0);
    for (int q = 0; q < size; ++q) {
        if (!c.in_A[q]) continue;
        const int par = g.cube(q).parent;
        const unsigned above = (par >= 0 && c.in_A[par]) ? seen[par] : 0u;
        const unsigned t = c.type[q];
        if ((t & kTypeA) && !(above & kTypeA)) c.B_A.push_back(q);
        if ((t & kTypeB) && !(above & kTypeB)) c.B_B.push_back(q);
        if ((t & kTypeC) && !(above & kTypeC)) c.B_C.push_back(q);
        if (t && !above) c.B.push_back(q);
        seen[q] = above | t;
    }
}

void truncate(Corona& c) {
    const DyadicGrid& g = *c.grid;
    const int size = g.size();
    c.in_B.assign(static_cast<std::size_t>(size), 0);
    for (int q : c.B) c.in_B[q] = 1;
    c.covered.assign(static_cast<std::size_t>(size), 0);
    c.in_G.assign(static_cast<std::size_t>(size), 0);
    c.in_R.assign(static_cast<std::size_t>(size), 0);
    c.in_S.assign(static_cast<std::size_t>(size), 0);
    c.parent_S.assign(static_cast<std::size_t>(size), -1);
    for (int q = 0; q < size; ++q) {  // ids are level-ordered, parents first
        if (!c.in_A[q]) continue;
        const int par = g.cube(q).parent;
        const bool par_in = par >= 0 && c.in_A[par];
        const bool strictly_inside = par_in && c.covered[par];
        c.covered[q] = c.in_B[q] || strictly_inside;
        c.in_R[q] = !c.covered[q];
        c.in_G[q] = c.in_R[q] && c.good[q] && g.cube(q).level < g.L();
        c.in_S[q] = c.tree.is_stopping(q) && !strictly_inside;
        c.parent_S[q] = c.in_S[q] ? q : (par_in ? c.parent_S[par] : -1);
    }
    c.ctx_beta = TwistedContext(g, c.p);
    c.ctx_b = TwistedContext(g, c.p);
    c.ctx_tilde = TwistedContext(g, c.p);
    for (int q = 0; q < size; ++q) {
        if (!c.in_A[q]) continue;
        c.ctx_beta.set_parent(q, c.parent_S[q]);
        c.ctx_b.set_parent(q, c.parent_S[q]);
        c.ctx_tilde.set_parent(q, c.tree.parent[q]);
        if (c.in_G[q]) {
            c.ctx_beta.family.push_back(q);
            c.ctx_b.family.push_back(q);
        }
        if (c.in_R[q] && g.cube(q).level < g.L()) c.ctx_tilde.family.push_back(q);
    }
    for (int s : c.tree.cubes) {
        const int i = c.slot[s];
        c.ctx_tilde.set_function(s, c.beta[i]);
        if (c.in_S[s]) {
            c.ctx_beta.set_function(s, c.beta[i]);
            c.ctx_b.set_function(s, c.b_S[i]);
        }
    }
}

TypeAChecks check_type_a(const Corona& c) {
    const DyadicGrid& g = *c.grid;
    TypeAChecks rep;
    const double A = c.sys->A();
    const double den_m = std::pow(A, c.p) / c.params.delta;
    const double den_t =
        std::pow(c.t_loc, c.p_dual) / c.params.delta + std::pow(c.params.upsilon1 * c.tb_proxy, c.p_dual);
    for (int s : c.S()) {
        const auto& beta = c.beta[c.slot[s]];
        rep.mean_error = std::max(rep.mean_error, std::abs(avg(beta, g, s) - 1.0));
        rep.norm_const = std::max(rep.norm_const, avg_abs_pow(beta, g, s, c.p) / std::pow(A, c.p));
        const auto avg_b = cube_averages(beta, g);
        const auto avg_m = cube_averages(abs_pow(maximal(beta, g), c.p), g);
        const auto avg_t = cube_averages(abs_pow(c.op->apply_patch(g, restrict_to(beta, g, s)), c.p_dual), g);
        auto examine = [&](int q) {
            ++rep.checked;
            if (avg_b[q] < rep.min_avg) {
                rep.min_avg = avg_b[q];
                rep.min_avg_cube = q;
            }
            rep.c_maximal = std::max(rep.c_maximal, avg_m[q] / den_m);
            const double ct = den_t > 0 ? avg_t[q] / den_t : (avg_t[q] > 0 ? HUGE_VAL : 0.0);
            rep.c_operator = std::max(rep.c_operator, ct);
        };
        auto visit = [&](int q) {
            if (c.parent_S[q] != s) return false;
            const int par = g.cube(q).parent;
            const bool child_of_r = par >= 0 && c.in_A[par] && c.in_R[par];
            if (c.in_R[q] || child_of_r) examine(q);
            return true;
        };
        visit(s);
        for_each_descendant(g, s, visit);
    }
    rep.ok = rep.mean_error <= 1e-12 && rep.min_avg >= 0.25 && std::isfinite(rep.c_maximal) &&
             std::isfinite(rep.c_operator);
    return rep;
}

int coincide_violations(const Corona& c) {
    const DyadicGrid& g = *c.grid;
    int bad = 0;
    for (int q = 0; q < g.size(); ++q) {
        if (!c.in_R[q]) continue;
        if (c.parent_S[q] != c.tree.parent[q]) ++bad;
        const CubeRec& r = g.cube(q);
        for (int i = 0; i < r.nkids; ++i)
            if (c.parent_S[r.kids[i]] != c.tree.parent[r.kids[i]]) ++bad;
    }
    return bad;
}

ZeroDifference zero_difference_check(const Corona& c) {
    const DyadicGrid& g = *c.grid;
    const auto favg = cube_averages(c.f, g);
    ZeroDifference rep;
    for (int q = 0; q < g.level_begin(g.L()); ++q) {
        if (!c.in_A[q] || c.good[q] || !c.in_R[q]) continue;
        const CubeRec& r = g.cube(q);
        bool stop_child = false;
        for (int i = 0; i < r.nkids; ++i) stop_child = stop_child || c.tree.is_stopping(r.kids[i]);
        if (stop_child) continue;
        if (c.ctx_tilde.average(c.tree.parent[q], q) == 0) continue;
        ++rep.qualifying;
        const Patch full = twisted_diff(c.ctx_tilde, favg, q);
        const Patch half = half_twisted_diff(c.ctx_tilde, favg, q);
        double wf = 0, wh = 0;
        for (double x : full.v) wf = std::max(wf, std::abs(x));
        for (double x : half.v) wh = std::max(wh, std::abs(x));
        if (std::max(wf, wh) > std::max(rep.worst_full, rep.worst_half)) rep.worst_cube = q;
        rep.worst_full = std::max(rep.worst_full, wf);
        rep.worst_half = std::max(rep.worst_half, wh);
    }
    return rep;
}

namespace {

struct LambdaPieces {
    double all = 0;
    double good_only = 0;
};

LambdaPieces lambda_eval(const Corona& c, const std::vector<double>& favg, std::vector<Patch>& cache,
                         std::vector<std::uint8_t>& cached, int q, int q1, int s) {
    const DyadicGrid& g = *c.grid;
    LambdaPieces out;
    double lo = HUGE_VAL, hi = -HUGE_VAL, lo_g = HUGE_VAL, hi_g = -HUGE_VAL;
    std::vector<int> chain;
    for (int p = q; p >= 0 && c.in_A[p]; p = g.cube(p).parent)
        if (c.parent_S[p] == s) chain.push_back(p);
    g.for_each_cell(q1, [&](std::int64_t cell, std::int64_t) {
        const IVec x = g.unlinear(cell);
        double v = 0, vg = 0;
        for (int p : chain) {
            if (!cached[p]) {
                cache[p] = half_twisted_diff(c.ctx_beta, favg, p);
                cached[p] = 1;
            }
            const double w = cache[p].v[static_cast<std::size_t>(local_index(g.cube(p), x, g.n()))];
            v += w;
            if (c.in_G[p]) vg += w;
        }
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        lo_g = std::min(lo_g, vg);
        hi_g = std::max(hi_g, vg);
    });
    if (hi - lo > 1e-12 * (1 + std::abs(hi)) || hi_g - lo_g > 1e-12 * (1 + std::abs(hi_g))) {
        std::ostringstream os;
        os << "sum of half-twisted differences varies on " << g.name(q1) << " by " << hi - lo;
        throw InvariantError("lambda constancy", os.str());
    }
    out.all = lo;
    out.good_only = lo_g;
    return out;
}

}  // namespace

double lambda_constant(const Corona& c, int q, int q1, int s) {
    const DyadicGrid& g = *c.grid;
    if (!c.in_G[q]) throw PreconditionError("lambda_constant: " + g.name(q) + " is not in G");
    if (g.cube(q1).parent != q) throw PreconditionError("lambda_constant: " + g.name(q1) + " is not a child");
    if (!c.in_S[s] || !g.contains(s, c.parent_S[q]))
        throw PreconditionError("lambda_constant: " + g.name(s) + " does not contain the stopping parent");
    const auto favg = cube_averages(c.f, g);
    std::vector<Patch> cache(static_cast<std::size_t>(g.size()));
    std::vector<std::uint8_t> cached(static_cast<std::size_t>(g.size()), 0);
    return lambda_eval(c, favg, cache, cached, q, q1, s).good_only;
}

LambdaReport lambda_sweep(const Corona& c) {
    const DyadicGrid& g = *c.grid;
    const auto favg = cube_averages(c.f, g);
    std::vector<Patch> cache(static_cast<std::size_t>(g.size()));
    std::vector<std::uint8_t> cached(static_cast<std::size_t>(g.size()), 0);
    LambdaReport rep;
    for (int q : c.G()) {
        const CubeRec& r = g.cube(q);
        for (int i = 0; i < r.nkids; ++i) {
            for (int s = c.parent_S[q]; s >= 0;) {
                const auto v = lambda_eval(c, favg, cache, cached, q, r.kids[i], s);
                ++rep.count;
                rep.worst = std::max(rep.worst, std::abs(v.good_only));
                rep.good_only_gap = std::max(rep.good_only_gap, std::abs(v.all - v.good_only));
                const int par = g.cube(s).parent;
                s = (par >= 0 && c.in_A[par]) ? c.parent_S[par] : -1;
            }
        }
    }
    rep.worst_over_lambda = rep.worst / c.params.Lambda;
    return rep;
}

RepresentationReport representation_check(const Corona& c) {
    const DyadicGrid& g = *c.grid;
    const auto favg = cube_averages(c.f, g);
    DyadicFunction rhs = DyadicFunction::like(g);
    for (int q : c.a_star)
        if (!c.in_B[q]) add_patch(rhs, g, restrict_to(c.ctx_beta.function(q), g, q), favg[q]);
    const auto G = c.G();
    std::vector<Patch> diffs(G.size());
    parallel_for(static_cast<std::int64_t>(G.size()),
                 [&](std::int64_t i) { diffs[i] = twisted_diff(c.ctx_beta, favg, G[i]); });
    for (const auto& d : diffs) add_patch(rhs, g, d);
    RepresentationReport rep;
    rep.phi = DyadicFunction::like(g);
    for (int q : c.B) {
        Patch phi = restrict_to(c.f, g, q);
        if (std::find(c.a_star.begin(), c.a_star.end(), q) == c.a_star.end()) {
            const int s = c.parent_S[q];
            const double ratio = c.ctx_beta.ratio(favg, q);
            const Patch bs = restrict_to(c.ctx_beta.function(s), g, q);
            for (std::size_t i = 0; i < phi.v.size(); ++i) phi.v[i] -= ratio * bs.v[i];
        }
        add_patch(rep.phi, g, phi);
    }
    rhs += rep.phi;
    const auto res = rhs - c.f;
    rep.max_cell = max_abs(res);
    const double n2 = lq_norm(c.f, 2.0), np = lq_norm(c.f, c.p);
    rep.rel_l2 = n2 > 0 ? lq_norm(res, 2.0) / n2 : lq_norm(res, 2.0);
    rep.rel_lp = np > 0 ? lq_norm(res, c.p) / np : lq_norm(res, c.p);
    rep.phi_norm_p = std::pow(lq_norm(rep.phi, c.p), c.p);
    const double mB = c.measure(c.B);
    rep.phi_const = mB > 0 ? rep.phi_norm_p / (std::pow(c.params.Lambda, c.p) * mB) : 0.0;
    return rep;
}

AdmissiblePair admissible_pair(const Corona& c, int s0) {
    const DyadicGrid& g = *c.grid;
    if (s0 < 0 || !c.in_S[s0] || c.covered[s0])
        throw PreconditionError("admissible_pair: " + g.name(s0) + " must be a stopping cube outside B");
    std::vector<std::uint8_t> cand(static_cast<std::size_t>(g.size()), 0), from_b(cand);
    for_each_descendant(g, s0, [&](int q) {
        const int par = g.cube(q).parent;
        if (c.in_B[par]) {
            cand[q] = 1;
            from_b[q] = 1;
        }
        if (c.in_S[q] && c.parent_S[par] == s0) cand[q] = 1;
        return true;
    });
    std::vector<Terminal> tb, tbeta;
    for_each_descendant(g, s0, [&](int q) {
        if (!cand[q]) return true;
        const DyadicFunction bq = c.slot[q] >= 0 ? c.b_S[c.slot[q]] : c.sys->b_function(q);
        tb.push_back({q, bq});
        tbeta.push_back({q, from_b[q] ? bq : c.beta[c.slot[q]]});
        return false;
    });
    AdmissiblePair out{make_admissible(g, s0, c.b_S[c.slot[s0]], std::move(tb), c.p),
                       make_admissible(g, s0, c.beta[c.slot[s0]], std::move(tbeta), c.p)};
    return out;
}

double twisted_transform_test(const Corona& c, int q, const std::vector<double>& coeffs, bool use_b) {
    const DyadicGrid& g = *c.grid;
    std::vector<int> cubes;
    for (int p : c.G())
        if (g.contains(q, p)) cubes.push_back(p);
    const TwistedContext& ctx = use_b ? c.ctx_b : c.ctx_beta;
    return transform_norm(ctx, c.f, cubes, coeffs, c.p) / std::pow(volume(g, q), 1.0 / c.p);
}

std::string export_corona(const Corona& c, const std::string& dir) {
    const DyadicGrid& g = *c.grid;
    nlohmann::ordered_json j;
    j["grid"] = c.j;
    j["p"] = c.p;
    j["p_dual"] = c.p_dual;
    j["t_loc"] = c.t_loc;
    j["tb_proxy"] = c.tb_proxy;
    j["f_diff_l2"] = c.f_diff_l2;
    auto names = [&](const std::vector<int>& v) {
        nlohmann::ordered_json a = nlohmann::ordered_json::array();
        for (int q : v) a.push_back(g.name(q));
        return a;
    };
    j["a_star"] = names(c.a_star);
    nlohmann::ordered_json tree = nlohmann::ordered_json::array();
    for (int s : c.tree.cubes) {
        nlohmann::ordered_json e;
        e["cube"] = g.name(s);
        e["level"] = g.cube(s).level;
        e["parent"] = c.tree.tree_parent[s] >= 0 ? nlohmann::ordered_json(g.name(c.tree.tree_parent[s])) : nullptr;
        e["criteria"] = reason_text(c.tree.reason[s]);
        e["kept"] = static_cast<bool>(c.in_S[s]);
        tree.push_back(e);
    }
    j["stopping_cubes"] = tree;
    j["type_a"] = names(c.B_A);
    j["type_b"] = names(c.B_B);
    j["type_c"] = names(c.B_C);
    j["truncation"] = names(c.B);
    j["good_count"] = c.G().size();
    j["warnings"] = c.tree.warnings;
    if (!dir.empty()) {
        namespace fs = std::filesystem;
        fs::create_directories(dir);
        for (int s : c.tree.cubes)
            save_function(c.beta[c.slot[s]], (fs::path(dir) / ("beta_" + g.name(s))).string());
        std::ofstream(fs::path(dir) / ("corona" + std::to_string(c.j) + ".json")) << j.dump(2) << "\n";
    }
    return j.dump(2);
}

}  // namespace tb
