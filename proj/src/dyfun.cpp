#include "tb/dyfun.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "tb/errors.hpp"
#include "tb/parallel.hpp"
#include "tb/rng.hpp"
#include "tb/stats.hpp"

namespace tb {

DyadicFunction::DyadicFunction(int n, int L) : n_(n), L_(L) {
    if (n < 1 || n > kMaxDim || L < 0 || L * n > 30) throw ConfigError("DyadicFunction: unsupported shape");
    v_.assign(std::size_t{1} << (L * n), 0.0);
}

DyadicFunction::DyadicFunction(int n, int L, std::vector<double> values) : DyadicFunction(n, L) {
    if (values.size() != v_.size()) throw PreconditionError("DyadicFunction: value count does not match 2^(Ln)");
    v_ = std::move(values);
}

DyadicFunction DyadicFunction::constant(int n, int L, double c) {
    DyadicFunction f(n, L);
    std::fill(f.v_.begin(), f.v_.end(), c);
    return f;
}

double DyadicFunction::cell_volume() const { return std::ldexp(1.0, -L_ * n_); }

DyadicFunction& DyadicFunction::operator+=(const DyadicFunction& o) {
    if (!same_shape(o)) throw PreconditionError("DyadicFunction: shape mismatch");
    for (std::size_t i = 0; i < v_.size(); ++i) v_[i] += o.v_[i];
    return *this;
}

DyadicFunction& DyadicFunction::operator-=(const DyadicFunction& o) {
    if (!same_shape(o)) throw PreconditionError("DyadicFunction: shape mismatch");
    for (std::size_t i = 0; i < v_.size(); ++i) v_[i] -= o.v_[i];
    return *this;
}

DyadicFunction& DyadicFunction::operator*=(double c) {
    for (double& x : v_) x *= c;
    return *this;
}

void DyadicFunction::require_finite() const {
    for (std::size_t i = 0; i < v_.size(); ++i)
        if (!std::isfinite(v_[i])) throw InvariantError("finite values", "cell " + std::to_string(i));
}

void require_compatible(const DyadicFunction& f, const DyadicGrid& g) {
    if (f.n() != g.n() || f.L() != g.L()) throw PreconditionError("function and grid differ in n or L");
}

double sum_over(const DyadicFunction& f, const DyadicGrid& g, int q) {
    require_compatible(f, g);
    double s = 0;
    g.for_each_cell(q, [&](std::int64_t i, std::int64_t) { s += f[i]; });
    return s;
}

double avg(const DyadicFunction& f, const DyadicGrid& g, int q) {
    if (q < 0 || q >= g.size() || g.cube(q).cells == 0) throw PreconditionError("avg: cube does not meet the domain");
    return sum_over(f, g, q) / static_cast<double>(g.cube(q).cells);
}

double avg_abs_pow(const DyadicFunction& f, const DyadicGrid& g, int q, double p) {
    require_compatible(f, g);
    double s = 0;
    g.for_each_cell(q, [&](std::int64_t i, std::int64_t) { s += std::pow(std::abs(f[i]), p); });
    return s / static_cast<double>(g.cube(q).cells);
}

double min_over(const DyadicFunction& f, const DyadicGrid& g, int q) {
    double m = std::numeric_limits<double>::infinity();
    g.for_each_cell(q, [&](std::int64_t i, std::int64_t) { m = std::min(m, f[i]); });
    return m;
}

std::vector<double> cube_sums(const DyadicFunction& f, const DyadicGrid& g) {
    require_compatible(f, g);
    std::vector<double> s(static_cast<std::size_t>(g.size()), 0.0);
    for (int id = g.level_begin(g.L()); id < g.level_end(g.L()); ++id) s[id] = f[g.linear(g.cube(id).clo)];
    for (int k = g.L() - 1; k >= g.top(); --k)
        for (int id = g.level_begin(k); id < g.level_end(k); ++id) {
            const CubeRec& c = g.cube(id);
            double t = 0;
            for (int i = 0; i < c.nkids; ++i) t += s[c.kids[i]];
            s[id] = t;
        }
    return s;
}

std::vector<double> cube_averages(const DyadicFunction& f, const DyadicGrid& g) {
    auto s = cube_sums(f, g);
    for (int id = 0; id < g.size(); ++id) s[id] /= static_cast<double>(g.cube(id).cells);
    return s;
}

Patch restrict_to(const DyadicFunction& f, const DyadicGrid& g, int q) {
    Patch p{q, std::vector<double>(static_cast<std::size_t>(g.cube(q).cells))};
    g.for_each_cell(q, [&](std::int64_t i, std::int64_t l) { p.v[l] = f[i]; });
    return p;
}

void add_patch(DyadicFunction& f, const DyadicGrid& g, const Patch& p, double scale) {
    g.for_each_cell(p.cube, [&](std::int64_t i, std::int64_t l) { f[i] += scale * p.v[l]; });
}

DyadicFunction indicator(const DyadicGrid& g, int q) {
    DyadicFunction f = DyadicFunction::like(g);
    g.for_each_cell(q, [&](std::int64_t i, std::int64_t) { f[i] = 1.0; });
    return f;
}

Patch martingale_diff_patch(const std::vector<double>& a, const DyadicGrid& g, int q) {
    const CubeRec& c = g.cube(q);
    if (c.level >= g.L()) throw PreconditionError("martingale_diff: finest-level cube has no children");
    Patch p{q, std::vector<double>(static_cast<std::size_t>(c.cells))};
    const int child_level = c.level + 1;
    g.for_each_cell(q, [&](std::int64_t i, std::int64_t l) {
        const int kid = g.at_cell(child_level, g.unlinear(i));
        p.v[l] = a[kid] - a[q];
    });
    return p;
}

Patch martingale_diff_patch(const DyadicFunction& f, const DyadicGrid& g, int q) {
    const CubeRec& c = g.cube(q);
    if (c.level >= g.L()) throw PreconditionError("martingale_diff: finest-level cube has no children");
    std::vector<double> a(static_cast<std::size_t>(g.size()), 0.0);
    a[q] = avg(f, g, q);
    for (int i = 0; i < c.nkids; ++i) a[c.kids[i]] = avg(f, g, c.kids[i]);
    return martingale_diff_patch(a, g, q);
}

DyadicFunction martingale_diff(const DyadicFunction& f, const DyadicGrid& g, int q) {
    DyadicFunction out = DyadicFunction::like(g);
    add_patch(out, g, martingale_diff_patch(f, g, q));
    return out;
}

DyadicFunction top_part(const DyadicFunction& f, const DyadicGrid& g) {
    DyadicFunction out = DyadicFunction::like(g);
    for (int id = g.level_begin(g.top()); id < g.level_end(g.top()); ++id) {
        const double a = avg(f, g, id);
        g.for_each_cell(id, [&](std::int64_t i, std::int64_t) { out[i] = a; });
    }
    return out;
}

DyadicFunction difference_sum(const DyadicFunction& f, const DyadicGrid& g, const std::function<bool(int)>& keep) {
    const auto a = cube_averages(f, g);
    DyadicFunction out = DyadicFunction::like(g);
    for (int id = 0; id < g.level_begin(g.L()); ++id)
        if (keep(id)) add_patch(out, g, martingale_diff_patch(a, g, id));
    return out;
}

DyadicFunction martingale_transform(const DyadicFunction& f, const DyadicGrid& g, const std::vector<double>& signs) {
    const auto a = cube_averages(f, g);
    DyadicFunction out = DyadicFunction::like(g);
    for (int id = 0; id < g.level_begin(g.L()); ++id)
        if (signs[id] != 0.0) add_patch(out, g, martingale_diff_patch(a, g, id), signs[id]);
    return out;
}

DyadicFunction project_bad(const DyadicFunction& f, const DyadicGrid& gj, const DyadicGrid& gk,
                           const GridParams& params) {
    const auto good = goodness_table(gj, gk, params);
    return difference_sum(f, gj, [&](int id) { return good[id] == 0; });
}

DyadicFunction project_good(const DyadicFunction& f, const DyadicGrid& gj, const DyadicGrid& gk,
                            const GridParams& params) {
    const auto good = goodness_table(gj, gk, params);
    return difference_sum(f, gj, [&](int id) { return good[id] != 0; });
}

double lq_norm(const DyadicFunction& f, double q) {
    double s = 0;
    for (double x : f.values()) s += std::pow(std::abs(x), q);
    return std::pow(s * f.cell_volume(), 1.0 / q);
}

double inner(const DyadicFunction& f, const DyadicFunction& g) {
    if (!f.same_shape(g)) throw PreconditionError("inner: shape mismatch");
    double s = 0;
    for (std::int64_t i = 0; i < f.size(); ++i) s += f[i] * g[i];
    return s * f.cell_volume();
}

double max_abs(const DyadicFunction& f) {
    double m = 0;
    for (double x : f.values()) m = std::max(m, std::abs(x));
    return m;
}

namespace {

// Inclusive prefix sums over the cell lattice; box_sum uses inclusion-exclusion over 2^n corners.
struct PrefixSums {
    int n, L;
    std::int64_t N1;
    std::vector<double> s;  // (N+1)^n entries

    PrefixSums(const DyadicFunction& f) : n(f.n()), L(f.L()), N1((std::int64_t{1} << f.L()) + 1) {
        std::int64_t total = 1;
        for (int d = 0; d < n; ++d) total *= N1;
        s.assign(static_cast<std::size_t>(total), 0.0);
        const std::int64_t N = N1 - 1;
        for (std::int64_t i = 0; i < f.size(); ++i) {
            std::int64_t rem = i, idx = 0, mul = 1;
            for (int d = n - 1; d >= 0; --d) {
                idx += ((rem % N) + 1) * mul;
                rem /= N;
                mul *= N1;
            }
            s[idx] = f[i];
        }
        std::int64_t stride = 1;
        for (int d = n - 1; d >= 0; --d) {
            for (std::int64_t idx = 0; idx < total; ++idx)
                if ((idx / stride) % N1 != 0) s[idx] += s[idx - stride];
            stride *= N1;
        }
    }

    double box_sum(const IVec& lo, const IVec& hi) const {
        double total = 0;
        for (int mask = 0; mask < (1 << n); ++mask) {
            std::int64_t idx = 0;
            int sign = 1;
            for (int d = 0; d < n; ++d) {
                const bool low = (mask >> d) & 1;
                idx = idx * N1 + (low ? lo[d] : hi[d]);
                if (low) sign = -sign;
            }
            total += sign * s[idx];
        }
        return total;
    }
};

void dilate3(const DyadicGrid& g, const CubeRec& c, IVec& lo, IVec& hi) {
    const std::int64_t side = g.side_cells(c.level);
    for (int d = 0; d < g.n(); ++d) {
        lo[d] = std::max<std::int64_t>(c.lo[d] - side, 0);
        hi[d] = std::min<std::int64_t>(c.hi[d] + side, g.cells_per_axis());
    }
}

std::int64_t box_cells(const IVec& lo, const IVec& hi, int n) {
    std::int64_t c = 1;
    for (int d = 0; d < n; ++d) c *= hi[d] - lo[d];
    return c;
}

}  // namespace

DyadicFunction maximal(const DyadicFunction& f, const DyadicGrid& g) {
    require_compatible(f, g);
    const auto a = cube_averages(f, g);
    const PrefixSums ps(f);
    std::vector<double> dil(static_cast<std::size_t>(g.size()));
    for (int id = 0; id < g.size(); ++id) {
        IVec lo{}, hi{};
        dilate3(g, g.cube(id), lo, hi);
        dil[id] = std::abs(ps.box_sum(lo, hi) / static_cast<double>(box_cells(lo, hi, g.n())));
    }
    DyadicFunction out = DyadicFunction::like(g);
    for (int id = g.level_begin(g.L()); id < g.level_end(g.L()); ++id) {
        const std::int64_t cell = g.linear(g.cube(id).clo);
        double m = std::abs(f[cell]);
        for (int q = id; q >= 0; q = g.cube(q).parent) m = std::max({m, std::abs(a[q]), dil[q]});
        out[cell] = m;
    }
    return out;
}

DyadicFunction maximal_bruteforce(const DyadicFunction& f, const DyadicGrid& g) {
    require_compatible(f, g);
    DyadicFunction out = DyadicFunction::like(g);
    const int n = g.n();
    for (std::int64_t i = 0; i < f.size(); ++i) {
        const IVec x = g.unlinear(i);
        double m = std::abs(f[i]);
        for (int k = g.top(); k <= g.L(); ++k) {
            const int q = g.at_cell(k, x);
            const CubeRec& c = g.cube(q);
            IVec lo{}, hi{};
            dilate3(g, c, lo, hi);
            double s_own = 0, s_dil = 0;
            std::int64_t n_own = 0, n_dil = 0;
            for (std::int64_t j = 0; j < f.size(); ++j) {
                const IVec y = g.unlinear(j);
                bool in_own = true, in_dil = true;
                for (int d = 0; d < n; ++d) {
                    if (y[d] < c.lo[d] || y[d] >= c.hi[d]) in_own = false;
                    if (y[d] < lo[d] || y[d] >= hi[d]) in_dil = false;
                }
                if (in_own) s_own += f[j], ++n_own;
                if (in_dil) s_dil += f[j], ++n_dil;
            }
            m = std::max({m, std::abs(s_own / n_own), std::abs(s_dil / n_dil)});
        }
        out[i] = m;
    }
    return out;
}

double bmo_norm(const DyadicFunction& f, const DyadicGrid& g) {
    const auto a = cube_averages(f, g);
    double best = 0;
    for (int id = 0; id < g.size(); ++id) {
        double s = 0;
        g.for_each_cell(id, [&](std::int64_t i, std::int64_t) { s += std::abs(f[i] - a[id]); });
        best = std::max(best, s / static_cast<double>(g.cube(id).cells));
    }
    return best;
}

ProjectionReport test_bad_projection_decay(double q, int level, const GridParams& params, std::int64_t trials,
                                           std::uint64_t seed) {
    params.validate();
    if (!(q > 1)) throw PreconditionError("test_bad_projection_decay: q must exceed 1");
    if (trials < 2) throw PreconditionError("test_bad_projection_decay: need at least 2 trials");
    if (level < params.top_level || level >= params.L) throw PreconditionError("level must lie in [top, L)");
    const DyadicGrid gj = zero_shift_grid(params, 1);
    // phi is fixed before any shift of the other grid is drawn.
    DyadicFunction psi = DyadicFunction::like(gj);
    Stream s(derive_key(seed, {0x706869ULL}));
    for (auto& x : psi.values()) x = 2.0 * s.uniform() - 1.0;
    const auto a = cube_averages(psi, gj);
    DyadicFunction phi = DyadicFunction::like(gj);
    for (int id = gj.level_begin(level); id < gj.level_end(level); ++id) add_patch(phi, gj, martingale_diff_patch(a, gj, id));
    const auto phi_avg = cube_averages(phi, gj);

    ProjectionReport rep;
    rep.q = q;
    rep.input_norm = lq_norm(phi, q);
    const double base = std::pow(rep.input_norm, q);
    rep.samples.assign(static_cast<std::size_t>(trials), 0.0);
    parallel_for(trials, [&](std::int64_t t) {
        const DyadicGrid gk = trial_grid(params, 2, seed, static_cast<std::uint64_t>(t));
        DyadicFunction out = DyadicFunction::like(gj);
        for (int id = gj.level_begin(level); id < gj.level_end(level); ++id)
            if (classify_goodness(gj, id, gk, params).bad) add_patch(out, gj, martingale_diff_patch(phi_avg, gj, id));
        rep.samples[t] = base > 0 ? std::pow(lq_norm(out, q), q) / base : 0.0;
    });
    const Summary sm = summarize(rep.samples);
    rep.mean = sm.mean;
    rep.se = sm.se;
    rep.ci95 = 1.96 * sm.se;
    return rep;
}

void save_function(const DyadicFunction& f, const std::string& stem) {
    std::ofstream bin(stem + ".bin", std::ios::binary);
    if (!bin) throw std::runtime_error("cannot write " + stem + ".bin");
    bin.write(reinterpret_cast<const char*>(f.values().data()),
              static_cast<std::streamsize>(f.values().size() * sizeof(double)));
    nlohmann::ordered_json j;
    j["n"] = f.n();
    j["L"] = f.L();
    j["domain"] = "[0,1)^n";
    j["layout"] = "row-major binary64";
    std::ofstream(stem + ".json") << j.dump(2) << "\n";
}

DyadicFunction load_function(const std::string& stem) {
    std::ifstream js(stem + ".json");
    if (!js) throw std::runtime_error("cannot read " + stem + ".json");
    const auto j = nlohmann::json::parse(js);
    DyadicFunction f(j.at("n").get<int>(), j.at("L").get<int>());
    std::ifstream bin(stem + ".bin", std::ios::binary);
    if (!bin) throw std::runtime_error("cannot read " + stem + ".bin");
    bin.read(reinterpret_cast<char*>(f.values().data()), static_cast<std::streamsize>(f.values().size() * sizeof(double)));
    if (bin.gcount() != static_cast<std::streamsize>(f.values().size() * sizeof(double)))
        throw std::runtime_error(stem + ".bin is truncated");
    f.require_finite();
    return f;
}

}  // namespace tb
