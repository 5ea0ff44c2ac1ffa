#include "tb/grid.hpp"

#include <cmath>
#include <sstream>

#include "tb/errors.hpp"
#include "tb/parallel.hpp"
#include "tb/rng.hpp"

namespace tb {

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

constexpr std::uint64_t kGridTag = 0x67726964ULL;

std::vector<IVec> shifts_from_key(const GridParams& p, std::uint64_t key) {
    Stream s(key);
    std::vector<IVec> omega(static_cast<std::size_t>(p.L + 1), IVec{});
    for (int j = p.top_level + 1; j <= p.L; ++j)
        for (int d = 0; d < p.n; ++d) omega[j][d] = s.bit(static_cast<std::uint64_t>(j) * kMaxDim + d);
    return omega;
}

// s_k = sum_{j=k+1}^{L} 2^{L-j} omega_j, per axis.
std::vector<IVec> cumulative_shifts(const GridParams& p, const std::vector<IVec>& omega) {
    std::vector<IVec> s(static_cast<std::size_t>(p.L + 1), IVec{});
    for (int k = p.L - 1; k >= 0; --k)
        for (int d = 0; d < p.n; ++d) s[k][d] = s[k + 1][d] + (omega[k + 1][d] << (p.L - k - 1));
    return s;
}

}  // namespace

GridParams GridParams::make(int n, int L, int top_level, double eta, int r) {
    GridParams p;
    p.n = n;
    p.L = L;
    p.top_level = top_level;
    p.eta = eta;
    p.r = r;
    p.epsilon = eta / (2.0 * (eta + n));
    return p;
}

void GridParams::validate() const {
    if (n < 1 || n > kMaxDim) throw ConfigError("dimension n must be in 1..3");
    if (L < 1 || L > 24) throw ConfigError("resolution L must be in 1..24");
    if (top_level < 0) throw ConfigError("top_level must be >= 0");
    if (r < 1) throw ConfigError("r must be a positive integer");
    if (!(eta > 0)) throw ConfigError("eta must be positive");
    if (!(epsilon > 0) || epsilon > 0.5) throw ConfigError("epsilon must lie in (0, 1/2]");
    if (L <= top_level + r) throw ConfigError("L must exceed top_level + r");
}

std::vector<std::string> GridParams::warnings() const {
    std::vector<std::string> w;
    if (r < 3.0 / epsilon) {
        std::ostringstream os;
        os << "r = " << r << " is below 3/epsilon = " << 3.0 / epsilon;
        w.push_back(os.str());
    }
    return w;
}

DyadicGrid::DyadicGrid(const GridParams& params, int grid_id, std::vector<IVec> omega)
    : prm_(params), grid_id_(grid_id), omega_(std::move(omega)) {
    prm_.validate();
    if (grid_id != 1 && grid_id != 2) throw ConfigError("grid id must be 1 or 2");
    if (omega_.size() != static_cast<std::size_t>(prm_.L + 1)) throw ConfigError("shift sequence has wrong length");
    for (int j = 0; j <= prm_.top_level; ++j) omega_[j] = IVec{};
    shift_ = cumulative_shifts(prm_, omega_);

    const int n = prm_.n;
    const std::int64_t N = cells_per_axis();
    const int levels = prm_.L - prm_.top_level + 1;
    level_base_.assign(static_cast<std::size_t>(levels + 1), 0);
    mmin_.assign(static_cast<std::size_t>(levels), IVec{});
    mext_.assign(static_cast<std::size_t>(levels), IVec{});
    for (int k = prm_.top_level; k <= prm_.L; ++k) {
        const int li = k - prm_.top_level;
        const std::int64_t side = side_cells(k);
        std::int64_t count = 1;
        for (int d = 0; d < n; ++d) {
            const std::int64_t lo = floor_div(-shift_[k][d], side);
            const std::int64_t hi = floor_div(N - 1 - shift_[k][d], side);
            mmin_[li][d] = lo;
            mext_[li][d] = hi - lo + 1;
            count *= mext_[li][d];
        }
        level_base_[li + 1] = level_base_[li] + static_cast<int>(count);
    }
    cubes_.resize(static_cast<std::size_t>(level_base_.back()));
    for (int k = prm_.top_level; k <= prm_.L; ++k) {
        const int li = k - prm_.top_level;
        const std::int64_t side = side_cells(k);
        for (int id = level_base_[li]; id < level_base_[li + 1]; ++id) {
            std::int64_t rem = id - level_base_[li];
            CubeRec& c = cubes_[id];
            c.level = k;
            c.cells = 1;
            for (int d = n - 1; d >= 0; --d) {
                c.index[d] = mmin_[li][d] + rem % mext_[li][d];
                rem /= mext_[li][d];
            }
            for (int d = 0; d < n; ++d) {
                c.lo[d] = c.index[d] * side + shift_[k][d];
                c.hi[d] = c.lo[d] + side;
                c.clo[d] = std::max<std::int64_t>(c.lo[d], 0);
                c.chi[d] = std::min<std::int64_t>(c.hi[d], N);
                c.cells *= c.chi[d] - c.clo[d];
                if (c.clo[d] != c.lo[d] || c.chi[d] != c.hi[d]) c.clipped = true;
            }
            if (k > prm_.top_level) {
                IVec pidx{};
                for (int d = 0; d < n; ++d) pidx[d] = floor_div(c.index[d] - omega_[k][d], 2);
                c.parent = find(k - 1, pidx);
                CubeRec& par = cubes_[c.parent];
                par.kids[par.nkids++] = id;
            }
        }
    }
}

std::int64_t DyadicGrid::total_cells() const {
    std::int64_t t = 1;
    for (int d = 0; d < prm_.n; ++d) t *= cells_per_axis();
    return t;
}

double DyadicGrid::cell_volume() const { return std::ldexp(1.0, -prm_.L * prm_.n); }

Cube DyadicGrid::key(int id) const {
    return Cube{grid_id_, cubes_[id].level, cubes_[id].index};
}

std::string DyadicGrid::name(int id) const {
    std::ostringstream os;
    os << "g" << grid_id_ << "_k" << cubes_[id].level << "_m";
    for (int d = 0; d < prm_.n; ++d) os << (d ? "_" : "") << cubes_[id].index[d];
    return os.str();
}

int DyadicGrid::find(int level, const IVec& index) const {
    if (level < prm_.top_level || level > prm_.L) return -1;
    const int li = level - prm_.top_level;
    std::int64_t off = 0;
    for (int d = 0; d < prm_.n; ++d) {
        const std::int64_t m = index[d] - mmin_[li][d];
        if (m < 0 || m >= mext_[li][d]) return -1;
        off = off * mext_[li][d] + m;
    }
    return level_base_[li] + static_cast<int>(off);
}

int DyadicGrid::at_cell(int level, const IVec& cell) const {
    IVec idx{};
    for (int d = 0; d < prm_.n; ++d) idx[d] = floor_div(cell[d] - shift_[level][d], side_cells(level));
    return find(level, idx);
}

int DyadicGrid::ancestor(int id, int level) const {
    while (id >= 0 && cubes_[id].level > level) id = cubes_[id].parent;
    return (id >= 0 && cubes_[id].level == level) ? id : -1;
}

bool DyadicGrid::contains(int outer, int inner) const {
    return cubes_[inner].level >= cubes_[outer].level && ancestor(inner, cubes_[outer].level) == outer;
}

std::int64_t DyadicGrid::linear(const IVec& cell) const {
    std::int64_t idx = 0;
    for (int d = 0; d < prm_.n; ++d) idx = (idx << prm_.L) + cell[d];
    return idx;
}

IVec DyadicGrid::unlinear(std::int64_t idx) const {
    IVec c{};
    const std::int64_t mask = cells_per_axis() - 1;
    for (int d = prm_.n - 1; d >= 0; --d) {
        c[d] = idx & mask;
        idx >>= prm_.L;
    }
    return c;
}

DyadicGrid new_random_grid(const GridParams& params, int grid_id, std::uint64_t seed) {
    params.validate();
    return DyadicGrid(params, grid_id,
                      shifts_from_key(params, derive_key(seed, {kGridTag, static_cast<std::uint64_t>(grid_id)})));
}

constexpr std::uint64_t kTrialTag = 0x747269616cULL;

DyadicGrid trial_grid(const GridParams& params, int grid_id, std::uint64_t seed, std::uint64_t trial) {
    params.validate();
    return DyadicGrid(params, grid_id,
                      shifts_from_key(params, derive_key(seed, {kTrialTag, static_cast<std::uint64_t>(grid_id), trial})));
}

DyadicGrid zero_shift_grid(const GridParams& params, int grid_id) {
    return DyadicGrid(params, grid_id, std::vector<IVec>(static_cast<std::size_t>(params.L + 1), IVec{}));
}

std::int64_t box_gap(const IVec& alo, const IVec& ahi, const IVec& blo, const IVec& bhi, int n) {
    std::int64_t gap = 0;
    for (int d = 0; d < n; ++d) gap = std::max({gap, blo[d] - ahi[d], alo[d] - bhi[d]});
    return gap;
}

std::int64_t box_dist_to_boundary(const IVec& qlo, const IVec& qhi, const IVec& plo, const IVec& phi, int n) {
    bool inside = true, outside = false;
    for (int d = 0; d < n; ++d) {
        if (qlo[d] < plo[d] || qhi[d] > phi[d]) inside = false;
        if (qhi[d] <= plo[d] || qlo[d] >= phi[d]) outside = true;
    }
    if (inside) {
        std::int64_t m = std::numeric_limits<std::int64_t>::max();
        for (int d = 0; d < n; ++d) m = std::min({m, qlo[d] - plo[d], phi[d] - qhi[d]});
        return m;
    }
    if (outside) return box_gap(qlo, qhi, plo, phi, n);
    return 0;
}

std::int64_t dist_to_boundary(const DyadicGrid& gq, int q, const DyadicGrid& gp, int p) {
    if (gq.n() != gp.n() || gq.L() != gp.L()) throw PreconditionError("dist_to_boundary: grids differ in n or L");
    const CubeRec& a = gq.cube(q);
    const CubeRec& b = gp.cube(p);
    return box_dist_to_boundary(a.lo, a.hi, b.lo, b.hi, gq.n());
}

bool within_bad_distance(std::int64_t d_cells, int qlevel, int plevel, double eps, int L) {
    if (d_cells <= 0) return true;
    return std::log2(static_cast<double>(d_cells)) <= L - eps * qlevel - (1.0 - eps) * plevel;
}

namespace {

// The point of Q nearest the domain origin that still lies in the domain.
IVec anchor_cell(const CubeRec& c) { return c.clo; }

}  // namespace

GoodnessVerdict classify_goodness(const DyadicGrid& gj, int q, const DyadicGrid& other, const GridParams& params) {
    GoodnessVerdict v;
    v.cube = q;
    v.cap_level = params.top_level;
    const CubeRec& Q = gj.cube(q);
    const IVec a = anchor_cell(Q);
    for (int b = params.top_level; b <= Q.level - params.r; ++b) {
        const int p = other.at_cell(b, a);
        const CubeRec& P = other.cube(p);
        const std::int64_t d = box_dist_to_boundary(Q.lo, Q.hi, P.lo, P.hi, gj.n());
        if (within_bad_distance(d, Q.level, b, params.epsilon, params.L)) {
            v.bad = true;
            v.witness = p;
            return v;
        }
    }
    return v;
}

GoodnessVerdict classify_goodness_bruteforce(const DyadicGrid& gj, int q, const DyadicGrid& other,
                                             const GridParams& params) {
    GoodnessVerdict v;
    v.cube = q;
    v.cap_level = params.top_level;
    const CubeRec& Q = gj.cube(q);
    const long double cell = std::ldexp(1.0L, -params.L);
    for (int b = params.top_level; b <= Q.level - params.r; ++b) {
        const long double thr = std::pow(2.0L, -static_cast<long double>(params.epsilon) * Q.level) *
                                std::pow(2.0L, -(1.0L - static_cast<long double>(params.epsilon)) * b);
        for (int p = other.level_begin(b); p < other.level_end(b); ++p) {
            const CubeRec& P = other.cube(p);
            // Independent evaluation of the closed-form distance, per axis, in reals.
            bool inside = true, outside = false;
            long double dist = 0;
            long double inner = 1e300L;
            for (int d = 0; d < gj.n(); ++d) {
                const long double ql = Q.lo[d] * cell, qh = Q.hi[d] * cell;
                const long double pl = P.lo[d] * cell, ph = P.hi[d] * cell;
                if (ql < pl || qh > ph) inside = false;
                if (qh <= pl || ql >= ph) outside = true;
                inner = std::min({inner, ql - pl, ph - qh});
                dist = std::max({dist, pl - qh, ql - ph});
            }
            const long double dd = inside ? inner : (outside ? dist : 0.0L);
            if (dd <= thr) {
                v.bad = true;
                v.witness = p;
                return v;
            }
        }
    }
    return v;
}

std::vector<std::uint8_t> goodness_table(const DyadicGrid& gj, const DyadicGrid& other, const GridParams& params) {
    std::vector<std::uint8_t> good(static_cast<std::size_t>(gj.size()), 1);
    for (int q = 0; q < gj.size(); ++q) good[q] = classify_goodness(gj, q, other, params).bad ? 0 : 1;
    return good;
}

namespace {

// Badness of a fixed box at level k against a grid described only by its shifts.
bool bad_against(const IVec& qlo, const IVec& qhi, int k, const std::vector<IVec>& s, const GridParams& p) {
    for (int b = p.top_level; b <= k - p.r; ++b) {
        const std::int64_t side = std::int64_t{1} << (p.L - b);
        IVec plo{}, phi{};
        for (int d = 0; d < p.n; ++d) {
            plo[d] = floor_div(qlo[d] - s[b][d], side) * side + s[b][d];
            phi[d] = plo[d] + side;
        }
        if (within_bad_distance(box_dist_to_boundary(qlo, qhi, plo, phi, p.n), k, b, p.epsilon, p.L)) return true;
    }
    return false;
}

}  // namespace

PiBadEstimate estimate_pi_bad(int level, const GridParams& params, std::int64_t trials, std::uint64_t seed) {
    params.validate();
    if (trials < 100) throw PreconditionError("estimate_pi_bad needs at least 100 trials");
    if (level < params.top_level || level > params.L) throw PreconditionError("level outside grid range");
    const std::int64_t side = std::int64_t{1} << (params.L - level);
    const std::int64_t N = std::int64_t{1} << params.L;
    IVec qlo{}, qhi{};
    for (int d = 0; d < params.n; ++d) {
        qlo[d] = std::min(N / 4 / side * side, N - side);
        qhi[d] = qlo[d] + side;
    }
    std::vector<std::uint8_t> bad(static_cast<std::size_t>(trials), 0);
    parallel_for(trials, [&](std::int64_t t) {
        const auto omega = shifts_from_key(
            params, derive_key(seed, {kTrialTag, std::uint64_t{2}, static_cast<std::uint64_t>(t)}));
        bad[t] = bad_against(qlo, qhi, level, cumulative_shifts(params, omega), params) ? 1 : 0;
    });
    PiBadEstimate e;
    e.trials = trials;
    for (auto b : bad) e.bad += b;
    e.estimate = static_cast<double>(e.bad) / static_cast<double>(trials);
    // Agresti-Coull standard error keeps the interval informative at 0 and 1.
    const double nt = static_cast<double>(trials) + 4.0;
    const double pt = (static_cast<double>(e.bad) + 2.0) / nt;
    e.se = std::sqrt(pt * (1 - pt) / nt);
    e.ci95 = 1.96 * e.se;
    return e;
}

LevelAgreement compare_levels(int level_a, int level_b, const GridParams& params, std::int64_t trials,
                              std::uint64_t seed) {
    LevelAgreement out;
    out.a = estimate_pi_bad(level_a, params, trials, seed);
    out.b = estimate_pi_bad(level_b, params, trials, derive_key(seed, {0x6c6576656cULL}));
    const double se = std::sqrt(out.a.se * out.a.se + out.b.se * out.b.se);
    out.z = se > 0 ? std::abs(out.a.estimate - out.b.estimate) / se : 0.0;
    out.agree = out.z <= 1.96;
    return out;
}

}  // namespace tb
