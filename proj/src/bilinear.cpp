#include "tb/bilinear.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "tb/errors.hpp"
#include "tb/parallel.hpp"
#include "tb/rng.hpp"
#include "tb/stats.hpp"

namespace tb {

namespace {

bool boxes_meet(const IVec& alo, const IVec& ahi, const IVec& blo, const IVec& bhi, int n) {
    for (int d = 0; d < n; ++d)
        if (!(blo[d] < ahi[d] && alo[d] < bhi[d])) return false;
    return true;
}

bool box_inside(const IVec& ilo, const IVec& ihi, const IVec& olo, const IVec& ohi, int n) {
    for (int d = 0; d < n; ++d)
        if (ilo[d] < olo[d] || ihi[d] > ohi[d]) return false;
    return true;
}

double euclid_gap(const CubeRec& a, const CubeRec& b, int n) {
    double s = 0;
    for (int d = 0; d < n; ++d) {
        const std::int64_t g = std::max<std::int64_t>({0, b.lo[d] - a.hi[d], a.lo[d] - b.hi[d]});
        s += static_cast<double>(g) * static_cast<double>(g);
    }
    return std::sqrt(s);
}

// Twisted data of one big cube, stored on its cells.
struct BigCube {
    int S = -1;
    std::vector<std::int64_t> cells;
    std::vector<int> kid;          // child containing each cell
    std::vector<double> delta;     // Delta^beta_P f
    std::vector<double> delta_b;   // Delta^b_P f
    std::vector<double> dtilde;    // tilde D_P f
    std::vector<double> beta;      // beta_S
    std::vector<int> stop_kids;    // children with a different stopping parent
    double box_avg = 0, box_b_avg = 0, abs_dtilde_avg = 0, volume = 0;
};

// Delta_Q f on the small grid together with its transpose image under the big operator.
struct SmallCube {
    std::vector<std::int64_t> cells;
    std::vector<double> delta;
    std::vector<double> v;  // (T^t Delta_Q f) scaled so that <T g, Delta_Q f> = h sum g v
    double box_int = 0, box_avg = 0;
};

double dot_cells(const std::vector<std::int64_t>& cells, const std::vector<double>& a, const std::vector<double>& v) {
    double s = 0;
    for (std::size_t k = 0; k < cells.size(); ++k) s += a[k] * v[static_cast<std::size_t>(cells[k])];
    return s;
}

struct Bucket {
    double value = 0, bound = 0;
};

void push_rows(std::vector<TermRow>& rows, const std::string& term, const std::map<std::pair<int, int>, Bucket>& m) {
    for (const auto& [key, b] : m)
        rows.push_back({term, key.first, key.second, b.value, b.bound, b.bound > 0 ? b.value / b.bound : 0.0});
}

double safe_ratio(double v, double b) { return b > 0 ? std::abs(v) / b : (v == 0 ? 0.0 : HUGE_VAL); }

}  // namespace

const char* pair_kind_name(PairKind k) {
    switch (k) {
        case PairKind::Far: return "far";
        case PairKind::Diagonal: return "diagonal";
        case PairKind::Nearby: return "nearby";
        case PairKind::Inside: return "inside";
    }
    return "?";
}

PairClass classify_pair(const DyadicGrid& gp, int P, const DyadicGrid& gq, int Q, int r) {
    const CubeRec& p = gp.cube(P);
    const CubeRec& q = gq.cube(Q);
    const int n = gp.n();
    PairClass pc;
    pc.P = P;
    pc.Q = Q;
    pc.s = q.level - p.level;
    if (pc.s < 0) throw PreconditionError("pair classification: " + gq.name(Q) + " is larger than " + gp.name(P));
    const std::int64_t lp = p.hi[0] - p.lo[0];
    IVec tlo{}, thi{};
    for (int d = 0; d < n; ++d) {
        tlo[d] = p.lo[d] - lp;
        thi[d] = p.hi[d] + lp;
    }
    pc.dist = euclid_gap(p, q, n) / static_cast<double>(lp);
    if (!boxes_meet(tlo, thi, q.lo, q.hi, n)) {
        pc.kind = PairKind::Far;
        pc.t = 1;
        while (pc.dist >= std::ldexp(1.0, pc.t)) ++pc.t;
        return pc;
    }
    if (pc.s <= r) {
        pc.kind = PairKind::Diagonal;
        return pc;
    }
    if (box_inside(q.lo, q.hi, p.lo, p.hi, n)) {
        pc.kind = PairKind::Inside;
        for (int i = 0; i < p.nkids; ++i) {
            const CubeRec& k = gp.cube(p.kids[i]);
            if (box_inside(q.lo, q.hi, k.lo, k.hi, n)) pc.child = p.kids[i];
        }
        if (pc.child < 0)
            throw InvariantError("inside pair", "no child of " + gp.name(P) + " contains " + gq.name(Q));
        return pc;
    }
    if (box_inside(q.lo, q.hi, tlo, thi, n) && !boxes_meet(q.lo, q.hi, p.lo, p.hi, n)) {
        pc.kind = PairKind::Nearby;
        return pc;
    }
    throw InvariantError("pair partition", gq.name(Q) + " straddles the boundary of " + gp.name(P) + " or its triple");
}

std::vector<PairClass> classify_pairs(const Corona& big, const Corona& small, bool strict) {
    const int r = big.grid->params().r;
    std::vector<PairClass> out;
    const auto Gs = small.G();
    for (int P : big.G()) {
        const int lp = big.grid->cube(P).level;
        for (int Q : Gs) {
            const int lq = small.grid->cube(Q).level;
            if (lq < lp || (strict && lq == lp)) continue;
            out.push_back(classify_pair(*big.grid, P, *small.grid, Q, r));
        }
    }
    return out;
}

PairCounts count_pairs(const std::vector<PairClass>& pairs) {
    PairCounts c;
    c.eligible = static_cast<std::int64_t>(pairs.size());
    for (const auto& p : pairs) {
        switch (p.kind) {
            case PairKind::Far: ++c.far; break;
            case PairKind::Diagonal: ++c.diagonal; break;
            case PairKind::Nearby: ++c.nearby; break;
            case PairKind::Inside: ++c.inside; break;
        }
    }
    return c;
}

HalfReport bilinear_half(const Corona& big, const Corona& small, bool strict, const BilinearOptions& opt) {
    const DyadicGrid& gb = *big.grid;
    const DyadicGrid& gs = *small.grid;
    if (gb.n() != gs.n() || gb.L() != gs.L()) throw PreconditionError("bilinear form: grids differ in shape");
    const GridParams& prm = gb.params();
    const int n = gb.n();
    const int r = prm.r;
    const double eta = prm.eta;
    const double eta_p = (1.0 - prm.epsilon) * eta;
    const double h = gb.cell_volume();
    const DiscretizedOperator& op = *big.op;
    const std::int64_t N = op.dim();

    HalfReport rep;
    const auto pairs = classify_pairs(big, small, strict);
    rep.counts = count_pairs(pairs);

    const auto favg_b = cube_averages(big.f, gb);
    const auto favg_s = cube_averages(small.f, gs);
    const auto Gb = big.G();
    const auto Gs = small.G();

    std::vector<int> qslot(static_cast<std::size_t>(gs.size()), -1);
    for (std::size_t i = 0; i < Gs.size(); ++i) qslot[Gs[i]] = static_cast<int>(i);
    std::vector<SmallCube> sq(Gs.size());
    parallel_for(static_cast<std::int64_t>(Gs.size()), [&](std::int64_t i) {
        const int Q = Gs[static_cast<std::size_t>(i)];
        SmallCube& d = sq[static_cast<std::size_t>(i)];
        const Patch dq = twisted_diff(small.ctx_beta, favg_s, Q);
        d.cells.resize(dq.v.size());
        gs.for_each_cell(Q, [&](std::int64_t cell, std::int64_t l) { d.cells[static_cast<std::size_t>(l)] = cell; });
        d.delta = dq.v;
        d.v.assign(static_cast<std::size_t>(N), 0.0);
        for (std::size_t k = 0; k < d.cells.size(); ++k) {
            const double w = dq.v[k] * h;
            if (w == 0) continue;
            const double* row = &op.matrix()[static_cast<std::size_t>(d.cells[k] * N)];
            for (std::int64_t j = 0; j < N; ++j) d.v[static_cast<std::size_t>(j)] += row[j] * w;
        }
        const Patch box = box_majorant(small.ctx_beta, favg_s, Q);
        double s = 0;
        for (double x : box.v) s += x;
        d.box_int = s * h;
        d.box_avg = s / static_cast<double>(box.v.size());
    });

    std::vector<int> pslot(static_cast<std::size_t>(gb.size()), -1);
    for (std::size_t i = 0; i < Gb.size(); ++i) pslot[Gb[i]] = static_cast<int>(i);
    std::vector<BigCube> bp(Gb.size());
    parallel_for(static_cast<std::int64_t>(Gb.size()), [&](std::int64_t i) {
        const int P = Gb[static_cast<std::size_t>(i)];
        BigCube& d = bp[static_cast<std::size_t>(i)];
        const CubeRec& c = gb.cube(P);
        d.S = big.ctx_beta.parent(P);
        const Patch full = twisted_diff(big.ctx_beta, favg_b, P);
        const Patch fb = twisted_diff(big.ctx_b, favg_b, P);
        const Patch ht = half_twisted_diff(big.ctx_beta, favg_b, P);
        const Patch box = box_majorant(big.ctx_beta, favg_b, P);
        const Patch boxb = box_majorant(big.ctx_b, favg_b, P);
        const DyadicFunction& beta = big.ctx_beta.function(d.S);
        d.cells.resize(full.v.size());
        d.kid.resize(full.v.size());
        d.beta.resize(full.v.size());
        gb.for_each_cell(P, [&](std::int64_t cell, std::int64_t l) {
            const auto k = static_cast<std::size_t>(l);
            d.cells[k] = cell;
            d.kid[k] = gb.at_cell(c.level + 1, gb.unlinear(cell));
            d.beta[k] = beta[cell];
        });
        d.delta = full.v;
        d.delta_b = fb.v;
        d.dtilde = ht.v;
        double sb = 0, sbb = 0, sa = 0;
        for (std::size_t k = 0; k < full.v.size(); ++k) {
            sb += box.v[k];
            sbb += boxb.v[k];
            sa += std::abs(ht.v[k]);
        }
        const double m = static_cast<double>(full.v.size());
        d.box_avg = sb / m;
        d.box_b_avg = sbb / m;
        d.abs_dtilde_avg = sa / m;
        d.volume = m * h;
        for (int k = 0; k < c.nkids; ++k)
            if (big.ctx_beta.parent(c.kids[k]) != d.S) d.stop_kids.push_back(c.kids[k]);
    });

    // Per stopping cube: maximal function of beta_S, lazily
    std::map<int, DyadicFunction> maxfn;
    auto max_of = [&](int S) -> const DyadicFunction& {
        auto it = maxfn.find(S);
        if (it == maxfn.end()) it = maxfn.emplace(S, maximal(big.ctx_beta.function(S), gb)).first;
        return it->second;
    };
    std::map<std::pair<int, int>, double> wcache, mcache;
    // h <beta_S 1_S, v_Q>
    auto w_SQ = [&](int S, int qi) {
        const auto key = std::make_pair(S, qi);
        auto it = wcache.find(key);
        if (it != wcache.end()) return it->second;
        const DyadicFunction& beta = big.ctx_beta.function(S);
        const auto& v = sq[static_cast<std::size_t>(qi)].v;
        double s = 0;
        gb.for_each_cell(S, [&](std::int64_t cell, std::int64_t) { s += beta[cell] * v[static_cast<std::size_t>(cell)]; });
        s *= h;
        wcache.emplace(key, s);
        return s;
    };
    // inf over Q of M beta_S, as the minimum over the finest cells of Q
    auto inf_M = [&](int S, int qi) {
        const auto key = std::make_pair(S, qi);
        auto it = mcache.find(key);
        if (it != mcache.end()) return it->second;
        const DyadicFunction& M = max_of(S);
        double m = HUGE_VAL;
        for (std::int64_t cell : sq[static_cast<std::size_t>(qi)].cells) m = std::min(m, M[cell]);
        mcache.emplace(key, m);
        return m;
    };

    std::map<int, double> left_S, B_S;
    std::map<std::tuple<int, int>, double> stop_Ss, err_Ss, para_Ss;
    std::map<std::pair<int, int>, double> eps_SQ;
    std::map<std::pair<int, int>, Bucket> stop_rows, err_rows, para_rows, near_rows, far_rows, diag_rows, back_rows;
    std::map<int, double> back_value;
    std::map<int, std::vector<std::pair<int, int>>> diag_by_s;

    for (const auto& pc : pairs) {
        const BigCube& d = bp[static_cast<std::size_t>(pslot[pc.P])];
        const int qi = qslot[pc.Q];
        const SmallCube& q = sq[static_cast<std::size_t>(qi)];
        const auto& v = q.v;
        const double lq_over_lp = std::ldexp(1.0, -pc.s);
        switch (pc.kind) {
            case PairKind::Far: {
                const double val = h * dot_cells(d.cells, d.delta, v);
                rep.far += val;
                const double bound =
                    std::pow(lq_over_lp, eta) * std::pow(pc.dist, -n - eta) * d.box_avg * q.box_int;
                auto& b = far_rows[{pc.s, pc.t}];
                b.value += std::abs(val);
                b.bound += bound;
                rep.worst_far_ratio = std::max(rep.worst_far_ratio, safe_ratio(val, bound));
                break;
            }
            case PairKind::Diagonal: {
                const double val = h * dot_cells(d.cells, d.delta, v);
                const double vb = h * dot_cells(d.cells, d.delta_b, v);
                rep.diagonal += val;
                rep.diagonal_b += vb;
                back_value[pc.s] += val - vb;
                diag_by_s[pc.s].push_back({pslot[pc.P], qi});
                const double bound = (1.0 + big.t_loc) * d.box_b_avg * q.box_avg * d.volume;
                auto& b = diag_rows[{pc.s, 0}];
                b.value += std::abs(vb);
                b.bound += bound;
                rep.worst_diagonal_ratio = std::max(rep.worst_diagonal_ratio, safe_ratio(vb, bound));
                break;
            }
            case PairKind::Nearby: {
                double val = 0;
                for (std::size_t k = 0; k < d.cells.size(); ++k)
                    val += d.dtilde[k] * d.beta[k] * v[static_cast<std::size_t>(d.cells[k])];
                val *= h;
                rep.nearby += val;
                const double bound = std::pow(lq_over_lp, eta_p) * inf_M(d.S, qi) * d.abs_dtilde_avg * q.box_int;
                auto& b = near_rows[{pc.s, 0}];
                b.value += std::abs(val);
                b.bound += bound;
                rep.worst_nearby_ratio = std::max(rep.worst_nearby_ratio, safe_ratio(val, bound));
                for (int K : d.stop_kids) rep.nearby_left += big.ctx_beta.ratio(favg_b, K) * w_SQ(K, qi);
                break;
            }
            case PairKind::Inside: {
                double tilde = 0, err = 0, in_child = 0, dval = 0;
                for (std::size_t k = 0; k < d.cells.size(); ++k) {
                    const double x = v[static_cast<std::size_t>(d.cells[k])];
                    const double t = d.dtilde[k] * d.beta[k] * x;
                    tilde += t;
                    if (d.kid[k] == pc.child) {
                        in_child += d.beta[k] * x;
                        dval = d.dtilde[k];
                    } else {
                        err += t;
                    }
                }
                tilde *= h;
                err *= h;
                in_child *= h;
                const double wsq = w_SQ(d.S, qi);
                const double para = dval * wsq;
                const double stop = dval * (wsq - in_child);
                rep.split_error = std::max(rep.split_error, std::abs(para - stop + err - tilde));
                rep.inside_para += para;
                rep.inside_stop += stop;
                rep.inside_error += err;
                rep.inside_B += tilde;
                B_S[d.S] += tilde;
                stop_Ss[{d.S, pc.s}] += stop;
                err_Ss[{d.S, pc.s}] += err;
                para_Ss[{d.S, pc.s}] += para;
                eps_SQ[{d.S, qi}] += dval;
                const double decay = std::pow(2.0, -eta_p * pc.s);
                const double m = inf_M(d.S, qi);
                const double bstop = decay * std::abs(dval) * m * q.box_int;
                const double berr = decay * d.abs_dtilde_avg * m * q.box_int;
                stop_rows[{pc.s, 0}].bound += bstop;
                err_rows[{pc.s, 0}].bound += berr;
                rep.worst_stop_ratio = std::max(rep.worst_stop_ratio, safe_ratio(stop, bstop));
                rep.worst_error_ratio = std::max(rep.worst_error_ratio, safe_ratio(err, berr));
                for (int K : d.stop_kids) {
                    const double val = big.ctx_beta.ratio(favg_b, K) * w_SQ(K, qi);
                    rep.inside_left += val;
                    left_S[K] += val;
                }
                break;
            }
        }
    }

    for (const auto& [key, val] : stop_Ss) stop_rows[{std::get<1>(key), 0}].value += std::abs(val);
    for (const auto& [key, val] : err_Ss) err_rows[{std::get<1>(key), 0}].value += std::abs(val);
    for (const auto& [key, val] : para_Ss) para_rows[{std::get<1>(key), 0}].value += std::abs(val);
    for (const auto& [key, val] : eps_SQ)
        rep.max_eps_over_lambda = std::max(rep.max_eps_over_lambda, std::abs(val) / big.params.Lambda);
    const double tl = big.t_loc + big.params.upsilon1 * big.tb_proxy;
    for (int S : big.S()) {
        const double num = std::abs(left_S[S]) + std::abs(B_S[S]);
        const double den = tl * static_cast<double>(gb.cube(S).cells) * h;
        if (den > 0) rep.per_S_constant = std::max(rep.per_S_constant, num / den);
    }
    double cum = 0;
    for (const auto& [key, b] : near_rows) {
        cum += b.value;
        rep.nearby_partial[key.first] = cum;
    }

    // Rademacher instrument for the beta -> b replacement on Diagonal pairs
    const double pb = big.p;
    const double pd = pb / (pb - 1.0);
    bool differs = false;
    for (const auto& d : bp)
        for (std::size_t k = 0; k < d.delta.size() && !differs; ++k) differs = d.delta[k] != d.delta_b[k];
    for (const auto& [s, list] : diag_by_s) {
        rep.back2b_value += back_value[s];
        double inst = 0;
        if (differs && opt.rademacher_trials > 0) {
            double e1 = 0, e2 = 0;
            for (int trial = 0; trial < opt.rademacher_trials; ++trial) {
                Stream rs(derive_key(opt.seed, {0x6261636bULL, static_cast<std::uint64_t>(strict),
                                                static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(trial)}));
                std::vector<double> sign(bp.size());
                for (std::size_t i = 0; i < bp.size(); ++i) sign[i] = rs.bit(i) ? 1.0 : -1.0;
                DyadicFunction u(n, gb.L()), w(n, gb.L());
                for (std::size_t i = 0; i < bp.size(); ++i)
                    for (std::size_t k = 0; k < bp[i].cells.size(); ++k)
                        u[bp[i].cells[k]] += sign[i] * (bp[i].delta[k] - bp[i].delta_b[k]);
                for (const auto& [pi, qi] : list) {
                    const auto& q = sq[static_cast<std::size_t>(qi)];
                    for (std::size_t k = 0; k < q.cells.size(); ++k)
                        w[q.cells[k]] += sign[static_cast<std::size_t>(pi)] * q.delta[k];
                }
                e1 += std::pow(lq_norm(op.apply(u), pb), pb);
                e2 += std::pow(lq_norm(w, pd), pd);
            }
            inst = std::pow(e1 / opt.rademacher_trials, 1.0 / pb) * std::pow(e2 / opt.rademacher_trials, 1.0 / pd);
        }
        auto& b = back_rows[{s, 0}];
        b.value = std::abs(back_value[s]);
        b.bound = inst;
        rep.back2b_instrument += inst;
    }
    const double q0 = std::pow(0.25, n);
    const double den_b = r * big.params.upsilon1 * big.tb_proxy * q0;
    rep.back2b_normalized = den_b > 0 ? std::abs(rep.back2b_value) / den_b : 0.0;

    rep.total = rep.inside_left + rep.inside_B + rep.nearby_left + rep.nearby + rep.far + rep.diagonal;

    push_rows(rep.rows, "inside_para", para_rows);
    push_rows(rep.rows, "inside_stop", stop_rows);
    push_rows(rep.rows, "inside_error", err_rows);
    push_rows(rep.rows, "nearby", near_rows);
    push_rows(rep.rows, "far", far_rows);
    push_rows(rep.rows, "diagonal", diag_rows);
    push_rows(rep.rows, "diagonal_back2b", back_rows);
    return rep;
}

BilinearReport full_decomposition(const Corona& c1, const Corona& c2, const BilinearOptions& opt) {
    if (c1.other != c2.grid || c2.other != c1.grid)
        throw PreconditionError("full decomposition: coronas must be built against each other's grids");
    BilinearReport rep;
    rep.lower = bilinear_half(c1, c2, false, opt);
    rep.upper = bilinear_half(c2, c1, true, opt);
    rep.classified_total = rep.lower.total + rep.upper.total;

    auto good_part = [](const Corona& c) {
        DyadicFunction F = DyadicFunction::like(*c.grid);
        const auto favg = cube_averages(c.f, *c.grid);
        for (int P : c.G()) add_patch(F, *c.grid, twisted_diff(c.ctx_beta, favg, P));
        return F;
    };
    const DyadicFunction F1 = good_part(c1), F2 = good_part(c2);
    rep.double_good_sum = inner(c1.op->apply(F1), F2);
    rep.pairing = inner(c1.op->apply(c1.f), c2.f);
    rep.good_sum_error = std::abs(rep.pairing - rep.double_good_sum);

    double scale = std::abs(rep.double_good_sum);
    for (const HalfReport* h : {&rep.lower, &rep.upper})
        scale = std::max({scale, std::abs(h->inside_left), std::abs(h->inside_B), std::abs(h->nearby_left),
                          std::abs(h->nearby), std::abs(h->far), std::abs(h->diagonal)});
    const double diff = std::abs(rep.classified_total - rep.double_good_sum);
    rep.bookkeeping_rel = scale > 0 ? diff / scale : 0.0;
    if (rep.bookkeeping_rel > 1e-9) {
        std::ostringstream os;
        os << "classified total " << rep.classified_total << " vs double good sum " << rep.double_good_sum
           << " (relative " << rep.bookkeeping_rel << ")";
        throw InvariantError("bookkeeping identity", os.str());
    }

    std::map<std::tuple<std::string, int, int>, Bucket> merged;
    for (const HalfReport* h : {&rep.lower, &rep.upper})
        for (const auto& row : h->rows) {
            auto& b = merged[{row.term, row.s, row.t}];
            b.value += row.value;
            b.bound += row.bound;
        }
    for (const auto& [key, b] : merged)
        rep.rows.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), b.value, b.bound,
                            b.bound > 0 ? b.value / b.bound : 0.0});
    return rep;
}

DecayFit fit_decay(const std::vector<TermRow>& rows, const std::string& term, bool joint, int s_min, int s_max) {
    DecayFit fit;
    if (!joint) {
        std::map<int, double> by_s;
        for (const auto& r : rows)
            if (r.term == term && r.s >= s_min && r.s <= s_max) by_s[r.s] += r.value;
        std::vector<double> x, y;
        for (const auto& [s, v] : by_s)
            if (v > 0) {
                x.push_back(s);
                y.push_back(std::log2(v));
            }
        fit.points = static_cast<int>(x.size());
        if (x.size() >= 2) fit.rate = -ols(x, y).slope;
        return fit;
    }
    // y = a + b s + c t by normal equations
    double m[3][3] = {}, rhs[3] = {};
    for (const auto& r : rows) {
        if (r.term != term || r.s < s_min || r.s > s_max || !(r.value > 0)) continue;
        const double z[3] = {1.0, static_cast<double>(r.s), static_cast<double>(r.t)};
        const double y = std::log2(r.value);
        for (int i = 0; i < 3; ++i) {
            rhs[i] += z[i] * y;
            for (int j = 0; j < 3; ++j) m[i][j] += z[i] * z[j];
        }
        ++fit.points;
    }
    auto det3 = [](const double a[3][3]) {
        return a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
               a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    };
    const double D = det3(m);
    if (fit.points < 3 || std::abs(D) < 1e-12) return fit;
    double coef[3];
    for (int c = 0; c < 3; ++c) {
        double a[3][3];
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) a[i][j] = j == c ? rhs[i] : m[i][j];
        coef[c] = det3(a) / D;
    }
    fit.rate = -coef[1];
    fit.rate_t = -coef[2];
    return fit;
}

std::string rows_csv(const std::vector<TermRow>& rows) {
    std::ostringstream os;
    os << "term,s,t,value,bound_instrument,ratio\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, ",%d,%d,%.17g,%.17g,%.17g\n", r.s, r.t, r.value, r.bound, r.ratio);
        os << r.term << buf;
    }
    return os.str();
}

namespace {

nlohmann::ordered_json half_json(const HalfReport& h) {
    nlohmann::ordered_json j;
    j["pairs"] = {{"far", h.counts.far},
                  {"diagonal", h.counts.diagonal},
                  {"nearby", h.counts.nearby},
                  {"inside", h.counts.inside},
                  {"eligible", h.counts.eligible}};
    j["inside_left"] = h.inside_left;
    j["inside_para"] = h.inside_para;
    j["inside_stop"] = h.inside_stop;
    j["inside_error"] = h.inside_error;
    j["inside_B"] = h.inside_B;
    j["nearby_left"] = h.nearby_left;
    j["nearby"] = h.nearby;
    j["far"] = h.far;
    j["diagonal"] = h.diagonal;
    j["diagonal_b"] = h.diagonal_b;
    j["total"] = h.total;
    j["split_error"] = h.split_error;
    j["max_eps_over_lambda"] = h.max_eps_over_lambda;
    j["per_S_constant"] = h.per_S_constant;
    j["worst_ratio"] = {{"inside_stop", h.worst_stop_ratio},
                        {"inside_error", h.worst_error_ratio},
                        {"nearby", h.worst_nearby_ratio},
                        {"far", h.worst_far_ratio},
                        {"diagonal", h.worst_diagonal_ratio}};
    j["back2b"] = {{"value", h.back2b_value},
                   {"instrument", h.back2b_instrument},
                   {"normalized", h.back2b_normalized}};
    return j;
}

}  // namespace

std::string bilinear_json(const BilinearReport& rep) {
    nlohmann::ordered_json j;
    j["lower"] = half_json(rep.lower);
    j["upper"] = half_json(rep.upper);
    j["classified_total"] = rep.classified_total;
    j["double_good_sum"] = rep.double_good_sum;
    j["bookkeeping_rel"] = rep.bookkeeping_rel;
    j["pairing"] = rep.pairing;
    j["good_sum_error"] = rep.good_sum_error;
    const char* terms[] = {"inside_stop", "inside_error", "nearby"};
    for (const char* t : terms) j["decay_rate"][t] = fit_decay(rep.rows, t).rate;
    const auto far = fit_decay(rep.rows, "far", true);
    j["decay_rate"]["far_s"] = far.rate;
    j["decay_rate"]["far_t"] = far.rate_t;
    return j.dump(2);
}

}  // namespace tb
