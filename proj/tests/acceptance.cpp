#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "tb/accretive.hpp"
#include "tb/bilinear.hpp"
#include "tb/corona.hpp"
#include "tb/czop.hpp"
#include "tb/dyfun.hpp"
#include "tb/errors.hpp"
#include "tb/grid.hpp"
#include "tb/rng.hpp"
#include "tb/stats.hpp"
#include "tb/twisted.hpp"

using namespace tb;

namespace {

// Pinned tolerances, one block per criterion.
constexpr double kReconstructionTol = 1e-9;
constexpr double kReconstructionSecondsPerSeed = 10;
constexpr int kGoodnessSeedPairs = 5;
constexpr double kPiBadEta = 1.0;
constexpr double kPiBadEpsilon = 0.25;
constexpr std::int64_t kPiBadTrials = 10000;
constexpr double kPiBadSeconds = 120;
constexpr double kZ95 = 1.959963984540054;
constexpr std::int64_t kProjectionTrials = 4000;
constexpr double kZeroDiffTol = 1e-12;
constexpr double kTypeAMeanTol = 1e-12;
constexpr double kTypeAMinAvg = 0.25;
constexpr double kTypeAStability = 0.30;
constexpr int kTildeSeeds = 16;
constexpr double kTransformVariation = 0.25;
constexpr int kTransformPatterns = 50;
constexpr double kPerturbSlope = 1.0;
constexpr double kPerturbSlack = 0.2;
constexpr double kBookkeepingTol = 1e-9;
constexpr double kDecayRateSlack = 2.0;
constexpr double kDecaySeconds = 300;
constexpr int kTrendSeeds = 8;

// Criteria whose failure is a measured property of the construction at desk scale (see README).
const std::set<int> kDocumentedFailures{3, 7, 13};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

struct World {
    DyadicGrid g1, g2;
    SystemPtr s1, s2;
    DiscretizedOperator T, Tt;
    WitnessPair w;
    Corona c1, c2;
};

struct WorldSpec {
    int L = 8;
    int r = 4;
    double epsilon = -1;
    std::uint64_t seed = 1;
    double amp = 0;  // 0: trivial systems
    int depth = 2;
    bool all_good = false;
    bool shared = false;
    std::string kernel = "hilbert";
};

std::unique_ptr<World> make_world(const WorldSpec& ws) {
    auto prm = GridParams::make(1, ws.L, 0, 1.0, ws.r);
    if (ws.epsilon > 0) prm.epsilon = ws.epsilon;
    auto w = std::make_unique<World>();
    w->g1 = new_random_grid(prm, 1, ws.seed);
    w->g2 = ws.shared ? DyadicGrid(prm, 2, w->g1.omega()) : new_random_grid(prm, 2, ws.seed);
    if (ws.amp > 0) {
        w->s1 = oscillatory_system(w->g1, 2.0, 1.6, ws.amp, ws.depth, derive_key(ws.seed, {1}));
        w->s2 = oscillatory_system(w->g2, 2.0, 1.6, ws.amp, ws.depth, derive_key(ws.seed, {2}));
    } else {
        w->s1 = trivial_system(w->g1, 2.0);
        w->s2 = trivial_system(w->g2, 2.0);
    }
    w->T = DiscretizedOperator(kernel_by_name(ws.kernel, 1, 1.0), ws.L);
    w->Tt = w->T.transpose();
    w->w = reference_witness(w->T);
    CoronaParams cp;
    cp.tau = 0.9;
    cp.tb_proxy = 3.2;
    cp.all_good = ws.all_good;
    w->c1 = build_corona(1, *w->s1, w->g2, w->T, w->w.f1, cp);
    w->c2 = build_corona(2, *w->s2, w->g1, w->Tt, w->w.f2, cp);
    return w;
}

double rel_l2(const DyadicFunction& a, const DyadicFunction& b) {
    const double d = lq_norm(a - b, 2.0);
    const double s = lq_norm(b, 2.0);
    return s > 0 ? d / s : d;
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

// Criterion 1
Outcome reconstruction() {
    double worst_a = 0, worst_b = 0, slowest = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto t0 = std::chrono::steady_clock::now();
        for (double amp : {0.0, 0.4}) {
            for (bool oracle : {false, true}) {
                WorldSpec ws;
                ws.L = 8;
                ws.seed = seed;
                ws.amp = amp;
                ws.all_good = oracle;
                ws.shared = oracle;
                const auto w = make_world(ws);
                for (const Corona* c : {&w->c1, &w->c2}) {
                    const auto& g = *c->grid;
                    const auto rec = top_part(c->f, g) + difference_sum(c->f, g, [](int) { return true; });
                    worst_a = std::max(worst_a, rel_l2(rec, c->f));
                    worst_b = std::max(worst_b, representation_check(*c).rel_l2);
                }
            }
        }
        slowest = std::max(slowest, seconds_since(t0));
    }
    std::ostringstream d;
    d << "martingale " << fmt("%.2e", worst_a) << ", representation " << fmt("%.2e", worst_b) << ", slowest seed "
      << fmt("%.2f", slowest) << " s";
    return {worst_a <= kReconstructionTol && worst_b <= kReconstructionTol && slowest <= kReconstructionSecondsPerSeed,
            d.str()};
}

// Criterion 2
Outcome goodness_oracle() {
    std::int64_t mismatches = 0, cubes = 0, bad = 0;
    for (auto [n, L, r] : {std::tuple{1, 12, 3}, std::tuple{2, 6, 2}}) {
        const auto prm = GridParams::make(n, L, 0, 1.0, r);
        for (int s = 0; s < kGoodnessSeedPairs; ++s) {
            const auto g1 = new_random_grid(prm, 1, 100 + s);
            const auto g2 = new_random_grid(prm, 2, 200 + s);
            for (const auto* pr : {&g1, &g2}) {
                const auto& gj = *pr;
                const auto& gk = pr == &g1 ? g2 : g1;
                for (int q = 0; q < gj.size(); ++q) {
                    const bool fast = classify_goodness(gj, q, gk, prm).bad;
                    mismatches += fast != classify_goodness_bruteforce(gj, q, gk, prm).bad;
                    bad += fast;
                    ++cubes;
                }
            }
        }
    }
    return {mismatches == 0, std::to_string(mismatches) + " mismatches over " + std::to_string(cubes) + " cubes (" +
                                 std::to_string(bad) + " bad)"};
}

// Criterion 3
Outcome pi_bad_decay() {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<double> x, y, se;
    std::ostringstream d;
    for (int r = 3; r <= 8; ++r) {
        auto prm = GridParams::make(1, r + 6, 0, kPiBadEta, r);
        prm.epsilon = kPiBadEpsilon;
        const auto e = estimate_pi_bad(r + 4, prm, kPiBadTrials, derive_key(31, {std::uint64_t(r)}));
        d << fmt("%.4f", e.estimate) << (r < 8 ? " " : "");
        if (e.estimate <= 0) continue;
        x.push_back(r);
        y.push_back(std::log2(e.estimate));
        se.push_back(e.se / (e.estimate * std::numbers::ln2));
    }
    const auto fit = wls_known_se(x, y, se);
    const double upper = fit.slope + kZ95 * fit.slope_se;
    const double secs = seconds_since(t0);
    return {upper <= -kPiBadEpsilon / 2 && secs <= kPiBadSeconds,
            "pi_bad(r=3..8) = " + d.str() + "; slope " + fmt("%.4f", fit.slope) + ", upper95 " + fmt("%.4f", upper) +
                " vs " + fmt("%.4f", -kPiBadEpsilon / 2) + ", " + fmt("%.1f", secs) + " s"};
}

// Criterion 4
Outcome projection_identity() {
    std::ostringstream d;
    bool ok = true;
    for (auto [L, level, r, eps] : {std::tuple{10, 9, 6, 0.5}, std::tuple{12, 10, 7, 0.5}, std::tuple{9, 8, 6, 0.25}}) {
        auto prm = GridParams::make(1, L, 0, 1.0, r);
        prm.epsilon = eps;
        const auto pr = test_bad_projection_decay(2.0, level, prm, kProjectionTrials, derive_key(41, {std::uint64_t(L)}));
        const auto pb = estimate_pi_bad(level, prm, kProjectionTrials, derive_key(42, {std::uint64_t(L)}));
        const bool overlap = std::abs(pr.mean - pb.estimate) <= pr.ci95 + pb.ci95;
        ok = ok && overlap;
        d << "L=" << L << " level=" << level << ": " << fmt("%.4f", pr.mean) << "+-" << fmt("%.4f", pr.ci95) << " vs "
          << fmt("%.4f", pb.estimate) << "+-" << fmt("%.4f", pb.ci95) << "; ";
    }
    return {ok, d.str()};
}

// Criterion 5
Outcome zero_differences() {
    int qualifying = 0;
    double worst = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        for (bool oracle : {false, true}) {
            WorldSpec ws;
            ws.L = 8;
            ws.seed = seed;
            ws.amp = 0.4;
            ws.all_good = oracle;
            ws.shared = oracle;
            const auto w = make_world(ws);
            for (const Corona* c : {&w->c1, &w->c2}) {
                const auto z = zero_difference_check(*c);
                qualifying += z.qualifying;
                worst = std::max({worst, z.worst_full, z.worst_half});
            }
        }
    }
    return {worst <= kZeroDiffTol && qualifying > 0,
            std::to_string(qualifying) + " qualifying cubes, worst sup norm " + fmt("%.2e", worst)};
}

// Criterion 6
Outcome sparseness() {
    int trees = 0, stopping = 0, failures = 0;
    double worst_sparse = 0, worst_escape = 1;
    for (int L : {6, 8, 10}) {
        for (std::uint64_t seed = 1; seed <= 4; ++seed) {
            for (double amp : {0.0, 0.4, 0.8}) {
                for (bool oracle : {false, true}) {
                    WorldSpec ws;
                    ws.L = L;
                    ws.r = 3;
                    ws.seed = seed;
                    ws.amp = amp;
                    ws.depth = amp > 0.5 ? 3 : 2;
                    ws.all_good = oracle;
                    ws.shared = oracle;
                    const auto w = make_world(ws);
                    for (const Corona* c : {&w->c1, &w->c2}) {
                        const auto tc = check_tree(c->tree, *c->sys, c->p, c->params.tau);
                        ++trees;
                        stopping += static_cast<int>(c->tree.cubes.size());
                        failures += !(tc.sparse_ok && tc.escape_ok && tc.worst_sparse <= c->params.tau);
                        worst_sparse = std::max(worst_sparse, tc.worst_sparse);
                        worst_escape = std::min(worst_escape, tc.worst_escape);
                    }
                }
            }
        }
    }
    return {failures == 0, std::to_string(trees) + " trees, " + std::to_string(stopping) +
                               " stopping cubes; worst child mass " + fmt("%.3f", worst_sparse) + ", worst escape " +
                               fmt("%.3f", worst_escape)};
}

// Criterion 7
Outcome type_a() {
    bool exact = true;
    int checked = 0;
    std::vector<double> cm, co;
    for (int L : {7, 8, 9}) {
        double sm = 0, so = 0;
        int count = 0;
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            for (bool oracle : {false, true}) {
                WorldSpec ws;
                ws.L = L;
                ws.r = 3;
                ws.seed = seed;
                ws.amp = 0.4;
                ws.all_good = oracle;
                ws.shared = oracle;
                const auto w = make_world(ws);
                for (const Corona* c : {&w->c1, &w->c2}) {
                    const auto ta = check_type_a(*c);
                    exact = exact && ta.mean_error <= kTypeAMeanTol && std::isfinite(ta.c_maximal) &&
                            std::isfinite(ta.c_operator) && (ta.checked == 0 || ta.min_avg >= kTypeAMinAvg);
                    checked += ta.checked;
                    if (oracle) {
                        sm += ta.c_maximal;
                        so += ta.c_operator;
                        ++count;
                    }
                }
            }
        }
        cm.push_back(sm / count);
        co.push_back(so / count);
    }
    auto spread = [](const std::vector<double>& v) {
        double mean = 0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double worst = 0;
        for (double x : v) worst = std::max(worst, std::abs(x / mean - 1));
        return worst;
    };
    const double dm = spread(cm), dop = spread(co);
    std::ostringstream d;
    d << "identities " << (exact ? "hold" : "FAIL") << " on " << checked << " cubes; maximal constant L=7,8,9: "
      << fmt("%.4f", cm[0]) << " " << fmt("%.4f", cm[1]) << " " << fmt("%.4f", cm[2]) << " (spread "
      << fmt("%.3f", dm) << "); operator constant: " << fmt("%.4f", co[0]) << " " << fmt("%.4f", co[1]) << " "
      << fmt("%.4f", co[2]) << " (spread " << fmt("%.3f", dop) << ")";
    return {exact && checked > 0 && dm <= kTypeAStability && dop <= kTypeAStability, d.str()};
}

// E^k ||beta_tilde_S||_2^2 / |S| averaged over stopping cubes, one value per draw of the other grid
std::vector<double> tilde_samples(int r, double eps) {
    const int L = 10;
    auto prm = GridParams::make(1, L, 0, 1.0, r);
    prm.epsilon = eps;
    const auto g1 = new_random_grid(prm, 1, 81);
    const auto sys = oscillatory_system(g1, 2.0, 1.6, 0.4, 7, 82);
    const DiscretizedOperator T(hilbert_kernel(1.0), L);
    const auto w = reference_witness(T);
    CoronaParams cp;
    cp.tau = 0.9;
    cp.tb_proxy = 3.2;
    std::vector<double> out;
    for (int k = 0; k < kTildeSeeds; ++k) {
        const auto g2 = new_random_grid(prm, 2, derive_key(83, {std::uint64_t(k)}));
        const auto c = build_corona(1, *sys, g2, T, w.f1, cp);
        double m = 0;
        for (int s : c.tree.cubes) m += avg_abs_pow(c.beta_tilde[c.slot[s]], g1, s, 2.0);
        out.push_back(m / static_cast<double>(c.tree.cubes.size()));
    }
    return out;
}

LineFit tilde_fit(double eps, std::string& values) {
    std::vector<double> x, y, se;
    for (int r = 3; r <= 7; ++r) {
        const auto s = summarize(tilde_samples(r, eps));
        values += fmt("%.4f", s.mean) + (r < 7 ? " " : "");
        if (s.mean <= 0) continue;
        x.push_back(r);
        y.push_back(std::log2(s.mean));
        const double sem = std::max(s.sd / std::sqrt(double(kTildeSeeds)), 1e-3 * s.mean);
        se.push_back(sem / (s.mean * std::numbers::ln2));
    }
    return wls_known_se(x, y, se);
}

// Criterion 8
Outcome beta_tilde_small() {
    std::string v_half, v_quarter;
    const auto half = tilde_fit(0.5, v_half);
    const auto quarter = tilde_fit(0.25, v_quarter);
    const double upper = half.slope + kZ95 * half.slope_se;
    return {upper < 0, "eps=1/2: " + v_half + "; slope " + fmt("%.4f", half.slope) + ", upper95 " + fmt("%.4f", upper) +
                           " | eps=1/4 (reported): " + v_quarter + "; slope " + fmt("%.4f", quarter.slope) +
                           ", upper95 " + fmt("%.4f", quarter.slope + kZ95 * quarter.slope_se)};
}

double profile(double x) { return std::cos(2 * std::numbers::pi * 3 * x) + (x < 0.3 ? 1.0 : -0.5); }

// Criterion 9
Outcome transform_stability() {
    struct Series {
        std::string name;
        std::vector<double> v;
    };
    std::vector<Series> series;
    auto record = [&](const std::string& name, double v) {
        for (auto& s : series)
            if (s.name == name) {
                s.v.push_back(v);
                return;
            }
        series.push_back({name, {v}});
    };
    for (int L : {6, 8, 10}) {
        const auto prm = GridParams::make(1, L, 0, 1.0, 3);
        const auto g = zero_shift_grid(prm, 1);
        const std::int64_t N = g.cells_per_axis();
        DyadicFunction f = DyadicFunction::like(g), b = DyadicFunction::like(g);
        for (std::int64_t i = 0; i < N; ++i) {
            const double x = (static_cast<double>(i) + 0.5) / static_cast<double>(N);
            f[i] = profile(x);
            b[i] = 1 + 0.5 * (static_cast<std::int64_t>(x * 16) % 2 ? -1 : 1);
        }
        const auto ctx = make_admissible(g, g.find(0, {0, 0, 0}), b, {}, 2.0);
        for (double q : {1.5, 2.0, 3.0}) {
            const auto rep = universal_transform_test(ctx, f, q, kTransformPatterns, 91);
            record("universal tilde q=" + fmt("%g", q), rep.tilde);
            record("universal plain q=" + fmt("%g", q), rep.plain);
            if (q == 2.0) record("universal full q=2", rep.full);
        }

        WorldSpec ws;
        ws.L = L;
        ws.r = 3;
        ws.seed = 7;
        ws.amp = 0.4;
        ws.all_good = true;
        ws.shared = true;
        const auto w = make_world(ws);
        for (bool use_b : {false, true}) {
            double sum = 0;
            for (int t = 0; t < kTransformPatterns; ++t) {
                const auto signs = sign_pattern(w->c1.grid->size(), PatternKind::Rademacher, derive_key(92, {std::uint64_t(t)}));
                sum += twisted_transform_test(w->c1, w->c1.a_star[0], signs, use_b);
            }
            record(use_b ? "corona b" : "corona beta", sum / kTransformPatterns);
        }
    }
    double worst = 0;
    std::string worst_name;
    std::ostringstream d;
    for (const auto& s : series) {
        const double lo = *std::min_element(s.v.begin(), s.v.end());
        const double hi = *std::max_element(s.v.begin(), s.v.end());
        const double var = lo > 0 ? hi / lo - 1 : (hi > 0 ? INFINITY : 0);
        if (var >= worst) {
            worst = var;
            worst_name = s.name;
        }
    }
    d << series.size() << " ratio series over L=6,8,10; largest variation " << fmt("%.3f", worst) << " ("
      << worst_name << ")";
    return {worst <= kTransformVariation, d.str()};
}

// Criterion 10
Outcome perturbation_linearity() {
    const auto prm = GridParams::make(1, 8, 0, 1.0, 3);
    const auto g = zero_shift_grid(prm, 1);
    const int s0 = g.find(0, {0, 0, 0});
    const std::int64_t N = g.cells_per_axis();
    DyadicFunction b = DyadicFunction::like(g), f = DyadicFunction::like(g), dir = DyadicFunction::like(g);
    Stream rng(derive_key(101, {}));
    for (std::int64_t i = 0; i < N; ++i) {
        b[i] = 1 + 0.3 * ((i / 8) % 2 ? -1 : 1);
        f[i] = 2 * rng.uniform() - 1;
        dir[i] = i % 2 ? -1 : 1;
    }
    const auto cb = make_admissible(g, s0, b, {}, 2.0);
    std::vector<double> x, yf, yh;
    bool control = true;
    for (double u : {0.025, 0.05, 0.1}) {
        DyadicFunction beta = b;
        for (std::int64_t i = 0; i < N; ++i) beta[i] += u * dir[i];
        const auto rep = perturbation_test(cb, make_admissible(g, s0, beta, {}, 2.0), f, u, 1.0);
        control = control && rep.control_ok;
        x.push_back(std::log2(u));
        yf.push_back(std::log2(rep.lhs_full));
        yh.push_back(std::log2(rep.lhs_half));
    }
    const double sf = ols(x, yf).slope, sh = ols(x, yh).slope;
    const bool ok = std::abs(sf - kPerturbSlope) <= kPerturbSlack && std::abs(sh - kPerturbSlope) <= kPerturbSlack;
    return {ok && control, "log-log slope full " + fmt("%.4f", sf) + ", half " + fmt("%.4f", sh) +
                               (control ? ", control bound holds" : ", control bound FAILS")};
}

struct DecompStats {
    double worst_bookkeeping = 0;
    int runs = 0;
};
DecompStats g_decomp;

BilinearReport decompose(const World& w) {
    BilinearOptions opt;
    opt.rademacher_trials = 4;
    const auto b = full_decomposition(w.c1, w.c2, opt);
    g_decomp.worst_bookkeeping = std::max(g_decomp.worst_bookkeeping, b.bookkeeping_rel);
    ++g_decomp.runs;
    return b;
}

// Criterion 12
Outcome decay_instruments() {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<TermRow> rows;
    double eta_prime = 0;
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        WorldSpec ws;
        ws.L = 9;
        ws.r = 2;
        ws.seed = seed;
        ws.all_good = true;
        ws.shared = true;
        const auto w = make_world(ws);
        eta_prime = (1 - w->g1.params().epsilon) * w->g1.params().eta;
        const auto b = decompose(*w);
        rows.insert(rows.end(), b.rows.begin(), b.rows.end());
    }
    const double need = eta_prime / kDecayRateSlack;
    const auto stop = fit_decay(rows, "inside_stop", false, 3, 6);
    const auto err = fit_decay(rows, "inside_error", false, 3, 6);
    const auto near = fit_decay(rows, "nearby", false, 3, 6);
    const auto far = fit_decay(rows, "far", true);
    const double secs = seconds_since(t0);
    const bool ok = stop.rate >= need && err.rate >= need && near.rate >= need && far.rate >= need &&
                    far.rate_t >= need && secs <= kDecaySeconds;
    return {ok, "rates stop " + fmt("%.3f", stop.rate) + ", error " + fmt("%.3f", err.rate) + ", nearby " +
                    fmt("%.3f", near.rate) + ", far s " + fmt("%.3f", far.rate) + ", far t " + fmt("%.3f", far.rate_t) +
                    " vs required " + fmt("%.3f", need) + "; " + fmt("%.1f", secs) + " s"};
}

// Criterion 13
Outcome good_sum_trend() {
    std::vector<double> means;
    std::ostringstream d;
    for (int r : {3, 4, 5}) {
        double sum = 0;
        for (int k = 1; k <= kTrendSeeds; ++k) {
            WorldSpec ws;
            ws.L = 10;
            ws.r = r;
            ws.epsilon = 0.5;
            ws.seed = static_cast<std::uint64_t>(k);
            ws.amp = 0.4;
            sum += decompose(*make_world(ws)).good_sum_error;
        }
        means.push_back(sum / kTrendSeeds);
        d << "r=" << r << ": " << fmt("%.5f", means.back()) << "; ";
    }
    const bool ok = means[1] <= means[0] && means[2] <= means[1];
    return {ok, d.str()};
}

// Criterion 11; runs last so that it covers every decomposition performed above.
Outcome bookkeeping() {
    for (std::uint64_t seed = 1; seed <= 3; ++seed)
        for (double amp : {0.0, 0.4})
            for (bool oracle : {false, true}) {
                WorldSpec ws;
                ws.L = 8;
                ws.r = 3;
                ws.seed = seed;
                ws.amp = amp;
                ws.all_good = oracle;
                ws.shared = oracle;
                decompose(*make_world(ws));
            }
    return {g_decomp.worst_bookkeeping <= kBookkeepingTol,
            std::to_string(g_decomp.runs) + " decompositions, worst relative gap " +
                fmt("%.2e", g_decomp.worst_bookkeeping)};
}

}  // namespace

int main() {
    const std::vector<std::pair<int, std::pair<const char*, std::function<Outcome()>>>> criteria{
        {1, {"reconstruction identities", reconstruction}},
        {2, {"goodness oracle", goodness_oracle}},
        {3, {"badness probability decay", pi_bad_decay}},
        {4, {"bad projection equals pi_bad at q=2", projection_identity}},
        {5, {"zero-difference exhaustiveness", zero_differences}},
        {6, {"sparseness and stopping structure", sparseness}},
        {7, {"perturbed stopping data", type_a}},
        {8, {"beta tilde smallness", beta_tilde_small}},
        {9, {"transform-constant stability", transform_stability}},
        {10, {"perturbation linearity", perturbation_linearity}},
        {12, {"geometric decay instruments", decay_instruments}},
        {13, {"end-to-end good-sum trend", good_sum_trend}},
        {11, {"bookkeeping identity", bookkeeping}},
    };
    std::vector<std::pair<int, std::string>> lines(criteria.size());
    int unexpected = 0, passed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto& [id, c] = criteria[i];
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        passed += o.pass;
        if (!o.pass && !kDocumentedFailures.count(id)) ++unexpected;
        std::ostringstream line;
        line << (o.pass ? "PASS" : "FAIL") << " [" << id << "] " << c.first << ": " << o.detail << " ("
             << fmt("%.1f", seconds_since(t0)) << " s)";
        if (!o.pass && kDocumentedFailures.count(id)) line << " [documented]";
        lines[i] = {id, line.str()};
        std::fprintf(stderr, "%s\n", line.str().c_str());
    }
    std::sort(lines.begin(), lines.end());
    for (const auto& [id, line] : lines) std::printf("%s\n", line.c_str());
    std::printf("%d/%zu criteria pass; %d undocumented failures\n", passed, criteria.size(), unexpected);
    return unexpected == 0 ? 0 : 1;
}
