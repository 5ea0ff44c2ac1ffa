#include "tb/cli.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include <CLI11.hpp>

#include "tb/accretive.hpp"
#include "tb/bilinear.hpp"
#include "tb/czop.hpp"
#include "tb/dyfun.hpp"
#include "tb/errors.hpp"
#include "tb/rng.hpp"
#include "tb/stats.hpp"
#include "tb/twisted.hpp"

namespace tb {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::int64_t parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const long long x = std::stoll(v, &pos);
        if (pos == v.size()) return x;
    } catch (const std::exception&) {
    }
    throw ConfigError("config key '" + key + "' expects an integer, got '" + v + "'");
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        if (!v.empty() && v[0] != '-') {
            const unsigned long long x = std::stoull(v, &pos, 0);
            if (pos == v.size()) return x;
        }
    } catch (const std::exception&) {
    }
    throw ConfigError("config key '" + key + "' expects an unsigned integer, got '" + v + "'");
}

double parse_real(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos == v.size() && std::isfinite(x)) return x;
    } catch (const std::exception&) {
    }
    throw ConfigError("config key '" + key + "' expects a real number, got '" + v + "'");
}

int parse_small(const std::string& key, const std::string& v) {
    const auto x = parse_int(key, v);
    if (x < -1000000 || x > 1000000) throw ConfigError("config key '" + key + "' is out of range");
    return static_cast<int>(x);
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> m = [] {
        std::map<std::string, Setter> s;
        auto i = [&](const char* k, int ExperimentConfig::*f) {
            s[k] = [f](ExperimentConfig& c, const std::string& key, const std::string& v) { c.*f = parse_small(key, v); };
        };
        auto d = [&](const char* k, double ExperimentConfig::*f) {
            s[k] = [f](ExperimentConfig& c, const std::string& key, const std::string& v) { c.*f = parse_real(key, v); };
        };
        auto t = [&](const char* k, std::string ExperimentConfig::*f) {
            s[k] = [f](ExperimentConfig& c, const std::string&, const std::string& v) { c.*f = v; };
        };
        i("n", &ExperimentConfig::n);
        i("L", &ExperimentConfig::L);
        i("top_level", &ExperimentConfig::top_level);
        d("eta", &ExperimentConfig::eta);
        i("r", &ExperimentConfig::r);
        d("epsilon", &ExperimentConfig::epsilon);
        d("p1", &ExperimentConfig::p1);
        d("p2", &ExperimentConfig::p2);
        d("delta", &ExperimentConfig::delta);
        d("tau", &ExperimentConfig::tau);
        d("Lambda", &ExperimentConfig::Lambda);
        d("upsilon1", &ExperimentConfig::upsilon1);
        d("tb_proxy", &ExperimentConfig::tb_proxy);
        t("kernel", &ExperimentConfig::kernel);
        d("kernel_c", &ExperimentConfig::kernel_c);
        t("system", &ExperimentConfig::system);
        d("system_A", &ExperimentConfig::system_A);
        d("system_amp", &ExperimentConfig::system_amp);
        i("system_depth", &ExperimentConfig::system_depth);
        t("goodness", &ExperimentConfig::goodness);
        t("grids", &ExperimentConfig::grids);
        s["seed"] = [](ExperimentConfig& c, const std::string& key, const std::string& v) { c.seed = parse_u64(key, v); };
        i("seeds", &ExperimentConfig::seeds);
        s["trials"] = [](ExperimentConfig& c, const std::string& key, const std::string& v) {
            c.trials = parse_int(key, v);
        };
        i("patterns", &ExperimentConfig::patterns);
        i("rademacher", &ExperimentConfig::rademacher);
        i("r_min", &ExperimentConfig::r_min);
        i("r_max", &ExperimentConfig::r_max);
        t("out", &ExperimentConfig::out);
        return s;
    }();
    return m;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

struct World {
    GridParams prm;
    DyadicGrid g1, g2;
    SystemPtr s1, s2;
    DiscretizedOperator T, Tt;
    WitnessPair w;
    Corona c1, c2;
};

SystemPtr make_system(const ExperimentConfig& cfg, const DyadicGrid& g, double p, int j) {
    if (cfg.system == "trivial") return trivial_system(g, p);
    return oscillatory_system(g, p, cfg.system_A, cfg.system_amp, cfg.system_depth,
                              derive_key(cfg.seed, {0x737973ULL, static_cast<std::uint64_t>(j)}));
}

std::unique_ptr<World> build_world(const ExperimentConfig& cfg, bool coronas) {
    if (cfg.n * cfg.L > 12) throw ConfigError("dense operators need n * L <= 12");
    if (cfg.top_level > 1 || cfg.L < 3) throw ConfigError("the reference cube needs top_level <= 1 and L >= 3");
    auto w = std::make_unique<World>();
    w->prm = cfg.grid_params();
    w->g1 = new_random_grid(w->prm, 1, cfg.seed);
    w->g2 = cfg.grids == "shared" ? DyadicGrid(w->prm, 2, w->g1.omega()) : new_random_grid(w->prm, 2, cfg.seed);
    w->s1 = make_system(cfg, w->g1, cfg.p1, 1);
    w->s2 = make_system(cfg, w->g2, cfg.p2, 2);
    w->T = DiscretizedOperator(kernel_by_name(cfg.kernel, cfg.n, cfg.kernel_c), cfg.L);
    w->Tt = w->T.transpose();
    w->w = reference_witness(w->T);
    if (coronas) {
        const auto cp = cfg.corona_params();
        w->c1 = build_corona(1, *w->s1, w->g2, w->T, w->w.f1, cp);
        w->c2 = build_corona(2, *w->s2, w->g1, w->Tt, w->w.f2, cp);
    }
    return w;
}

void cmd_pi_bad(const ExperimentConfig& cfg, Report& rep) {
    if (cfg.trials < 100) throw ConfigError("pi-bad needs trials >= 100");
    std::ostringstream csv;
    csv << "r,level,L,trials,bad,estimate,se,ci95\n";
    std::vector<double> x, y, se;
    for (int r = cfg.r_min; r <= cfg.r_max; ++r) {
        GridParams prm = cfg.grid_params();
        prm.r = r;
        const int level = cfg.top_level + r + 4;
        prm.L = level + 2;
        const auto e = estimate_pi_bad(level, prm, cfg.trials, derive_key(cfg.seed, {0x7069ULL, std::uint64_t(r)}));
        csv << r << ',' << level << ',' << prm.L << ',' << e.trials << ',' << e.bad << ',' << fmt(e.estimate) << ','
            << fmt(e.se) << ',' << fmt(e.ci95) << '\n';
        rep.check("pi_bad in [0, 1]", e.estimate >= 0 && e.estimate <= 1);
        if (e.estimate > 0) {
            x.push_back(r);
            y.push_back(std::log2(e.estimate));
            se.push_back(e.se / (e.estimate * std::log(2.0)));
        }
    }
    rep.table("pi_bad.csv", csv.str());
    const double eps = cfg.grid_params().epsilon;
    rep.scalar("estimate_pi_bad", "epsilon", eps);
    if (x.size() >= 2) {
        const auto fit = wls_known_se(x, y, se);
        rep.scalar("estimate_pi_bad", "slope", fit.slope);
        rep.scalar("estimate_pi_bad", "slope_se", fit.slope_se);
        rep.scalar("estimate_pi_bad", "slope_upper95", fit.slope + 1.96 * fit.slope_se);
        rep.scalar("estimate_pi_bad", "claimed_slope", -eps / 2);
    }
}

void cmd_projection(const ExperimentConfig& cfg, Report& rep) {
    if (cfg.trials < 100) throw ConfigError("projection needs trials >= 100");
    const GridParams prm = cfg.grid_params();
    std::ostringstream csv;
    csv << "level,q,mean,ci95,pi_bad,pi_ci95,overlap\n";
    for (int level = cfg.top_level + cfg.r + 1; level < cfg.L; ++level) {
        const auto pr = test_bad_projection_decay(2.0, level, prm, cfg.trials, derive_key(cfg.seed, {0x70726fULL}));
        const auto pb = estimate_pi_bad(level, prm, cfg.trials, derive_key(cfg.seed, {0x7069ULL, 0x70726fULL}));
        const bool overlap = std::abs(pr.mean - pb.estimate) <= pr.ci95 + pb.ci95;
        csv << level << ",2," << fmt(pr.mean) << ',' << fmt(pr.ci95) << ',' << fmt(pb.estimate) << ','
            << fmt(pb.ci95) << ',' << (overlap ? 1 : 0) << '\n';
        const std::string tag = "level_" + std::to_string(level);
        rep.scalar("test_bad_projection_decay", tag + "_mean", pr.mean);
        rep.scalar("estimate_pi_bad", tag, pb.estimate);
    }
    rep.table("projection.csv", csv.str());
}

void corona_checks(const Corona& c, Report& rep, std::ostringstream& csv) {
    const std::string j = std::to_string(c.j);
    auto row = [&](const std::string& op, const std::string& name, double v) {
        rep.scalar(op, name + "_" + j, v);
        csv << c.j << ',' << op << ',' << name << ',' << fmt(v) << '\n';
    };
    row("build_corona", "t_loc", c.t_loc);
    row("build_corona", "tb_proxy", c.tb_proxy);
    row("build_corona", "stopping_cubes", static_cast<double>(c.tree.cubes.size()));
    row("build_corona", "good_cubes", static_cast<double>(c.G().size()));
    row("truncate", "B_measure", c.measure(c.B));
    row("select_f", "f_diff_l2", c.f_diff_l2);
    for (const auto& w : c.tree.warnings) rep.warn("corona " + j + ": " + w);

    const auto tc = check_tree(c.tree, *c.sys, c.p, c.params.tau);
    row("check_tree", "worst_sparse", tc.worst_sparse);
    row("check_tree", "worst_escape", tc.worst_escape);
    rep.check("sparseness (corona " + j + ")", tc.sparse_ok);
    rep.check("escape set (corona " + j + ")", tc.escape_ok);

    const auto ta = check_type_a(c);
    row("check_type_a", "mean_error", ta.mean_error);
    row("check_type_a", "min_avg", ta.min_avg);
    row("check_type_a", "c_maximal", ta.c_maximal);
    row("check_type_a", "c_operator", ta.c_operator);
    rep.check("beta mean one (corona " + j + ")", ta.mean_error <= 1e-12);
    rep.check("beta averages at least 1/4 (corona " + j + ")", ta.checked == 0 || ta.min_avg >= 0.25);

    const auto z = zero_difference_check(c);
    row("zero_difference_check", "worst_full", z.worst_full);
    row("zero_difference_check", "worst_half", z.worst_half);
    rep.check("zero differences (corona " + j + ")", z.worst_full <= 1e-12 && z.worst_half <= 1e-12);

    const int cv = coincide_violations(c);
    row("coincide_violations", "count", cv);
    rep.check("tree parents coincide (corona " + j + ")", cv == 0);

    const auto rp = representation_check(c);
    row("representation_check", "rel_l2", rp.rel_l2);
    row("representation_check", "max_cell", rp.max_cell);
    row("representation_check", "phi_const", rp.phi_const);
    rep.check("representation formula (corona " + j + ")", rp.rel_l2 <= 1e-9);

    const auto lam = lambda_sweep(c);
    row("lambda_sweep", "worst_over_lambda", lam.worst_over_lambda);
    row("lambda_sweep", "good_only_gap", lam.good_only_gap);
}

void cmd_corona(const ExperimentConfig& cfg, Report& rep) {
    auto w = build_world(cfg, true);
    std::ostringstream csv;
    csv << "j,op,name,value\n";
    for (const Corona* c : {&w->c1, &w->c2}) {
        corona_checks(*c, rep, csv);
        rep.table("corona" + std::to_string(c->j) + ".json", export_corona(*c) + "\n");
    }
    rep.table("corona.csv", csv.str());
}

void cmd_transforms(const ExperimentConfig& cfg, Report& rep) {
    auto w = build_world(cfg, true);
    std::ostringstream csv;
    csv << "j,context,q,tilde,plain,full\n";
    for (const Corona* c : {&w->c1, &w->c2}) {
        const std::string j = std::to_string(c->j);
        int s0 = -1;
        for (int q : c->S())
            if (!c->covered[q]) {
                s0 = q;
                break;
            }
        if (s0 < 0) {
            rep.warn("corona " + j + " has no uncovered stopping cube; transform tests skipped");
            continue;
        }
        const auto pair = admissible_pair(*c, s0);
        for (double q : {1.5, 2.0, 3.0}) {
            for (int which = 0; which < 2; ++which) {
                const TwistedContext& ctx = which ? pair.b : pair.beta;
                const auto tr = universal_transform_test(ctx, c->f, q, cfg.patterns,
                                                         derive_key(cfg.seed, {0x7472ULL, std::uint64_t(c->j)}));
                csv << c->j << ',' << (which ? "b" : "beta") << ',' << q << ',' << fmt(tr.tilde) << ','
                    << fmt(tr.plain) << ',' << fmt(tr.full) << '\n';
                const std::string tag = std::string(which ? "b" : "beta") + "_q" + fmt(q) + "_" + j;
                rep.scalar("universal_transform_test", tag + "_tilde", tr.tilde);
                rep.scalar("universal_transform_test", tag + "_plain", tr.plain);
                rep.check("finite transform ratios (corona " + j + ")",
                          std::isfinite(tr.tilde) && std::isfinite(tr.plain) && std::isfinite(tr.full));
            }
        }
        const auto signs =
            sign_pattern(c->grid->size(), PatternKind::Rademacher, derive_key(cfg.seed, {0x7369ULL, std::uint64_t(c->j)}));
        rep.scalar("twisted_transform_test", "beta_" + j, twisted_transform_test(*c, c->a_star[0], signs));
        rep.scalar("twisted_transform_test", "b_" + j, twisted_transform_test(*c, c->a_star[0], signs, true));

        const double u = measured_closeness(pair.b, pair.beta);
        rep.scalar("measured_closeness", "upsilon_" + j, u);
        if (u > 0 && u < 0.125) {
            try {
                const auto pt = perturbation_test(pair.b, pair.beta, c->f, u, c->params.Lambda);
                rep.scalar("perturbation_test", "ratio_full_" + j, pt.ratio_full);
                rep.scalar("perturbation_test", "ratio_half_" + j, pt.ratio_half);
                rep.check("perturbation control (corona " + j + ")", pt.control_ok);
            } catch (const PreconditionError& e) {
                rep.warn(std::string("perturbation test skipped: ") + e.what());
            }
        } else {
            rep.warn("corona " + j + ": closeness " + fmt(u) + " outside (0, 1/8); perturbation test skipped");
        }
    }
    rep.table("transforms.csv", csv.str());
}

void cmd_operator(const ExperimentConfig& cfg, Report& rep) {
    auto w = build_world(cfg, false);
    const Kernel& k = w->T.kernel();
    std::ostringstream csv;
    csv << "op,name,value\n";
    auto row = [&](const std::string& op, const std::string& name, double v) {
        rep.scalar(op, name, v);
        csv << op << ',' << name << ',' << fmt(v) << '\n';
    };
    if (k.name != "zero") {
        const auto kc = validate_kernel(k, cfg.trials, derive_key(cfg.seed, {0x6b6572ULL}));
        row("validate_kernel", "c_size", kc.c_size);
        row("validate_kernel", "c_smooth", kc.c_smooth);
    }
    const auto cp = cfg.corona_params();
    row("testing_constant", "t_loc_1", testing_constant(w->T, *w->s1, cp.p_dual(1)));
    row("testing_constant", "t_loc_2", testing_constant(w->Tt, *w->s2, cp.p_dual(2)));
    const auto on = estimate_opnorm(w->T, 4, derive_key(cfg.seed, {0x6f70ULL}));
    row("estimate_opnorm", "tb_proxy", on.value);
    row("estimate_opnorm", "iterations", on.iterations);
    if (k.antisymmetric) {
        double worst = 0;
        const std::int64_t N = w->T.dim();
        for (std::int64_t i = 0; i < N; ++i)
            for (std::int64_t jj = 0; jj < i; ++jj) worst = std::max(worst, std::abs(w->T.entry(i, jj) + w->T.entry(jj, i)));
        row("DiscretizedOperator", "antisymmetry_defect", worst);
        rep.check("antisymmetric matrix", worst == 0.0);
    }
    rep.table("operator.csv", csv.str());
}

void cmd_decompose(const ExperimentConfig& cfg, Report& rep) {
    auto w = build_world(cfg, true);
    BilinearOptions opt;
    opt.rademacher_trials = cfg.rademacher;
    opt.seed = derive_key(cfg.seed, {0x626cULL});
    const auto b = full_decomposition(w->c1, w->c2, opt);
    rep.scalar("full_decomposition", "bookkeeping_rel", b.bookkeeping_rel);
    rep.scalar("full_decomposition", "double_good_sum", b.double_good_sum);
    rep.scalar("full_decomposition", "classified_total", b.classified_total);
    rep.scalar("full_decomposition", "pairing", b.pairing);
    rep.scalar("full_decomposition", "good_sum_error", b.good_sum_error);
    rep.check("bookkeeping identity", b.bookkeeping_rel <= 1e-9);
    rep.check("inside split identity", b.lower.split_error <= 1e-12 && b.upper.split_error <= 1e-12);
    rep.attach("full_decomposition", "terms", nlohmann::ordered_json::parse(bilinear_json(b)));
    for (const char* t : {"inside_stop", "inside_error", "nearby"}) {
        const auto f = fit_decay(b.rows, t, false, cfg.r + 1);
        rep.scalar("fit_decay", std::string(t) + "_rate", f.rate);
    }
    const auto far = fit_decay(b.rows, "far", true);
    rep.scalar("fit_decay", "far_rate_s", far.rate);
    rep.scalar("fit_decay", "far_rate_t", far.rate_t);
    rep.scalar("fit_decay", "eta_prime", (1 - cfg.grid_params().epsilon) * cfg.eta);
    rep.table("bilinear.csv", rows_csv(b.rows));
}

}  // namespace

GridParams ExperimentConfig::grid_params() const {
    GridParams p = GridParams::make(n, L, top_level, eta, r);
    if (epsilon > 0) p.epsilon = epsilon;
    return p;
}

CoronaParams ExperimentConfig::corona_params() const {
    CoronaParams c;
    c.p1 = p1;
    c.p2 = p2;
    c.delta = delta;
    c.tau = tau;
    c.Lambda = Lambda;
    c.upsilon1 = upsilon1;
    c.tb_proxy = tb_proxy;
    c.all_good = goodness == "all";
    return c;
}

void ExperimentConfig::validate() const {
    if (epsilon == 0 || epsilon > 0.5) throw ConfigError("epsilon must lie in (0, 1/2], or be negative for the default");
    grid_params().validate();
    corona_params().validate(n);
    if (kernel != "hilbert" && kernel != "riesz" && kernel != "bump" && kernel != "zero")
        throw ConfigError("unknown kernel '" + kernel + "'");
    if (system != "trivial" && system != "oscillatory") throw ConfigError("unknown system '" + system + "'");
    if (!(system_A >= 1)) throw ConfigError("system_A must be at least 1");
    if (goodness != "faithful" && goodness != "all") throw ConfigError("goodness must be 'faithful' or 'all'");
    if (grids != "independent" && grids != "shared") throw ConfigError("grids must be 'independent' or 'shared'");
    if (goodness == "all" && grids != "shared")
        throw ConfigError("goodness=all needs grids=shared so that small cubes never straddle big ones");
    if (seeds < 1) throw ConfigError("seeds must be positive");
    if (trials < 1) throw ConfigError("trials must be positive");
    if (patterns < 1) throw ConfigError("patterns must be positive");
    if (rademacher < 0) throw ConfigError("rademacher must be non-negative");
    if (r_min < 1 || r_max < r_min) throw ConfigError("need 1 <= r_min <= r_max");
    if (out.empty()) throw ConfigError("out must not be empty");
}

nlohmann::ordered_json ExperimentConfig::to_json() const {
    nlohmann::ordered_json j;
    j["n"] = n;
    j["L"] = L;
    j["top_level"] = top_level;
    j["eta"] = eta;
    j["r"] = r;
    j["epsilon"] = grid_params().epsilon;
    j["p1"] = p1;
    j["p2"] = p2;
    j["delta"] = delta;
    j["tau"] = tau;
    j["Lambda"] = Lambda;
    j["upsilon1"] = upsilon1;
    j["tb_proxy"] = tb_proxy;
    j["kernel"] = kernel;
    j["kernel_c"] = kernel_c;
    j["system"] = system;
    j["system_A"] = system_A;
    j["system_amp"] = system_amp;
    j["system_depth"] = system_depth;
    j["goodness"] = goodness;
    j["grids"] = grids;
    j["seed"] = seed;
    j["seeds"] = seeds;
    j["trials"] = trials;
    j["patterns"] = patterns;
    j["rademacher"] = rademacher;
    j["r_min"] = r_min;
    j["r_max"] = r_max;
    return j;
}

ExperimentConfig parse_config(const std::string& text, ExperimentConfig base) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        const auto it = setters().find(key);
        if (it == setters().end()) throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        if (val.empty()) throw ConfigError("config key '" + key + "' has no value");
        it->second(base, key, val);
    }
    return base;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

void run_subcommand(const std::string& name, const ExperimentConfig& cfg, Report& rep) {
    using Fn = void (*)(const ExperimentConfig&, Report&);
    static const std::map<std::string, Fn> table{{"pi-bad", cmd_pi_bad},       {"projection", cmd_projection},
                                                 {"corona", cmd_corona},       {"transforms", cmd_transforms},
                                                 {"operator", cmd_operator},   {"decompose", cmd_decompose}};
    if (name == "all") {
        for (const auto& s : subcommands())
            if (s != "all") run_subcommand(s, cfg, rep);
        return;
    }
    const auto it = table.find(name);
    if (it == table.end()) throw ConfigError("unknown subcommand '" + name + "'");
    const auto t0 = std::chrono::steady_clock::now();
    it->second(cfg, rep);
    rep.timing(name, seconds_since(t0));
}

ExperimentConfig resolve_config(const CliOverrides& o, const char* seed_env) {
    ExperimentConfig cfg = o.config_path ? load_config(*o.config_path) : ExperimentConfig{};
    if (o.seed) {
        cfg.seed = *o.seed;
    } else if (seed_env && *seed_env) {
        cfg.seed = parse_u64("SEED", seed_env);
    }
    if (o.out) cfg.out = *o.out;
    if (o.trials) cfg.trials = *o.trials;
    cfg.validate();
    return cfg;
}

int run_command(const std::string& name, const CliOverrides& o, std::ostream& out, std::ostream& err) {
    ExperimentConfig cfg;
    try {
        cfg = resolve_config(o, std::getenv("SEED"));
    } catch (const std::exception& e) {
        err << "config error: " << e.what() << '\n';
        return 2;
    }
    Report rep(name);
    rep.set_config(cfg.to_json());
    rep.set_seed(cfg.seed);
    for (const auto& w : cfg.grid_params().warnings()) rep.warn(w);
    int code = 0;
    try {
        run_subcommand(name, cfg, rep);
        code = rep.ok() ? 0 : 1;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return 2;
    } catch (const InvariantError& e) {
        rep.check(e.name, false, e.what());
        err << "invariant violated: " << e.what() << '\n';
        code = 1;
    } catch (const PreconditionError& e) {
        err << "precondition failed: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 3;
    }
    try {
        rep.write(cfg.out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 3;
    }
    if (!o.quiet) {
        for (const auto& [inv, ok] : rep.checks())
            if (!ok) out << "FAILED " << inv << '\n';
        out << name << ": " << (rep.ok() && code == 0 ? "ok" : "invariant failure") << ", report in " << cfg.out
            << "/report.json\n";
    }
    return code;
}

int cli_main(int argc, char** argv) {
    CLI::App app{"tbx: desk-scale experiments for the local Tb construction"};
    app.require_subcommand(1);
    CliOverrides o;
    std::string what;
    auto* run = app.add_subcommand("run", "run one experiment and write report.json plus CSV tables");
    run->add_option("experiment", what, "experiment name")->required()->check(CLI::IsMember(subcommands()));
    run->add_option_function<std::string>("--config", [&](const std::string& v) { o.config_path = v; },
                                          "key=value configuration file");
    run->add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& v) { o.seed = v; }, "master seed");
    run->add_option_function<std::string>("--out", [&](const std::string& v) { o.out = v; }, "output directory");
    run->add_option_function<std::int64_t>("--trials", [&](const std::int64_t& v) { o.trials = v; },
                                           "Monte Carlo trial override");
    run->add_flag("--quiet", o.quiet, "suppress the summary line");
    auto* defaults = app.add_subcommand("defaults", "print the default configuration");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }
    if (*defaults) {
        const auto j = ExperimentConfig{}.to_json();
        for (const auto& [k, v] : j.items()) std::cout << k << " = " << (v.is_string() ? v.get<std::string>() : v.dump()) << '\n';
        std::cout << "out = " << ExperimentConfig{}.out << '\n';
        return 0;
    }
    return run_command(what, o, std::cout, std::cerr);
}

}  // namespace tb
