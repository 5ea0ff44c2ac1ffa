#include "tb/accretive.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "tb/errors.hpp"
#include "tb/rng.hpp"

namespace tb {

namespace {
constexpr std::uint64_t kPatternTag = 0x6f7363ULL;
}

AccretiveSystem::AccretiveSystem(const DyadicGrid& grid, Kind kind, double p, double A)
    : grid_(&grid), kind_(kind), p_(p), A_(A), once_(new std::once_flag[static_cast<std::size_t>(grid.size())]),
      cache_(static_cast<std::size_t>(grid.size())) {
    if (!(p > 1)) throw ConfigError("accretive system: p must exceed 1");
    if (!(A >= 1)) throw ConfigError("accretive system: A must be at least 1");
}

std::string AccretiveSystem::describe() const {
    std::ostringstream os;
    switch (kind_) {
        case Kind::Trivial: os << "trivial"; break;
        case Kind::Oscillatory: os << "oscillatory(a=" << amp_ << ",depth=" << depth_ << ")"; break;
        case Kind::External: os << "external"; break;
    }
    os << " p=" << p_ << " A=" << A_;
    return os.str();
}

const Patch& AccretiveSystem::b(int q) const {
    std::call_once(once_[q], [&] { cache_[q] = generate(q); });
    return cache_[q];
}

DyadicFunction AccretiveSystem::b_function(int q) const {
    DyadicFunction f = DyadicFunction::like(*grid_);
    add_patch(f, *grid_, b(q));
    return f;
}

void AccretiveSystem::set(int q, Patch patch) {
    if (patch.cube != q || static_cast<std::int64_t>(patch.v.size()) != grid_->cube(q).cells)
        throw PreconditionError("AccretiveSystem::set: patch does not match cube " + grid_->name(q));
    std::lock_guard<std::mutex> lock(override_mu_);
    bool stored = false;
    std::call_once(once_[q], [&] {
        cache_[q] = patch;
        stored = true;
    });
    if (!stored) cache_[q] = std::move(patch);
}

Patch AccretiveSystem::generate(int q) const {
    const DyadicGrid& g = *grid_;
    const CubeRec& c = g.cube(q);
    Patch out{q, std::vector<double>(static_cast<std::size_t>(c.cells), 1.0)};
    if (kind_ != Kind::Oscillatory || amp_ == 0.0) return out;
    const int d = std::min(depth_, g.L() - c.level);
    if (d <= 0) return out;
    const int rlevel = c.level + d - 1;
    const int kids = 1 << g.n();
    // sign per cell: +-1 from the split of the child containing it; 0 below clipped R
    std::unordered_map<int, double> child_sign;
    std::vector<int> level_r{q};
    for (int k = c.level; k < rlevel; ++k) {
        std::vector<int> next;
        for (int id : level_r)
            for (int i = 0; i < g.cube(id).nkids; ++i) next.push_back(g.cube(id).kids[i]);
        level_r.swap(next);
    }
    for (int rid : level_r) {
        const CubeRec& R = g.cube(rid);
        if (R.clipped || R.nkids != kids) continue;
        Stream s(derive_key(seed_, {kPatternTag, static_cast<std::uint64_t>(g.id()), static_cast<std::uint64_t>(q),
                                    static_cast<std::uint64_t>(rid)}));
        std::vector<int> perm(static_cast<std::size_t>(kids));
        std::iota(perm.begin(), perm.end(), 0);
        for (int i = kids - 1; i > 0; --i) std::swap(perm[i], perm[s() % static_cast<std::uint64_t>(i + 1)]);
        for (int i = 0; i < kids; ++i) child_sign[R.kids[perm[i]]] = i < kids / 2 ? 1.0 : -1.0;
    }
    g.for_each_cell(q, [&](std::int64_t cell, std::int64_t l) {
        const int kid = g.at_cell(rlevel + 1, g.unlinear(cell));
        auto it = child_sign.find(kid);
        if (it != child_sign.end()) out.v[l] = 1.0 + amp_ * it->second;
    });
    return out;
}

SystemPtr trivial_system(const DyadicGrid& grid, double p) {
    return std::make_shared<AccretiveSystem>(grid, AccretiveSystem::Kind::Trivial, p, 1.0);
}

SystemPtr oscillatory_system(const DyadicGrid& grid, double p, double A, double amplitude, int depth,
                             std::uint64_t seed) {
    if (!(amplitude >= 0) || amplitude >= 1) throw ConfigError("oscillation amplitude must lie in [0, 1)");
    if (depth < 1) throw ConfigError("oscillation depth must be at least 1");
    auto sys = std::make_shared<AccretiveSystem>(grid, AccretiveSystem::Kind::Oscillatory, p, A);
    sys->amp_ = amplitude;
    sys->depth_ = depth;
    sys->seed_ = seed;
    return sys;
}

SystemValidation validate_system(const AccretiveSystem& sys, double mean_tol) {
    const DyadicGrid& g = sys.grid();
    SystemValidation rep;
    for (int q = 0; q < g.size(); ++q) {
        const Patch& b = sys.b(q);
        const double cells = static_cast<double>(g.cube(q).cells);
        double s = 0, sp = 0;
        for (double x : b.v) {
            s += x;
            sp += std::pow(std::abs(x), sys.p());
        }
        const double mean_err = std::abs(s / cells - 1.0);
        const double ratio = std::pow(sp / cells, 1.0 / sys.p()) / sys.A();
        rep.worst_mean_error = std::max(rep.worst_mean_error, mean_err);
        rep.worst_norm_ratio = std::max(rep.worst_norm_ratio, ratio);
        if (rep.ok && mean_err > mean_tol) {
            rep.ok = false;
            rep.failing_cube = q;
            std::ostringstream os;
            os << "mean condition fails on " << g.name(q) << ": <b_Q>_Q = " << s / cells << ", required 1";
            rep.failure = os.str();
        }
        if (rep.ok && ratio > 1.0) {
            rep.ok = false;
            rep.failing_cube = q;
            std::ostringstream os;
            os << "norm condition fails on " << g.name(q) << ": ||b_Q||_p/|Q|^{1/p} = " << ratio * sys.A()
               << " > A = " << sys.A();
            rep.failure = os.str();
        }
    }
    return rep;
}

SystemPtr load_system(const DyadicGrid& grid, const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw ConfigError("external system: missing manifest.json in " + dir);
    const auto man = nlohmann::json::parse(mf);
    auto sys = std::make_shared<AccretiveSystem>(grid, AccretiveSystem::Kind::External, man.at("p").get<double>(),
                                                 man.at("A").get<double>());
    for (int q = 0; q < grid.size(); ++q) {
        const fs::path stem = fs::path(dir) / grid.name(q);
        if (!fs::exists(stem.string() + ".bin")) continue;
        const DyadicFunction f = load_function(stem.string());
        require_compatible(f, grid);
        Patch p = restrict_to(f, grid, q);
        double inside = 0, total = 0;
        for (double x : p.v) inside += std::abs(x);
        for (double x : f.values()) total += std::abs(x);
        if (total - inside > 1e-12 * std::max(1.0, total))
            throw ConfigError("external system: " + grid.name(q) + " is not supported on its cube");
        sys->set(q, std::move(p));
    }
    return sys;
}

void save_system(const AccretiveSystem& sys, const std::string& dir, int max_level) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const DyadicGrid& g = sys.grid();
    for (int q = 0; q < g.size() && g.cube(q).level <= max_level; ++q)
        save_function(sys.b_function(q), (fs::path(dir) / g.name(q)).string());
    nlohmann::ordered_json man;
    man["p"] = sys.p();
    man["A"] = sys.A();
    std::ofstream(fs::path(dir) / "manifest.json") << man.dump(2) << "\n";
}

}  // namespace tb
