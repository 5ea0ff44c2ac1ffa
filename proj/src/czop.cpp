#include "tb/czop.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "tb/errors.hpp"
#include "tb/parallel.hpp"
#include "tb/rng.hpp"

namespace tb {

namespace {

double euclid(const double* x, const double* y, int n) {
    double s = 0;
    for (int d = 0; d < n; ++d) s += (x[d] - y[d]) * (x[d] - y[d]);
    return std::sqrt(s);
}

}  // namespace

Kernel hilbert_kernel(double c) {
    Kernel k;
    k.name = "hilbert";
    k.n = 1;
    k.eta = 1.0;
    k.declared_size = std::abs(c);
    k.declared_smooth = 4 * std::abs(c);
    k.params = {c};
    k.antisymmetric = true;
    k.eval = [c](const double* x, const double* y) { return c / (x[0] - y[0]); };
    return k;
}

Kernel riesz_kernel(int n, double c) {
    Kernel k;
    k.name = "riesz";
    k.n = n;
    k.eta = 1.0;
    k.params = {c};
    k.antisymmetric = true;
    k.eval = [c, n](const double* x, const double* y) {
        const double r = euclid(x, y, n);
        return c * (x[0] - y[0]) / std::pow(r, n + 1);
    };
    return k;
}

Kernel bump_kernel(int n, double c, double radius) {
    Kernel k;
    k.name = "bump";
    k.n = n;
    k.eta = 1.0;
    k.params = {c, radius};
    k.eval = [c, n, radius](const double* x, const double* y) {
        const double r = euclid(x, y, n);
        const double t = r / radius;
        if (t >= 1.0) return 0.0;
        return c * std::exp(1.0 - 1.0 / (1.0 - t * t)) / std::pow(r, n);
    };
    return k;
}

Kernel zero_kernel(int n) {
    Kernel k;
    k.name = "zero";
    k.n = n;
    k.eta = 1.0;
    k.antisymmetric = true;
    k.eval = [](const double*, const double*) { return 0.0; };
    return k;
}

Kernel kernel_by_name(const std::string& name, int n, double c) {
    if (name == "hilbert") {
        if (n != 1) throw ConfigError("hilbert kernel requires n = 1");
        return hilbert_kernel(c);
    }
    if (name == "riesz") return riesz_kernel(n, c);
    if (name == "bump") return bump_kernel(n, c);
    if (name == "zero") return zero_kernel(n);
    throw ConfigError("unknown kernel '" + name + "'");
}

KernelConstants validate_kernel(const Kernel& k, std::int64_t samples, std::uint64_t seed) {
    KernelConstants out;
    out.samples = samples;
    out.min_smooth_ratio = std::numeric_limits<double>::infinity();
    Stream s(derive_key(seed, {0x6b65726eULL}));
    const int n = k.n;
    double x[kMaxDim], y[kMaxDim], xp[kMaxDim];
    for (std::int64_t i = 0; i < samples; ++i) {
        for (int d = 0; d < n; ++d) {
            x[d] = s.uniform();
            y[d] = s.uniform();
        }
        const double r = euclid(x, y, n);
        if (r == 0) continue;
        out.c_size = std::max(out.c_size, std::abs(k.eval(x, y)) * std::pow(r, n));
        // x' within |x - x'| < |x - y|/2 along a random direction
        double dir[kMaxDim], norm = 0;
        for (int d = 0; d < n; ++d) {
            dir[d] = 2 * s.uniform() - 1;
            norm += dir[d] * dir[d];
        }
        norm = std::sqrt(norm);
        if (norm == 0) continue;
        const double rho = (0.5 * r) * (0.001 + 0.998 * s.uniform());
        for (int d = 0; d < n; ++d) xp[d] = x[d] + rho * dir[d] / norm;
        const double diff = std::abs(k.eval(x, y) - k.eval(xp, y)) + std::abs(k.eval(y, x) - k.eval(y, xp));
        const double ratio = diff * std::pow(r, n + k.eta) / std::pow(rho, k.eta);
        out.c_smooth = std::max(out.c_smooth, ratio);
        out.min_smooth_ratio = std::min(out.min_smooth_ratio, ratio);
    }
    if (!std::isfinite(out.min_smooth_ratio)) out.min_smooth_ratio = 0;
    return out;
}

DiscretizedOperator::DiscretizedOperator(Kernel k, int L) : kernel_(std::move(k)), n_(kernel_.n), L_(L) {
    if (L < 1 || L * n_ > 13) throw ConfigError("operator resolution out of range (dense matrices only)");
    N_ = std::int64_t{1} << (L * n_);
    h_ = std::ldexp(1.0, -L * n_);
    m_.assign(static_cast<std::size_t>(N_ * N_), 0.0);
    const double cell = std::ldexp(1.0, -L);
    const std::int64_t mask = (std::int64_t{1} << L) - 1;
    auto center = [&](std::int64_t i, double* c) {
        for (int d = n_ - 1; d >= 0; --d) {
            c[d] = (static_cast<double>(i & mask) + 0.5) * cell;
            i >>= L;
        }
    };
    parallel_for(N_, [&](std::int64_t i) {
        double x[kMaxDim], y[kMaxDim];
        center(i, x);
        for (std::int64_t j = 0; j < N_; ++j) {
            if (j == i) continue;
            center(j, y);
            m_[static_cast<std::size_t>(i * N_ + j)] = kernel_.eval(x, y);
        }
    });
    if (kernel_.antisymmetric)
        for (std::int64_t i = 0; i < N_; ++i)
            for (std::int64_t j = i + 1; j < N_; ++j) m_[static_cast<std::size_t>(j * N_ + i)] = -m_[static_cast<std::size_t>(i * N_ + j)];
}

DiscretizedOperator DiscretizedOperator::scalar(int n, int L, double value) {
    DiscretizedOperator op(zero_kernel(n), L);
    op.kernel_.name = "scalar";
    op.kernel_.params = {value};
    op.kernel_.antisymmetric = false;
    for (std::int64_t i = 0; i < op.N_; ++i) op.m_[static_cast<std::size_t>(i * op.N_ + i)] = value / op.h_;
    return op;
}

void DiscretizedOperator::require_shape(const DyadicFunction& f) const {
    if (f.n() != n_ || f.L() != L_) throw PreconditionError("operator and function resolutions differ");
}

DyadicFunction DiscretizedOperator::apply(const DyadicFunction& f) const {
    require_shape(f);
    DyadicFunction out(n_, L_);
    parallel_for(N_, [&](std::int64_t i) {
        const double* row = &m_[static_cast<std::size_t>(i * N_)];
        double s = 0;
        for (std::int64_t j = 0; j < N_; ++j) s += row[j] * f[j];
        out[i] = s * h_;
    });
    return out;
}

DyadicFunction DiscretizedOperator::apply_transpose(const DyadicFunction& f) const {
    require_shape(f);
    DyadicFunction out(n_, L_);
    for (std::int64_t j = 0; j < N_; ++j) {
        const double fj = f[j] * h_;
        if (fj == 0) continue;
        const double* row = &m_[static_cast<std::size_t>(j * N_)];
        for (std::int64_t i = 0; i < N_; ++i) out[i] += row[i] * fj;
    }
    return out;
}

DyadicFunction DiscretizedOperator::apply_patch(const DyadicGrid& g, const Patch& p) const {
    if (g.n() != n_ || g.L() != L_) throw PreconditionError("operator and grid resolutions differ");
    std::vector<std::int64_t> idx(p.v.size());
    g.for_each_cell(p.cube, [&](std::int64_t i, std::int64_t l) { idx[l] = i; });
    DyadicFunction out(n_, L_);
    for (std::int64_t i = 0; i < N_; ++i) {
        const double* row = &m_[static_cast<std::size_t>(i * N_)];
        double s = 0;
        for (std::size_t l = 0; l < idx.size(); ++l) s += row[idx[l]] * p.v[l];
        out[i] = s * h_;
    }
    return out;
}

DiscretizedOperator DiscretizedOperator::transpose() const {
    DiscretizedOperator t = *this;
    for (std::int64_t i = 0; i < N_; ++i)
        for (std::int64_t j = 0; j < N_; ++j)
            t.m_[static_cast<std::size_t>(i * N_ + j)] = m_[static_cast<std::size_t>(j * N_ + i)];
    t.transposed_ = !transposed_;
    return t;
}

void DiscretizedOperator::save(const std::string& stem) const {
    std::ofstream bin(stem + ".bin", std::ios::binary);
    if (!bin) throw std::runtime_error("cannot write " + stem + ".bin");
    bin.write(reinterpret_cast<const char*>(m_.data()), static_cast<std::streamsize>(m_.size() * sizeof(double)));
    nlohmann::ordered_json j;
    j["kernel"] = kernel_.name;
    j["params"] = kernel_.params;
    j["L"] = L_;
    j["n"] = n_;
    j["transposed"] = transposed_;
    std::ofstream(stem + ".json") << j.dump(2) << "\n";
}

DiscretizedOperator DiscretizedOperator::load(const std::string& stem, const Kernel& k) {
    std::ifstream js(stem + ".json");
    if (!js) throw std::runtime_error("cannot read " + stem + ".json");
    const auto j = nlohmann::json::parse(js);
    if (j.at("kernel").get<std::string>() != k.name || j.at("n").get<int>() != k.n ||
        j.at("params").get<std::vector<double>>() != k.params)
        throw ConfigError("operator cache header does not match the requested kernel");
    DiscretizedOperator op;
    op.kernel_ = k;
    op.n_ = k.n;
    op.L_ = j.at("L").get<int>();
    op.N_ = std::int64_t{1} << (op.L_ * op.n_);
    op.h_ = std::ldexp(1.0, -op.L_ * op.n_);
    op.transposed_ = j.at("transposed").get<bool>();
    op.m_.resize(static_cast<std::size_t>(op.N_ * op.N_));
    std::ifstream bin(stem + ".bin", std::ios::binary);
    bin.read(reinterpret_cast<char*>(op.m_.data()), static_cast<std::streamsize>(op.m_.size() * sizeof(double)));
    if (bin.gcount() != static_cast<std::streamsize>(op.m_.size() * sizeof(double)))
        throw std::runtime_error(stem + ".bin is truncated");
    return op;
}

std::vector<double> local_testing_values(const DiscretizedOperator& op, const AccretiveSystem& sys, double p_dual,
                                         bool adjoint) {
    const DyadicGrid& g = sys.grid();
    const DiscretizedOperator* use = &op;
    DiscretizedOperator t;
    if (adjoint) {
        t = op.transpose();
        use = &t;
    }
    std::vector<double> vals(static_cast<std::size_t>(g.size()), 0.0);
    for (int q = 0; q < g.size(); ++q) {
        const DyadicFunction tb = use->apply_patch(g, sys.b(q));
        vals[q] = std::pow(avg_abs_pow(tb, g, q, p_dual), 1.0 / p_dual);
    }
    return vals;
}

double testing_constant(const DiscretizedOperator& op, const AccretiveSystem& sys, double p_dual, bool adjoint) {
    const auto v = local_testing_values(op, sys, p_dual, adjoint);
    return v.empty() ? 0.0 : *std::max_element(v.begin(), v.end());
}

OpNorm estimate_opnorm(const DiscretizedOperator& op, int trials, std::uint64_t seed, double tol) {
    OpNorm best;
    const std::int64_t N = op.dim();
    for (int t = 0; t < trials; ++t) {
        Stream s(derive_key(seed, {0x6f706eULL, static_cast<std::uint64_t>(t)}));
        DyadicFunction v(op.n(), op.L());
        for (auto& x : v.values()) x = 2 * s.uniform() - 1;
        double lambda = 0, resid = 0;
        int it = 0;
        for (; it < 200000; ++it) {
            double nv = std::sqrt(inner(v, v));
            if (nv == 0) break;
            v *= 1.0 / nv;
            const DyadicFunction w = op.apply_transpose(op.apply(v));
            lambda = inner(v, w);
            double r2 = 0;
            for (std::int64_t i = 0; i < N; ++i) r2 += (w[i] - lambda * v[i]) * (w[i] - lambda * v[i]);
            resid = std::sqrt(r2 * v.cell_volume());
            v = w;
            if (lambda <= 0 || resid <= tol * lambda) break;
        }
        const double sigma = std::sqrt(std::max(lambda, 0.0));
        if (sigma >= best.value) best = OpNorm{sigma, it, lambda > 0 ? resid / lambda : 0.0};
    }
    return best;
}

WitnessPair witness_pair(const DiscretizedOperator& op, const DyadicGrid& g, int q0) {
    WitnessPair w;
    w.f1 = indicator(g, q0);
    const DyadicFunction t = op.apply(w.f1);
    w.f2 = DyadicFunction::like(g);
    g.for_each_cell(q0, [&](std::int64_t i, std::int64_t) { w.f2[i] = t[i] >= 0 ? 1.0 : -1.0; });
    w.pairing = inner(t, w.f2);
    return w;
}

double hardy_check(int n, double side, double kappa, double p, int m,
                   const std::function<double(const double*)>& g1, const std::function<double(const double*)>& g2) {
    if (!(kappa > 1) || !(p > 1) || m < 1 || n < 1 || n > kMaxDim) throw PreconditionError("hardy_check: bad arguments");
    const double h = side / m;
    const int pad = static_cast<int>(std::lround((kappa - 1) * m / 2));
    const int M = m + 2 * pad;
    std::int64_t total = 1;
    for (int d = 0; d < n; ++d) total *= M;
    std::vector<double> v1, v2;
    std::vector<std::array<double, kMaxDim>> c1, c2;
    double n1 = 0, n2 = 0;
    const double vol = std::pow(h, n);
    const double pd = p / (p - 1);
    for (std::int64_t i = 0; i < total; ++i) {
        std::array<double, kMaxDim> x{};
        bool inside = true;
        std::int64_t rem = i;
        for (int d = 0; d < n; ++d) {
            const int k = static_cast<int>(rem % M) - pad;
            rem /= M;
            x[d] = (k + 0.5) * h;
            if (k < 0 || k >= m) inside = false;
        }
        if (inside) {
            const double a = g1(x.data());
            n1 += std::pow(std::abs(a), p) * vol;
            if (a != 0) v1.push_back(a), c1.push_back(x);
        } else {
            const double b = g2(x.data());
            n2 += std::pow(std::abs(b), pd) * vol;
            if (b != 0) v2.push_back(b), c2.push_back(x);
        }
    }
    n1 = std::pow(n1, 1 / p);
    n2 = std::pow(n2, 1 / pd);
    if (n1 == 0 || n2 == 0) throw PreconditionError("hardy_check: g1 and g2 must have nonzero norms");
    double lhs = 0;
    for (std::size_t a = 0; a < v1.size(); ++a)
        for (std::size_t b = 0; b < v2.size(); ++b)
            lhs += std::abs(v1[a] * v2[b]) / std::pow(euclid(c1[a].data(), c2[b].data(), n), n) * vol * vol;
    return lhs / (n1 * n2);
}

}  // namespace tb
