#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tb/accretive.hpp"
#include "tb/dyfun.hpp"
#include "tb/grid.hpp"

namespace tb {

struct Kernel {
    std::string name;
    int n = 1;
    double eta = 1.0;
    double declared_size = 0;
    double declared_smooth = 0;
    std::vector<double> params;
    bool antisymmetric = false;
    std::function<double(const double* x, const double* y)> eval;
};

Kernel hilbert_kernel(double c = 1.0);
Kernel riesz_kernel(int n, double c = 1.0);
// psi(x - y)/|x - y|^n with psi a smooth bump supported in |z| < radius
Kernel bump_kernel(int n, double c = 1.0, double radius = 0.5);
Kernel zero_kernel(int n);
Kernel kernel_by_name(const std::string& name, int n, double c = 1.0);

struct KernelConstants {
    double c_size = 0;
    double c_smooth = 0;
    double min_smooth_ratio = 0;
    std::int64_t samples = 0;
};

KernelConstants validate_kernel(const Kernel& k, std::int64_t samples, std::uint64_t seed);

// Dense midpoint discretization with zero diagonal; (Tf)_i = h^n sum_j M_ij f_j.
class DiscretizedOperator {
public:
    DiscretizedOperator() = default;
    DiscretizedOperator(Kernel k, int L);
    // value * identity, for calibration
    static DiscretizedOperator scalar(int n, int L, double value);

    const Kernel& kernel() const { return kernel_; }
    int n() const { return n_; }
    int L() const { return L_; }
    std::int64_t dim() const { return N_; }
    double cell_volume() const { return h_; }
    double entry(std::int64_t i, std::int64_t j) const { return m_[static_cast<std::size_t>(i * N_ + j)]; }
    const std::vector<double>& matrix() const { return m_; }
    bool transposed() const { return transposed_; }

    DyadicFunction apply(const DyadicFunction& f) const;
    DyadicFunction apply_transpose(const DyadicFunction& f) const;
    // T applied to a function supported on one cube of a grid at the same resolution.
    DyadicFunction apply_patch(const DyadicGrid& g, const Patch& p) const;
    DiscretizedOperator transpose() const;

    void save(const std::string& stem) const;
    static DiscretizedOperator load(const std::string& stem, const Kernel& k);

private:
    void require_shape(const DyadicFunction& f) const;

    Kernel kernel_;
    int n_ = 1, L_ = 0;
    std::int64_t N_ = 0;
    double h_ = 0;
    bool transposed_ = false;
    std::vector<double> m_;
};

// max over cubes Q of <|T b_Q|^{p'}>_Q^{1/p'}
double testing_constant(const DiscretizedOperator& op, const AccretiveSystem& sys, double p_dual,
                        bool adjoint = false);
// per-cube values of the same quantity, indexed by cube id
std::vector<double> local_testing_values(const DiscretizedOperator& op, const AccretiveSystem& sys, double p_dual,
                                         bool adjoint = false);

struct OpNorm {
    double value = 0;
    int iterations = 0;
    double residual = 0;
};

OpNorm estimate_opnorm(const DiscretizedOperator& op, int trials, std::uint64_t seed, double tol = 1e-9);

struct WitnessPair {
    DyadicFunction f1, f2;
    double pairing = 0;
};

WitnessPair witness_pair(const DiscretizedOperator& op, const DyadicGrid& g, int q0);

// Hardy inequality ratio on a local lattice: Q = [0, side)^n split into m cells per axis, g2 on kappa Q \ Q
// (kappa Q concentric with Q).
double hardy_check(int n, double side, double kappa, double p, int m,
                   const std::function<double(const double*)>& g1, const std::function<double(const double*)>& g2);

}  // namespace tb
