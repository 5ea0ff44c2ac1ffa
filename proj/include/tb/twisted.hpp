#pragma once

#include <cstdint>
#include <vector>

#include "tb/dyfun.hpp"
#include "tb/grid.hpp"

namespace tb {

// Parent selector plus the accretive function carried by each stopping (or terminal) cube.
class TwistedContext {
public:
    TwistedContext() = default;
    TwistedContext(const DyadicGrid& g, double p);

    const DyadicGrid& grid() const { return *grid_; }
    double p() const { return p_; }

    void set_parent(int q, int s) { parent_[q] = s; }
    int parent(int q) const { return parent_[q]; }
    const std::vector<int>& parents() const { return parent_; }

    void set_function(int s, DyadicFunction f);
    bool carries(int s) const { return slot_[s] >= 0; }
    const DyadicFunction& function(int s) const;
    // <function of s>_q
    double average(int s, int q) const;
    std::vector<int> carriers() const;

    // <f>_q / <function of parent(q)>_q; throws InvariantError naming q when the denominator vanishes
    double ratio(const std::vector<double>& favg, int q) const;
    // a child of q has a different stopping parent
    bool has_stopping_child(int q) const;

    // Cubes over which difference sums and square functions run.
    std::vector<int> family;
    // Top cube of an admissible collection, -1 for general stopping data.
    int root = -1;

private:
    const DyadicGrid* grid_ = nullptr;
    double p_ = 2;
    std::vector<int> parent_;
    std::vector<int> slot_;
    std::vector<DyadicFunction> funcs_;
    std::vector<std::vector<double>> avgs_;
};

// Delta_Q f: sum over children Q' of {<f>_{Q'}/<b_{Q'}>_{Q'} b_{Q'} - <f>_Q/<b_Q>_Q b_Q} 1_{Q'},
// with b_X the function of the stopping parent of X.
Patch twisted_diff(const TwistedContext& ctx, const std::vector<double>& favg, int q);
// tilde D_Q f: children with the parent of Q only, no multiplication by b.
Patch half_twisted_diff(const TwistedContext& ctx, const std::vector<double>& favg, int q);
// D_Q f: children with the parent of Q only, each carrying its ratio minus the ratio of Q.
Patch plain_twisted_diff(const TwistedContext& ctx, const std::vector<double>& favg, int q);
// |tilde D_Q f| + 1_Q when a child of Q is a stopping cube
Patch box_majorant(const TwistedContext& ctx, const std::vector<double>& favg, int q);

// Admissible collection on s0 with function b and terminal cubes carrying their own functions.
struct Terminal {
    int cube = -1;
    DyadicFunction b;
};
TwistedContext make_admissible(const DyadicGrid& g, int s0, DyadicFunction b, std::vector<Terminal> terminals,
                               double p);

struct Admissibility {
    double min_mean = 0;       // min over the family of |<b>_Q|, required >= 1/4
    double max_power_avg = 0;  // max over the family of <|b|^p>_Q
    bool ok = false;
};
Admissibility check_admissible(const TwistedContext& ctx);

enum class PatternKind { Rademacher, AllOnes, Alternating };
// one coefficient per cube id of the grid
std::vector<double> sign_pattern(int cubes, PatternKind kind, std::uint64_t seed);

struct TransformReport {
    double tilde = 0;  // max ratio for sum of eps tilde D
    double plain = 0;  // max ratio for sum of eps D
    double full = 0;   // max ratio for sum of eps Delta (computed for q = p only, else 0)
    int patterns = 0;
    double input_norm = 0;
};

// Random Rademacher patterns plus the all-ones and alternating patterns; ratios against ||f 1_{root}||_q.
TransformReport universal_transform_test(const TwistedContext& ctx, const DyadicFunction& f, double q, int trials,
                                         std::uint64_t seed);

// || sum over cubes of coeff[Q] Delta_Q f ||_p
double transform_norm(const TwistedContext& ctx, const DyadicFunction& f, const std::vector<int>& cubes,
                      const std::vector<double>& coeffs, double p);

struct PerturbationReport {
    double upsilon = 0;
    double lambda = 0;
    double lhs_full = 0;   // square function of (Delta^beta - Delta^b) f
    double lhs_half = 0;   // square function of (D^beta - D^b) f
    double rhs = 0;        // upsilon (||f 1_{S0}||_p + lambda |S0|^{1/p})
    double ratio_full = 0;
    double ratio_half = 0;
    double closeness = 0;  // max over family and terminals of (<|b - beta|^p>)^{1/p}
    double control_slack = 0;  // min over (Q, Q', k) of bound minus measured value
    bool control_ok = true;
    int control_checks = 0;
};

// Contexts must share the family and parent selector; throws PreconditionError when closeness,
// the average bound or upsilon < 1/8 fails, naming the worst cube.
PerturbationReport perturbation_test(const TwistedContext& ctx_b, const TwistedContext& ctx_beta,
                                     const DyadicFunction& f, double upsilon, double lambda_cap);

// (<|b - beta|^p>_X)^{1/p} maximized over the family and terminal cubes
double measured_closeness(const TwistedContext& ctx_b, const TwistedContext& ctx_beta);

}  // namespace tb
