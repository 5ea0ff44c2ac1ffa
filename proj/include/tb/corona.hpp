#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tb/accretive.hpp"
#include "tb/czop.hpp"
#include "tb/dyfun.hpp"
#include "tb/grid.hpp"
#include "tb/twisted.hpp"

namespace tb {

struct CoronaParams {
    double p1 = 2, p2 = 2;
    double delta = 0.1;
    double tau = 0.9;
    double Lambda = 4;
    double upsilon1 = 0.05;
    // stand-in for the operator norm in Type A thresholds; negative means "estimate it"
    double tb_proxy = -1;
    // oracle configuration: every cube is declared good
    bool all_good = false;

    void validate(int n) const;
    double p(int j) const { return j == 1 ? p1 : p2; }
    // dual exponent of the other grid
    double p_dual(int j) const {
        const double pk = j == 1 ? p2 : p1;
        return pk / (pk - 1);
    }
};

// The reference cube [3/8, 5/8)^n in finest-cell units.
void q0_box(int n, int L, IVec& lo, IVec& hi);
// Level-2 cubes meeting the reference cube; all are unclipped.
std::vector<int> a_star_cubes(const DyadicGrid& g);
// f1 = indicator of the reference cube, f2 = sign(T f1) on it; independent of the grid shifts
WitnessPair reference_witness(const DiscretizedOperator& op);
// membership flags of the descendants of the given roots (roots included)
std::vector<std::uint8_t> descendants_of(const DyadicGrid& g, const std::vector<int>& roots);

enum StopReason : unsigned {
    kStopRoot = 1u,
    kStopMean = 2u,      // <b_S>_Q < 1/2
    kStopMaximal = 4u,   // <(M b_S)^p>_Q too large
    kStopOperator = 8u,  // <|T b_S|^{p'}>_Q too large
    kStopInfimum = 16u,  // inf_Q M(|b_S|^p) too large
};

struct StoppingTree {
    std::vector<int> cubes;        // stopping cubes, parents before children
    std::vector<int> parent;       // per cube id: smallest stopping cube containing it, -1 outside the roots
    std::vector<int> tree_parent;  // per stopping cube: enclosing stopping cube, -1 for roots
    std::vector<unsigned> reason;  // per cube id: StopReason bits, 0 for non-stopping cubes
    std::vector<int> finest;       // stopping cubes at the finest level (recursion halts there)
    std::vector<std::string> warnings;

    bool is_stopping(int q) const { return reason[q] != 0; }
    std::vector<int> children(int s) const;
};

struct StoppingThresholds {
    double p = 2, p_dual = 2;
    double A = 1;
    double delta = 0.1;
    double t_loc = 0;
};

// op is T for the first grid and its transpose for the second.
StoppingTree build_auxiliary_tree(const AccretiveSystem& sys, const DiscretizedOperator& op,
                                  const StoppingThresholds& th, const std::vector<int>& roots);

struct TreeChecks {
    double worst_sparse = 0;  // max over S of sum |S'| / |S| over stopping children
    int sparse_cube = -1;
    double worst_escape = 1;  // min over S of |S \ E_S| / |S|
    int escape_cube = -1;
    double escape_bound = 0;  // (2A)^{-p'}
    bool sparse_ok = true;
    bool escape_ok = true;
};

TreeChecks check_tree(const StoppingTree& tree, const AccretiveSystem& sys, double p, double tau);

struct SelectedF {
    DyadicFunction f;
    double diff_l2 = 0;  // ||f_tilde - f||_2
};

SelectedF select_f(const DyadicGrid& g, const std::vector<int>& a_star, const std::vector<std::uint8_t>& in_A,
                   const std::vector<std::uint8_t>& good, const DyadicFunction& f_tilde);

struct Perturbed {
    DyadicFunction beta, beta_tilde;
};

// beta_tilde_S = sum of D_Q b_S over bad Q in A below level L with stopping parent S
Perturbed perturb_b(const StoppingTree& tree, const AccretiveSystem& sys, const std::vector<std::uint8_t>& in_A,
                    const std::vector<std::uint8_t>& good, int s);

enum TypeBits : unsigned { kTypeA = 1u, kTypeB = 2u, kTypeC = 4u };

struct Corona {
    int j = 1;
    const DyadicGrid* grid = nullptr;
    const DyadicGrid* other = nullptr;
    const AccretiveSystem* sys = nullptr;
    const DiscretizedOperator* op = nullptr;  // T^j
    CoronaParams params;
    double p = 2, p_dual = 2;
    double t_loc = 0, tb_proxy = 0;

    std::vector<int> a_star;
    std::vector<std::uint8_t> in_A, good;
    DyadicFunction f_tilde, f;
    double f_diff_l2 = 0;

    StoppingTree tree;
    std::vector<int> slot;  // per cube id: index into the per-stopping-cube arrays, -1 otherwise
    std::vector<DyadicFunction> b_S, beta, beta_tilde;

    std::vector<unsigned> type;  // TypeBits per cube
    std::vector<int> B_A, B_B, B_C, B;
    std::vector<std::uint8_t> covered;  // contained in some B cube
    std::vector<std::uint8_t> in_B, in_G, in_R, in_S;
    std::vector<int> parent_S;  // smallest cube of the truncated tree containing the cube

    TwistedContext ctx_beta;   // truncated tree, beta functions
    TwistedContext ctx_b;      // truncated tree, b functions
    TwistedContext ctx_tilde;  // auxiliary tree, beta functions

    std::vector<int> G() const;
    std::vector<int> S() const;
    double measure(const std::vector<int>& cubes) const;
};

// f_tilde has |f_tilde| = 1 on the reference cube. Runs selection, tree, perturbation, types and truncation.
Corona build_corona(int j, const AccretiveSystem& sys, const DyadicGrid& other, const DiscretizedOperator& op,
                    const DyadicFunction& f_tilde, const CoronaParams& params);

void classify_types(Corona& c);
void truncate(Corona& c);

struct TypeAChecks {
    double mean_error = 0;   // max over S of |<beta_S>_S - 1|
    double norm_const = 0;   // max over S of <|beta_S|^p>_S / A^p
    double min_avg = 1e300;  // min of <beta_S>_Q over R cubes and their children
    int min_avg_cube = -1;
    double c_maximal = 0;    // max <(M beta_S)^p>_Q / (delta^{-1} A^p)
    double c_operator = 0;   // max <|T beta_S|^{p'}>_Q / (delta^{-1} T_loc^{p'} + upsilon1^{p'} TB^{p'})
    int checked = 0;
    bool ok = true;
};
TypeAChecks check_type_a(const Corona& c);

// number of cubes (R cubes and their children) whose truncated and auxiliary parents differ
int coincide_violations(const Corona& c);

struct ZeroDifference {
    int qualifying = 0;
    double worst_full = 0;
    double worst_half = 0;
    int worst_cube = -1;
};
ZeroDifference zero_difference_check(const Corona& c);

// Value on child q1 of q of the sum of tilde D_P f over P in G containing q with truncated parent s.
// Throws InvariantError when that sum is not constant on q1.
double lambda_constant(const Corona& c, int q, int q1, int s);

struct LambdaReport {
    int count = 0;
    double worst = 0;            // max |lambda|
    double worst_over_lambda = 0;  // max |lambda| / Lambda
    double good_only_gap = 0;    // max difference between the full and the good-only sums
};
LambdaReport lambda_sweep(const Corona& c);

struct RepresentationReport {
    double max_cell = 0;
    double rel_l2 = 0;
    double rel_lp = 0;
    double phi_norm_p = 0;   // ||phi||_p^p
    double phi_const = 0;    // ||phi||_p^p / (Lambda^p |B|), 0 when B is empty
    DyadicFunction phi;
};
RepresentationReport representation_check(const Corona& c);

// Admissible pair (b, beta) attached to a cube S0 of the truncated tree per the reduction to square functions.
struct AdmissiblePair {
    TwistedContext b, beta;
};
AdmissiblePair admissible_pair(const Corona& c, int s0);

// ||sum over G cubes inside q of coeff Delta_P f||_p / |q|^{1/p}; the b variant uses ctx_b.
double twisted_transform_test(const Corona& c, int q, const std::vector<double>& coeffs, bool use_b = false);

// JSON tree (cube names, types, criteria fired) plus beta functions when dir is not empty.
std::string export_corona(const Corona& c, const std::string& dir = "");

}  // namespace tb
