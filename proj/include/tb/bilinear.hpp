#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tb/corona.hpp"

namespace tb {

enum class PairKind { Far, Diagonal, Nearby, Inside };
const char* pair_kind_name(PairKind k);

struct PairClass {
    int P = -1, Q = -1;
    PairKind kind = PairKind::Far;
    int s = 0;         // level(Q) - level(P)
    int t = 0;         // Far only: smallest t >= 1 with dist(P, Q) < 2^t l(P)
    int child = -1;    // Inside only: the child of P containing Q
    double dist = 0;   // Euclidean distance between the cubes, in units of l(P)
};

// P from the grid gp, Q from gq, level(Q) >= level(P). Throws InvariantError when the pair fits no class
// (for instance a small cube straddling the boundary of P).
PairClass classify_pair(const DyadicGrid& gp, int P, const DyadicGrid& gq, int Q, int r);

// All pairs of G(big) x G(small) with level(Q) >= level(P), or level(Q) > level(P) when strict.
std::vector<PairClass> classify_pairs(const Corona& big, const Corona& small, bool strict);

struct PairCounts {
    std::int64_t far = 0, diagonal = 0, nearby = 0, inside = 0, eligible = 0;
    std::int64_t total() const { return far + diagonal + nearby + inside; }
};
PairCounts count_pairs(const std::vector<PairClass>& pairs);

struct TermRow {
    std::string term;
    int s = 0, t = 0;
    double value = 0;
    double bound = 0;  // summed bound instrument
    double ratio = 0;  // value / bound, 0 when the bound vanishes
};

// One triangular half: big cubes P, small cubes Q with l(Q) <= l(P).
struct HalfReport {
    PairCounts counts;
    double inside_left = 0;   // sum over S with parent in G of <f>_S <T beta_S, Delta_Q f> over Q inside the parent
    double inside_para = 0, inside_stop = 0, inside_error = 0;
    double inside_B = 0;      // sum over S of B_S = para - stop + error
    double nearby_left = 0;
    double nearby = 0;
    double far = 0;
    double diagonal = 0;      // beta version, enters the bookkeeping
    double diagonal_b = 0;    // Delta^b on the big side
    double total = 0;         // classified sum entering the bookkeeping

    double split_error = 0;        // max |para - stop + error - <T tilde Delta_P f, Delta_Q f>| over Inside pairs
    double max_eps_over_lambda = 0;
    double per_S_constant = 0;     // max (|left_S| + |B_S|) / ((T_loc + upsilon1 TB) |S|)
    double worst_stop_ratio = 0, worst_error_ratio = 0, worst_nearby_ratio = 0;
    double worst_far_ratio = 0, worst_diagonal_ratio = 0;

    double back2b_value = 0;       // sum over Diagonal pairs of <T (Delta^beta - Delta^b) f, Delta_Q f>
    double back2b_instrument = 0;  // Rademacher estimate of the Hoelder bound, summed over s
    double back2b_normalized = 0;  // back2b_value / (r upsilon1 TB |Q0|)

    std::map<int, double> nearby_partial;  // cumulative nearby |pair| sums by s
    std::vector<TermRow> rows;
};

struct BilinearOptions {
    int rademacher_trials = 16;
    std::uint64_t seed = 0;
};

struct BilinearReport {
    HalfReport lower, upper;  // lower: P in G1; upper: P in G2 with l(Q) < l(P), operator transposed
    double classified_total = 0;
    double double_good_sum = 0;  // <T F1, F2> with F_j the sum of Delta_P f_j over G_j
    double bookkeeping_rel = 0;
    double pairing = 0;          // <T f1, f2>
    double good_sum_error = 0;   // |pairing - double_good_sum|
    std::vector<TermRow> rows;   // both halves merged by (term, s, t)
};

HalfReport bilinear_half(const Corona& big, const Corona& small, bool strict, const BilinearOptions& opt);

// Throws InvariantError("bookkeeping identity") when the classified total misses <T F1, F2> by more than 1e-9
// relative.
BilinearReport full_decomposition(const Corona& c1, const Corona& c2, const BilinearOptions& opt = {});

struct DecayFit {
    double rate = 0;      // fitted -log2 ratio per unit step
    double rate_t = 0;    // second rate for joint (s, t) fits
    int points = 0;
};
// Log-linear fit of the positive values of one term against s (or against s and t when joint).
DecayFit fit_decay(const std::vector<TermRow>& rows, const std::string& term, bool joint = false, int s_min = 0,
                   int s_max = 1 << 30);

std::string rows_csv(const std::vector<TermRow>& rows);
std::string bilinear_json(const BilinearReport& rep);

}  // namespace tb
