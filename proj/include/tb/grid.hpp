#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace tb {

inline constexpr int kMaxDim = 3;
using IVec = std::array<std::int64_t, kMaxDim>;

struct GridParams {
    int n = 1;
    int L = 8;
    int top_level = 0;
    double eta = 1.0;
    int r = 4;
    double epsilon = 0.25;

    // epsilon = eta / (2 (eta + n))
    static GridParams make(int n, int L, int top_level, double eta, int r);

    void validate() const;
    std::vector<std::string> warnings() const;
};

struct Cube {
    int grid = 0;
    int level = 0;
    IVec index{};
    bool operator==(const Cube&) const = default;
};

struct CubeRec {
    int level = 0;
    IVec index{};
    IVec lo{}, hi{};    // unclipped corners in finest-cell units
    IVec clo{}, chi{};  // corners clipped to the base domain
    int parent = -1;
    std::array<int, 8> kids{};
    int nkids = 0;
    std::int64_t cells = 0;
    bool clipped = false;
};

class DyadicGrid {
public:
    DyadicGrid() = default;
    DyadicGrid(const GridParams& params, int grid_id, std::vector<IVec> omega);

    const GridParams& params() const { return prm_; }
    int id() const { return grid_id_; }
    int n() const { return prm_.n; }
    int L() const { return prm_.L; }
    int top() const { return prm_.top_level; }
    std::int64_t side_cells(int level) const { return std::int64_t{1} << (prm_.L - level); }
    std::int64_t cells_per_axis() const { return std::int64_t{1} << prm_.L; }
    std::int64_t total_cells() const;
    double cell_volume() const;

    const std::vector<IVec>& omega() const { return omega_; }
    std::int64_t shift(int level, int d) const { return shift_[level][d]; }

    int size() const { return static_cast<int>(cubes_.size()); }
    const CubeRec& cube(int id) const { return cubes_[id]; }
    Cube key(int id) const;
    std::string name(int id) const;
    int level_begin(int level) const { return level_base_[level - prm_.top_level]; }
    int level_end(int level) const { return level_base_[level - prm_.top_level + 1]; }

    int find(int level, const IVec& index) const;
    int at_cell(int level, const IVec& cell) const;
    int ancestor(int id, int level) const;
    bool contains(int outer, int inner) const;

    std::int64_t linear(const IVec& cell) const;
    IVec unlinear(std::int64_t idx) const;

    template <class F>
    void for_each_cell(int id, F&& f) const {
        const CubeRec& c = cubes_[id];
        const int n = prm_.n;
        IVec x = c.clo;
        std::int64_t local = 0;
        for (;;) {
            f(linear(x), local++);
            int d = n - 1;
            while (d >= 0) {
                if (++x[d] < c.chi[d]) break;
                x[d] = c.clo[d];
                --d;
            }
            if (d < 0) break;
        }
    }

private:
    GridParams prm_;
    int grid_id_ = 1;
    std::vector<IVec> omega_;               // omega_[j], j = 0..L
    std::vector<IVec> shift_;               // shift_[k], k = 0..L
    std::vector<int> level_base_;
    std::vector<IVec> mmin_, mext_;
    std::vector<CubeRec> cubes_;
};

DyadicGrid new_random_grid(const GridParams& params, int grid_id, std::uint64_t seed);
DyadicGrid zero_shift_grid(const GridParams& params, int grid_id);
// Grid whose shifts come from the stream keyed by (seed, grid_id, trial), as used by Monte Carlo loops.
DyadicGrid trial_grid(const GridParams& params, int grid_id, std::uint64_t seed, std::uint64_t trial);

// Exact sup-norm distance from closure(Q) to the boundary of P, in finest-cell units.
std::int64_t dist_to_boundary(const DyadicGrid& gq, int q, const DyadicGrid& gp, int p);
std::int64_t box_dist_to_boundary(const IVec& qlo, const IVec& qhi, const IVec& plo, const IVec& phi, int n);
// Sup-norm gap between two boxes (0 when they touch or overlap).
std::int64_t box_gap(const IVec& alo, const IVec& ahi, const IVec& blo, const IVec& bhi, int n);

struct GoodnessVerdict {
    int cube = -1;
    bool bad = false;
    std::optional<int> witness;
    int cap_level = 0;
};

bool within_bad_distance(std::int64_t d_cells, int qlevel, int plevel, double eps, int L);

GoodnessVerdict classify_goodness(const DyadicGrid& gj, int q, const DyadicGrid& other, const GridParams& params);
GoodnessVerdict classify_goodness_bruteforce(const DyadicGrid& gj, int q, const DyadicGrid& other,
                                             const GridParams& params);
std::vector<std::uint8_t> goodness_table(const DyadicGrid& gj, const DyadicGrid& other, const GridParams& params);

struct PiBadEstimate {
    double estimate = 0;
    double ci95 = 0;
    double se = 0;
    std::int64_t bad = 0;
    std::int64_t trials = 0;
};

PiBadEstimate estimate_pi_bad(int level, const GridParams& params, std::int64_t trials, std::uint64_t seed);

struct LevelAgreement {
    PiBadEstimate a, b;
    double z = 0;
    bool agree = false;
};

LevelAgreement compare_levels(int level_a, int level_b, const GridParams& params, std::int64_t trials,
                              std::uint64_t seed);

}  // namespace tb
