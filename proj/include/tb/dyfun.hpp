#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tb/grid.hpp"

namespace tb {

// Piecewise constant on the 2^{Ln} finest cells of [0,1)^n, row-major.
class DyadicFunction {
public:
    DyadicFunction() = default;
    DyadicFunction(int n, int L);
    DyadicFunction(int n, int L, std::vector<double> values);

    static DyadicFunction constant(int n, int L, double c);
    static DyadicFunction like(const DyadicGrid& g) { return DyadicFunction(g.n(), g.L()); }

    int n() const { return n_; }
    int L() const { return L_; }
    std::int64_t size() const { return static_cast<std::int64_t>(v_.size()); }
    double cell_volume() const;

    double& operator[](std::int64_t i) { return v_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return v_[static_cast<std::size_t>(i)]; }
    const std::vector<double>& values() const { return v_; }
    std::vector<double>& values() { return v_; }

    DyadicFunction& operator+=(const DyadicFunction& o);
    DyadicFunction& operator-=(const DyadicFunction& o);
    DyadicFunction& operator*=(double c);
    friend DyadicFunction operator+(DyadicFunction a, const DyadicFunction& b) { return a += b; }
    friend DyadicFunction operator-(DyadicFunction a, const DyadicFunction& b) { return a -= b; }
    friend DyadicFunction operator*(double c, DyadicFunction a) { return a *= c; }

    bool same_shape(const DyadicFunction& o) const { return n_ == o.n_ && L_ == o.L_; }
    void require_finite() const;

private:
    int n_ = 1;
    int L_ = 0;
    std::vector<double> v_;
};

// Values of a function on the clipped box of one cube, in for_each_cell order.
struct Patch {
    int cube = -1;
    std::vector<double> v;
};

void require_compatible(const DyadicFunction& f, const DyadicGrid& g);

double sum_over(const DyadicFunction& f, const DyadicGrid& g, int q);
double avg(const DyadicFunction& f, const DyadicGrid& g, int q);
double avg_abs_pow(const DyadicFunction& f, const DyadicGrid& g, int q, double p);
double min_over(const DyadicFunction& f, const DyadicGrid& g, int q);
// Sums over the clipped box of every cube of the grid, computed bottom-up.
std::vector<double> cube_sums(const DyadicFunction& f, const DyadicGrid& g);
std::vector<double> cube_averages(const DyadicFunction& f, const DyadicGrid& g);

Patch restrict_to(const DyadicFunction& f, const DyadicGrid& g, int q);
void add_patch(DyadicFunction& f, const DyadicGrid& g, const Patch& p, double scale = 1.0);
DyadicFunction indicator(const DyadicGrid& g, int q);

// D_Q f = sum over children Q' of (<f>_{Q'} - <f>_Q) 1_{Q'}.
Patch martingale_diff_patch(const DyadicFunction& f, const DyadicGrid& g, int q);
Patch martingale_diff_patch(const std::vector<double>& averages, const DyadicGrid& g, int q);
DyadicFunction martingale_diff(const DyadicFunction& f, const DyadicGrid& g, int q);
DyadicFunction top_part(const DyadicFunction& f, const DyadicGrid& g);
// sum over cubes of level < L with keep(id) of D_Q f
DyadicFunction difference_sum(const DyadicFunction& f, const DyadicGrid& g, const std::function<bool(int)>& keep);
DyadicFunction martingale_transform(const DyadicFunction& f, const DyadicGrid& g, const std::vector<double>& signs);

DyadicFunction project_bad(const DyadicFunction& f, const DyadicGrid& gj, const DyadicGrid& gk,
                           const GridParams& params);
DyadicFunction project_good(const DyadicFunction& f, const DyadicGrid& gj, const DyadicGrid& gk,
                            const GridParams& params);

double lq_norm(const DyadicFunction& f, double q);
double inner(const DyadicFunction& f, const DyadicFunction& g);
double max_abs(const DyadicFunction& f);

// Sup of |averages| over the cubes of the grid containing the cell and their threefold
// dilates clipped to the domain; the finest level contributes |f| itself.
DyadicFunction maximal(const DyadicFunction& f, const DyadicGrid& g);
DyadicFunction maximal_bruteforce(const DyadicFunction& f, const DyadicGrid& g);
double bmo_norm(const DyadicFunction& f, const DyadicGrid& g);

struct ProjectionReport {
    double q = 2;
    double input_norm = 0;
    std::vector<double> samples;
    double mean = 0;
    double se = 0;
    double ci95 = 0;
};

// phi carries martingale differences only at `level` of a fixed grid; the other grid is resampled per trial.
ProjectionReport test_bad_projection_decay(double q, int level, const GridParams& params, std::int64_t trials,
                                           std::uint64_t seed);

void save_function(const DyadicFunction& f, const std::string& stem);
DyadicFunction load_function(const std::string& stem);

}  // namespace tb
