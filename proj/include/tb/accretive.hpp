#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "tb/dyfun.hpp"
#include "tb/grid.hpp"

namespace tb {

// b_Q for every cube of one grid, generated lazily and exactly once per cube.
class AccretiveSystem {
public:
    enum class Kind { Trivial, Oscillatory, External };

    AccretiveSystem(const DyadicGrid& grid, Kind kind, double p, double A);
    AccretiveSystem(const AccretiveSystem&) = delete;
    AccretiveSystem& operator=(const AccretiveSystem&) = delete;

    const DyadicGrid& grid() const { return *grid_; }
    Kind kind() const { return kind_; }
    double p() const { return p_; }
    double A() const { return A_; }
    double amplitude() const { return amp_; }
    int depth() const { return depth_; }
    std::string describe() const;

    // Values of b_Q on the clipped box of Q.
    const Patch& b(int q) const;
    DyadicFunction b_function(int q) const;

    // Replaces b_Q; used for external systems and injected test cases.
    void set(int q, Patch patch);

private:
    friend std::shared_ptr<AccretiveSystem> oscillatory_system(const DyadicGrid&, double, double, double, int,
                                                               std::uint64_t);
    Patch generate(int q) const;

    const DyadicGrid* grid_;
    Kind kind_;
    double p_, A_;
    double amp_ = 0;
    int depth_ = 0;
    std::uint64_t seed_ = 0;
    std::unique_ptr<std::once_flag[]> once_;
    mutable std::vector<Patch> cache_;
    std::mutex override_mu_;
};

using SystemPtr = std::shared_ptr<AccretiveSystem>;

SystemPtr trivial_system(const DyadicGrid& grid, double p);
// b_Q = 1 + a h_Q, h_Q a random half-and-half +-1 pattern on the children of each depth-(d-1) descendant.
SystemPtr oscillatory_system(const DyadicGrid& grid, double p, double A, double amplitude, int depth,
                             std::uint64_t seed);

struct SystemValidation {
    bool ok = true;
    double worst_mean_error = 0;  // max over Q of |<b_Q>_Q - 1|
    double worst_norm_ratio = 0;  // max over Q of ||b_Q||_p / (A |Q|^{1/p})
    double worst_support = 0;     // reserved for external systems: mass found outside Q
    int failing_cube = -1;
    std::string failure;
};

SystemValidation validate_system(const AccretiveSystem& sys, double mean_tol = 1e-12);

// Directory of <cube name>.bin/.json functions and a manifest.json {p, A}. Missing cubes default to 1_Q.
SystemPtr load_system(const DyadicGrid& grid, const std::string& dir);
void save_system(const AccretiveSystem& sys, const std::string& dir, int max_level);

}  // namespace tb
