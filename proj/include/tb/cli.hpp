#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tb/corona.hpp"
#include "tb/grid.hpp"
#include "tb/report.hpp"

namespace tb {

struct ExperimentConfig {
    int n = 1;
    int L = 8;
    int top_level = 0;
    double eta = 1.0;
    int r = 4;
    double epsilon = -1;  // negative: eta / (2 (eta + n))

    double p1 = 2, p2 = 2;
    double delta = 0.1;
    double tau = 0.9;
    double Lambda = 4;
    double upsilon1 = 0.05;
    double tb_proxy = -1;  // negative: estimated

    std::string kernel = "hilbert";
    double kernel_c = 1.0;
    std::string system = "trivial";  // trivial | oscillatory
    double system_A = 1.6;
    double system_amp = 0.4;
    int system_depth = 2;

    std::string goodness = "faithful"; // faithful | all (oracle: every cube good)
    std::string grids = "independent"; // independent | shared (second grid reuses the shifts of the first)

    std::uint64_t seed = 0;
    int seeds = 3;
    std::int64_t trials = 1000;
    int patterns = 50;    // sign patterns per transform test
    int rademacher = 16;  // Rademacher draws for the back-to-b instrument
    int r_min = 3, r_max = 8;  // pi-bad sweep
    std::string out = "out";

    GridParams grid_params() const;
    CoronaParams corona_params() const;
    void validate() const;
    nlohmann::ordered_json to_json() const;
};

// Flat key=value text; '#' starts a comment. Unknown keys and malformed values raise ConfigError.
ExperimentConfig parse_config(const std::string& text, ExperimentConfig base = {});
ExperimentConfig load_config(const std::string& path);

inline const std::vector<std::string>& subcommands() {
    static const std::vector<std::string> s{"pi-bad", "projection", "corona", "transforms", "operator", "decompose",
                                            "all"};
    return s;
}

// Runs one subcommand into report; throws ConfigError, PreconditionError or InvariantError.
void run_subcommand(const std::string& name, const ExperimentConfig& cfg, Report& report);

struct CliOverrides {
    std::optional<std::string> config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::int64_t> trials;
    bool quiet = false;
};

// Applies flag > SEED environment variable > config file > default precedence.
ExperimentConfig resolve_config(const CliOverrides& o, const char* seed_env);

// Exit codes: 0 all invariants held, 1 an invariant failed, 2 configuration error, 3 other error.
int run_command(const std::string& name, const CliOverrides& o, std::ostream& out, std::ostream& err);
int cli_main(int argc, char** argv);

}  // namespace tb
