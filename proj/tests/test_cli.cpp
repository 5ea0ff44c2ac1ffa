#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tb/cli.hpp"
#include "tb/errors.hpp"

using namespace tb;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const auto d = fs::temp_directory_path() / ("tbx_test_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
    const auto p = dir / "exp.cfg";
    std::ofstream(p) << text;
    return p;
}

const char* kSmall =
    "n = 1\nL = 7\nr = 2\ntrials = 120\nseeds = 1\npatterns = 4\nrademacher = 2\nr_min = 2\nr_max = 3\n";

}  // namespace

TEST_CASE("config parser accepts comments and rejects malformed input") {
    const auto c = parse_config("# experiment\nL = 6  # levels\nkernel = riesz\neta=0.5\n");
    CHECK(c.L == 6);
    CHECK(c.kernel == "riesz");
    CHECK(c.eta == doctest::Approx(0.5));
    CHECK_THROWS_AS(parse_config("bogus = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("L = six\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("L = 6.5\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("L\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("seed = -3\n"), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/exp.cfg"), ConfigError);
}

TEST_CASE("validation rejects out-of-range settings") {
    ExperimentConfig c;
    CHECK_NOTHROW(c.validate());
    auto bad = [&](auto mutate) {
        ExperimentConfig x;
        mutate(x);
        CHECK_THROWS_AS(x.validate(), ConfigError);
    };
    bad([](ExperimentConfig& x) { x.trials = 0; });
    bad([](ExperimentConfig& x) { x.kernel = "gauss"; });
    bad([](ExperimentConfig& x) { x.system = "random"; });
    bad([](ExperimentConfig& x) { x.goodness = "all"; });
    bad([](ExperimentConfig& x) { x.epsilon = 0.7; });
    bad([](ExperimentConfig& x) { x.r_min = 5, x.r_max = 4; });
    bad([](ExperimentConfig& x) { x.seeds = 0; });
    bad([](ExperimentConfig& x) { x.p1 = 1; });
}

TEST_CASE("seed precedence is flag over environment over config") {
    const auto d = scratch("seed");
    CliOverrides o;
    o.config_path = write_config(d, "seed = 7\n").string();
    CHECK(resolve_config(o, nullptr).seed == 7);
    CHECK(resolve_config(o, "").seed == 7);
    CHECK(resolve_config(o, "11").seed == 11);
    o.seed = 13;
    CHECK(resolve_config(o, "11").seed == 13);
    CHECK_THROWS_AS(resolve_config(CliOverrides{}, "abc"), ConfigError);
}

TEST_CASE("exit code 2 for configuration errors") {
    const auto d = scratch("exit2");
    std::ostringstream out, err;
    CliOverrides o;
    o.config_path = write_config(d, kSmall).string();
    o.out = (d / "o").string();
    o.trials = 0;
    CHECK(run_command("operator", o, out, err) == 2);
    CHECK(err.str().find("trials") != std::string::npos);
    o.trials = 50;
    CHECK(run_command("pi-bad", o, out, err) == 2);
    o.trials.reset();
    o.config_path = write_config(d, "L = 7\nunknown_key = 1\n").string();
    CHECK(run_command("operator", o, out, err) == 2);
}

TEST_CASE("decompose under the all-good oracle satisfies the bookkeeping identity") {
    const auto d = scratch("decompose");
    CliOverrides o;
    o.config_path = write_config(d, std::string(kSmall) + "goodness = all\ngrids = shared\n").string();
    o.out = (d / "o").string();
    o.quiet = true;
    std::ostringstream out, err;
    REQUIRE(run_command("decompose", o, out, err) == 0);
    const auto j = nlohmann::json::parse(slurp(d / "o" / "report.json"));
    CHECK(j["schema_version"] == 1);
    CHECK(j["ok"] == true);
    CHECK(j["results"]["full_decomposition"]["bookkeeping_rel"].get<double>() <= 1e-9);
    CHECK(fs::exists(d / "o" / "bilinear.csv"));
    CHECK(fs::exists(d / "o" / "timing.json"));
}

TEST_CASE("run all is byte-reproducible for a fixed seed") {
    const auto d = scratch("repro");
    CliOverrides o;
    o.config_path = write_config(d, std::string(kSmall) + "system = oscillatory\n").string();
    o.seed = 5;
    o.quiet = true;
    std::ostringstream out, err;
    o.out = (d / "a").string();
    const int ca = run_command("all", o, out, err);
    o.out = (d / "b").string();
    const int cb = run_command("all", o, out, err);
    INFO(err.str());
    CHECK(ca == cb);
    CHECK((ca == 0 || ca == 1));
    const auto ra = slurp(d / "a" / "report.json");
    CHECK(!ra.empty());
    CHECK(ra == slurp(d / "b" / "report.json"));
    for (const char* t : {"pi_bad.csv", "corona.csv", "bilinear.csv", "operator.csv"})
        CHECK(slurp(d / "a" / t) == slurp(d / "b" / t));
    const auto j = nlohmann::json::parse(ra);
    CHECK(j["results"].contains("estimate_pi_bad"));
    CHECK(j["results"].contains("build_corona"));
}

TEST_CASE("the tbx binary reports exit codes") {
    const char* bin = std::getenv("TBX");
    if (!bin) {
        MESSAGE("TBX not set; binary test skipped");
        return;
    }
    const auto d = scratch("binary");
    const auto cfg = write_config(d, kSmall);
    const std::string base = std::string("\"") + bin + "\" run operator --quiet --config \"" + cfg.string() +
                             "\" --out \"" + (d / "o").string() + "\"";
    CHECK(std::system((base + " > /dev/null 2>&1").c_str()) == 0);
    CHECK(fs::exists(d / "o" / "report.json"));
    const int bad = std::system((base + " --trials 0 > /dev/null 2>&1").c_str());
    CHECK(WEXITSTATUS(bad) == 2);
    const int unknown = std::system(("\"" + std::string(bin) + "\" run nosuch > /dev/null 2>&1").c_str());
    CHECK(WEXITSTATUS(unknown) == 2);
    const int seeded = std::system(("SEED=9 " + base + " > /dev/null 2>&1").c_str());
    CHECK(WEXITSTATUS(seeded) == 0);
    CHECK(nlohmann::json::parse(slurp(d / "o" / "report.json"))["seed"] == 9);
}
