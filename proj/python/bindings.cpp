#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tb/cli.hpp"
#include "tb/errors.hpp"
#include "tb/grid.hpp"

namespace py = pybind11;

namespace {

std::string run_experiment(const std::string& name, const std::string& config_text, std::optional<std::uint64_t> seed) {
    tb::ExperimentConfig cfg = tb::parse_config(config_text);
    if (seed) cfg.seed = *seed;
    cfg.validate();
    tb::Report rep(name);
    rep.set_config(cfg.to_json());
    rep.set_seed(cfg.seed);
    for (const auto& w : cfg.grid_params().warnings()) rep.warn(w);
    {
        py::gil_scoped_release release;
        tb::run_subcommand(name, cfg, rep);
    }
    return rep.json();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Desk-scale experiments for the local Tb construction";
    m.attr("tool_version") = tb::kToolVersion;
    m.attr("schema_version") = tb::kReportSchemaVersion;

    py::register_exception<tb::ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<tb::PreconditionError>(m, "PreconditionError", PyExc_ValueError);
    py::register_exception<tb::InvariantError>(m, "InvariantError", PyExc_RuntimeError);

    py::class_<tb::GridParams>(m, "GridParams")
        .def(py::init(&tb::GridParams::make), py::arg("n") = 1, py::arg("L") = 8, py::arg("top_level") = 0,
             py::arg("eta") = 1.0, py::arg("r") = 4)
        .def_readwrite("n", &tb::GridParams::n)
        .def_readwrite("L", &tb::GridParams::L)
        .def_readwrite("top_level", &tb::GridParams::top_level)
        .def_readwrite("eta", &tb::GridParams::eta)
        .def_readwrite("r", &tb::GridParams::r)
        .def_readwrite("epsilon", &tb::GridParams::epsilon)
        .def("validate", &tb::GridParams::validate)
        .def("warnings", &tb::GridParams::warnings);

    m.def(
        "estimate_pi_bad",
        [](int level, const tb::GridParams& params, std::int64_t trials, std::uint64_t seed) {
            tb::PiBadEstimate e;
            {
                py::gil_scoped_release release;
                e = tb::estimate_pi_bad(level, params, trials, seed);
            }
            py::dict d;
            d["estimate"] = e.estimate;
            d["se"] = e.se;
            d["ci95"] = e.ci95;
            d["bad"] = e.bad;
            d["trials"] = e.trials;
            return d;
        },
        py::arg("level"), py::arg("params"), py::arg("trials"), py::arg("seed") = 0);

    m.def("subcommands", &tb::subcommands);
    m.def("run_json", &run_experiment, py::arg("name"), py::arg("config") = "", py::arg("seed") = py::none(),
          "Run one experiment and return report.json as text");
}
