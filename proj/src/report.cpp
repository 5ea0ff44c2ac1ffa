#include "tb/report.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace tb {

namespace {

nlohmann::ordered_json number(double v) {
    if (std::isfinite(v)) return v;
    return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}

void write_file(const std::filesystem::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << s;
}

}  // namespace

Report::Report(std::string command) : command_(std::move(command)) {}

void Report::scalar(const std::string& op, const std::string& name, double value) {
    results_[op][name] = number(value);
}

void Report::text(const std::string& op, const std::string& name, const std::string& value) {
    results_[op][name] = value;
}

void Report::attach(const std::string& op, const std::string& name, nlohmann::ordered_json value) {
    results_[op][name] = std::move(value);
}

void Report::check(const std::string& invariant, bool ok, const std::string& detail) {
    nlohmann::ordered_json j;
    j["name"] = invariant;
    j["ok"] = ok;
    if (!detail.empty()) j["detail"] = detail;
    invariants_.push_back(std::move(j));
    check_flags_.emplace_back(invariant, ok);
}

bool Report::ok() const {
    for (const auto& [name, ok] : check_flags_)
        if (!ok) return false;
    return true;
}

double Report::value(const std::string& op, const std::string& name) const {
    if (!results_.contains(op) || !results_[op].contains(name)) throw std::out_of_range(op + "." + name);
    const auto& v = results_[op][name];
    if (!v.is_number()) throw std::out_of_range(op + "." + name + " is not numeric");
    return v.get<double>();
}

std::string Report::json() const {
    nlohmann::ordered_json j;
    j["schema_version"] = kReportSchemaVersion;
    j["tool_version"] = kToolVersion;
    j["command"] = command_;
    j["seed"] = seed_;
    j["config"] = config_;
    j["results"] = results_;
    j["invariants"] = invariants_;
    j["warnings"] = warnings_;
    j["ok"] = ok();
    return j.dump(2) + "\n";
}

std::string Report::timing_json() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [k, v] : timing_) j[k] = v;
    return j.dump(2) + "\n";
}

void Report::write(const std::string& dir) const {
    const std::filesystem::path d(dir);
    std::filesystem::create_directories(d);
    write_file(d / "report.json", json());
    write_file(d / "timing.json", timing_json());
    for (const auto& [file, csv] : tables_) write_file(d / file, csv);
}

}  // namespace tb
