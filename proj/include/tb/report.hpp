#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace tb {

inline constexpr int kReportSchemaVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";

// Scalars grouped by the operation that produced them, invariant outcomes, CSV tables and timings.
class Report {
public:
    explicit Report(std::string command = "");

    void set_config(nlohmann::ordered_json cfg) { config_ = std::move(cfg); }
    void set_seed(std::uint64_t seed) { seed_ = seed; }
    void scalar(const std::string& op, const std::string& name, double value);
    void text(const std::string& op, const std::string& name, const std::string& value);
    void attach(const std::string& op, const std::string& name, nlohmann::ordered_json value);
    void check(const std::string& invariant, bool ok, const std::string& detail = "");
    void warn(const std::string& message) { warnings_.push_back(message); }
    void table(const std::string& file, std::string csv) { tables_.emplace_back(file, std::move(csv)); }
    void timing(const std::string& what, double seconds) { timing_[what] = seconds; }

    bool ok() const;
    const std::vector<std::pair<std::string, bool>>& checks() const { return check_flags_; }
    double value(const std::string& op, const std::string& name) const;

    // report.json content; excludes timings so identical runs give identical bytes
    std::string json() const;
    std::string timing_json() const;
    // writes report.json, timing.json and every table into dir (created when missing)
    void write(const std::string& dir) const;

private:
    std::string command_;
    std::uint64_t seed_ = 0;
    nlohmann::ordered_json config_ = nlohmann::ordered_json::object();
    nlohmann::ordered_json results_ = nlohmann::ordered_json::object();
    nlohmann::ordered_json invariants_ = nlohmann::ordered_json::array();
    std::vector<std::pair<std::string, bool>> check_flags_;
    std::vector<std::string> warnings_;
    std::vector<std::pair<std::string, std::string>> tables_;
    std::map<std::string, double> timing_;
};

}  // namespace tb
