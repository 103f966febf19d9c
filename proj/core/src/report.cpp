#include "qhedge/report.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace qhedge {

namespace {

const char* cmp_name(CheckResult::Cmp cmp) {
    switch (cmp) {
        case CheckResult::Cmp::abs_le: return "abs_le";
        case CheckResult::Cmp::le: return "le";
        case CheckResult::Cmp::ge: return "ge";
        case CheckResult::Cmp::eq_zero: return "eq_zero";
    }
    return "?";
}

nlohmann::ordered_json report_json(const RunReport& report, bool with_timings) {
    nlohmann::ordered_json j;
    j["scenario_hash"] = report.scenario_hash;
    j["subcommand"] = report.subcommand;
    j["all_passed"] = report.all_passed();
    j["checks"] = nlohmann::ordered_json::array();
    for (const auto& c : report.checks) {
        nlohmann::ordered_json cj;
        cj["name"] = c.name;
        if (c.skipped) {
            cj["skipped"] = true;
        } else {
            cj["statistic"] = c.statistic;
            cj["threshold"] = c.threshold;
            cj["comparator"] = cmp_name(c.cmp);
            cj["pass"] = c.passed();
        }
        if (!c.note.empty()) cj["note"] = c.note;
        j["checks"].push_back(cj);
    }
    j["picard"] = {{"iterations", report.picard_iterations},
                   {"converged", report.picard_converged},
                   {"pnorm_history", report.pnorm_history},
                   {"ratio_history", report.ratio_history}};
    j["artifacts"] = report.artifacts;
    if (with_timings) {
        nlohmann::ordered_json t;
        for (const auto& [name, ms] : report.timings_ms) t[name] = ms;
        j["timings_ms"] = t;
    }
    return j;
}

}  // namespace

bool CheckResult::passed() const {
    if (skipped) return true;
    switch (cmp) {
        case Cmp::abs_le: return std::abs(statistic) <= threshold;
        case Cmp::le: return statistic <= threshold;
        case Cmp::ge: return statistic >= threshold;
        case Cmp::eq_zero: return statistic == 0.0;
    }
    return false;
}

CheckResult CheckResult::abs_le(std::string name, double statistic, double threshold,
                                std::string note) {
    return CheckResult{std::move(name), statistic, threshold, Cmp::abs_le, false, std::move(note)};
}
CheckResult CheckResult::le(std::string name, double statistic, double threshold,
                            std::string note) {
    return CheckResult{std::move(name), statistic, threshold, Cmp::le, false, std::move(note)};
}
CheckResult CheckResult::ge(std::string name, double statistic, double threshold,
                            std::string note) {
    return CheckResult{std::move(name), statistic, threshold, Cmp::ge, false, std::move(note)};
}
CheckResult CheckResult::eq_zero(std::string name, double statistic, std::string note) {
    return CheckResult{std::move(name), statistic, 0.0, Cmp::eq_zero, false, std::move(note)};
}
CheckResult CheckResult::skip(std::string name, std::string note) {
    CheckResult c;
    c.name = std::move(name);
    c.skipped = true;
    c.note = std::move(note);
    return c;
}

bool RunReport::all_passed() const {
    for (const auto& c : checks) {
        if (!c.passed()) return false;
    }
    return true;
}

std::string RunReport::to_json() const { return report_json(*this, true).dump(2); }

std::string RunReport::to_json_without_timings() const {
    return report_json(*this, false).dump(2);
}

void RunReport::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("report: cannot open '" + path + "' for writing");
    out << to_json() << "\n";
}

}  // namespace qhedge
