#pragma once

#include <string>
#include <vector>

namespace qhedge {

/// One invariant or oracle check: the measured statistic against its pinned
/// threshold.
struct CheckResult {
    enum class Cmp { abs_le, le, ge, eq_zero };

    std::string name;
    double statistic = 0.0;
    double threshold = 0.0;
    Cmp cmp = Cmp::abs_le;
    bool skipped = false;
    std::string note;

    bool passed() const;

    static CheckResult abs_le(std::string name, double statistic, double threshold,
                              std::string note = "");
    static CheckResult le(std::string name, double statistic, double threshold,
                          std::string note = "");
    static CheckResult ge(std::string name, double statistic, double threshold,
                          std::string note = "");
    static CheckResult eq_zero(std::string name, double statistic, std::string note = "");
    static CheckResult skip(std::string name, std::string note);
};

struct RunReport {
    std::string scenario_hash;
    std::string subcommand;
    std::vector<CheckResult> checks;
    std::vector<std::pair<std::string, double>> timings_ms;
    std::vector<std::string> artifacts;

    std::size_t picard_iterations = 0;
    bool picard_converged = true;
    std::vector<double> pnorm_history;
    std::vector<double> ratio_history;

    bool all_passed() const;

    std::string to_json() const;
    /// Serialization with run-dependent parts (timings) removed; identical
    /// re-runs produce identical stripped reports.
    std::string to_json_without_timings() const;
    void save(const std::string& path) const;
};

}  // namespace qhedge
