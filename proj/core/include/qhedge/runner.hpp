#pragma once

#include <string>

#include "qhedge/report.hpp"
#include "qhedge/scenario.hpp"

namespace qhedge {

enum class Subcommand { simulate, solve, decompose, hedge, mmm, validate };

Subcommand parse_subcommand(const std::string& name);
std::string subcommand_name(Subcommand cmd);

struct RunOptions {
    bool write_artifacts = true;  // CSV exports and the JSON report
};

/// Executes one pipeline stage for the scenario and reports every invariant
/// the stage exercises; `validate` runs the full battery across the modules.
RunReport run_scenario(const Scenario& scenario, Subcommand cmd, const RunOptions& options = {});

}  // namespace qhedge
