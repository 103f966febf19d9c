#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "qhedge/bsde.hpp"
#include "qhedge/grid.hpp"
#include "qhedge/information.hpp"
#include "qhedge/market.hpp"

namespace qhedge {

/// Claim declaration: name plus parameters, resolved to a payoff at run time.
struct ClaimSpec {
    std::string kind = "identity";  // identity | call | put | power
    std::string underlying = "price";  // price | martingale
    double strike = 1.0;
    double power = 2.0;

    Claim build() const;
};

/// Driver declaration.
struct DriverSpec {
    std::string kind = "zero";  // zero | constant | linear_y | linear_z | structure
    double c = 0.0;             // constant driver value
    double r = 0.0;             // linear_y rate
    double a = 0.0;             // linear_z load

    Driver build(const PathEnsemble& ensemble) const;
};

/// Parsed scenario: everything a run needs, with explicit units in the field
/// names of the underlying file format.
struct Scenario {
    MarketConfig market;
    Grid grid = Grid::uniform(1.0, 64);
    InformationModel info;
    ClaimSpec claim;
    DriverSpec driver;
    SolveOptions solve;
    std::string scheme = "picard";  // picard | blocks

    std::string output_dir = "out";
    bool export_csv = true;

    /// Cross-field validation (tau alignment, block-solver requirements...).
    void validate() const;

    /// Canonical serialization of the semantically relevant fields.
    std::string canonical() const;

    /// FNV-1a hash of the canonical serialization, as 16 hex digits. Output
    /// locations and export switches do not enter.
    std::string hash() const;
};

struct ScenarioOverrides {
    std::optional<std::size_t> n_paths;
    std::optional<std::size_t> n_steps;
    std::optional<std::uint64_t> seed;
};

/// Parses the sectioned key/value scenario format. Errors carry the line and
/// field that failed.
Scenario parse_scenario_text(const std::string& text, const ScenarioOverrides& overrides = {});
Scenario load_scenario_file(const std::string& path, const ScenarioOverrides& overrides = {});

std::uint64_t fnv1a64(const std::string& data);

}  // namespace qhedge
