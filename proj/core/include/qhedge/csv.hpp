#pragma once

#include <string>
#include <vector>

#include "qhedge/bsde.hpp"
#include "qhedge/decomposition.hpp"
#include "qhedge/hedging.hpp"
#include "qhedge/market.hpp"

namespace qhedge {

/// Columnar exports with fixed formatting; identical inputs produce byte
/// identical files.
void write_ensemble_csv(const std::string& path, const PathEnsemble& ensemble);
void write_solution_csv(const std::string& path, const BsdeSolution& solution);
void write_decomposition_csv(const std::string& path, const Decomposition& decomposition);

/// Per-step aggregate table for a strategy report.
void write_strategy_csv(const std::string& path, const Strategy& strategy,
                        const PathEnsemble& ensemble);

void write_mmm_csv(const std::string& path, const MmmWeights& weights, const PathEnsemble& ensemble);

}  // namespace qhedge
