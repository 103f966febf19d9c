#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qhedge/bsde.hpp"
#include "qhedge/decomposition.hpp"
#include "qhedge/information.hpp"
#include "qhedge/market.hpp"

namespace qhedge {

/// Hedging strategy on the grid: theta is the risky holding over each step
/// (measurable at the declared information level), value and cost live on
/// nodes. V_N replicates the claim exactly; C_i = V_i - sum_{j<i} theta_j dS_j.
struct Strategy {
    InformationModel info;
    Grid grid;
    std::size_t n_paths = 0;

    std::vector<double> theta;  // n_steps x n_paths
    std::vector<double> value;  // (n_steps + 1) x n_paths
    std::vector<double> eta;    // (n_steps + 1) x n_paths, riskless position
    std::vector<double> cost;   // (n_steps + 1) x n_paths

    double initial_cost = 0.0;
    std::size_t picard_iterations = 0;
    bool converged = true;

    double theta_at(std::size_t step, std::size_t path) const { return theta[step * n_paths + path]; }
    double value_at(std::size_t node, std::size_t path) const { return value[node * n_paths + path]; }
    double cost_at(std::size_t node, std::size_t path) const { return cost[node * n_paths + path]; }
};

/// Locally risk-minimizing strategy from the Foellmer-Schweizer
/// decomposition: theta the FS integrand, V the solver value, C the initial
/// value plus the orthogonal increments.
Strategy optimal_strategy(const PathEnsemble& ensemble, const InformationModel& info,
                          const Claim& claim, const SolveOptions& options = {});

/// Remaining quadratic risk R_i = E[(C_N - C_i)^2 | H_{t_i}] per node and
/// path. Regression estimates below zero are clipped and counted.
struct RiskProcess {
    std::vector<double> values;  // (n_steps + 1) x n_paths
    std::size_t clipped = 0;
};
RiskProcess risk_process(const Strategy& strategy, const PathEnsemble& ensemble,
                         const InformationModel& info);

/// A bounded H-predictable strategy perturbation (one value per step/path).
struct Perturbation {
    std::string name;
    std::vector<double> delta;  // n_steps x n_paths
};

/// Standard test battery: constant, sign of the lagged martingale state, and
/// a mid-horizon bump. All H-predictable, vanishing on the last step.
std::vector<Perturbation> perturbation_battery(const PathEnsemble& ensemble,
                                               const InformationModel& info, double scale = 0.25);

/// Discrete local risk quotient over a sub-partition of the grid: per cell
/// (t_a, t_b], the change of remaining risk at t_a when theta is bumped by
/// the perturbation on that cell, normalized by the expected bracket
/// increment. Both risks come from the same regression estimator.
struct RiskQuotientCell {
    std::size_t begin_node = 0;
    std::size_t end_node = 0;
    double r_hat = 0.0;
    double standard_error = 0.0;
    bool skipped = false;  // bracket estimate below tolerance
};
struct RiskQuotientResult {
    std::vector<RiskQuotientCell> cells;
    double min_r_hat = 0.0;
    double min_margin = 0.0;  // min over cells of r_hat + 3 se
};
RiskQuotientResult risk_quotient(const Strategy& strategy, const PathEnsemble& ensemble,
                                 const InformationModel& info, const Perturbation& perturbation,
                                 const std::vector<std::size_t>& partition_nodes);

/// Discrete stochastic exponential of -int alpha dM: the density process of
/// the minimal martingale measure. Paths with a nonpositive factor are
/// reported; the run aborts when their fraction exceeds the threshold.
struct MmmWeights {
    std::vector<double> density;  // (n_steps + 1) x n_paths
    std::vector<std::uint8_t> valid;
    std::size_t invalid_paths = 0;

    double terminal(std::size_t path, std::size_t n_steps, std::size_t n_paths) const {
        return density[n_steps * n_paths + path];
    }
};
MmmWeights mmm_density(const PathEnsemble& ensemble, double failure_threshold = 0.0);

/// Value under the minimal martingale measure at one node, by the Bayes
/// quotient of two full-information regressions. Full information only.
std::vector<double> mmm_price(const PathEnsemble& ensemble, const InformationModel& info,
                              const Claim& claim, std::size_t step, const MmmWeights& weights);

}  // namespace qhedge
