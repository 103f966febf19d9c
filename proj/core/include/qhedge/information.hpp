#pragma once

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "qhedge/basis.hpp"
#include "qhedge/grid.hpp"
#include "qhedge/market.hpp"

namespace qhedge {

enum class InfoKind { full, delayed };

/// Which sigma-field each grid time exposes: the full filtration, or the
/// delayed one H_t = F_{(t - tau)+}. The delay must sit on the grid.
struct InformationModel {
    InfoKind kind = InfoKind::full;
    double tau = 0.0;  // delay, time units (delayed only)
    BasisSpec basis;

    static InformationModel full(std::size_t basis_degree = 3) {
        InformationModel m;
        m.kind = InfoKind::full;
        m.basis.degree = basis_degree;
        return m;
    }
    static InformationModel delayed(double tau, std::size_t basis_degree = 3) {
        InformationModel m;
        m.kind = InfoKind::delayed;
        m.tau = tau;
        m.basis.degree = basis_degree;
        return m;
    }

    /// Delay in steps; throws if tau is not grid aligned or outside (0, T).
    std::size_t delay_steps(const Grid& grid) const;

    void validate(const Grid& grid) const;

    /// Node whose state generates the information available at time index
    /// `node`: the node itself under full information, (node - tau)+ when
    /// delayed.
    std::size_t information_node(const Grid& grid, std::size_t node) const;
};

struct RegressionDiagnostics {
    std::size_t basis_size = 0;
    std::size_t node = 0;           // node the information state was taken from
    double residual_norm = 0.0;     // RMS of target - fitted
    bool ridge_used = false;
    double ridge_penalty = 0.0;
    double effective_df = 0.0;
    bool trivial = false;           // degenerate sigma-field: plain mean
};

/// Per-path values of E[target | G] for a stated sigma-field level G, plus
/// regression diagnostics. Two paths with the same information state receive
/// identical estimates.
struct ConditionalEstimate {
    std::vector<double> values;
    RegressionDiagnostics diag;
};

/// Least-squares conditional expectation engine over one ensemble. Factorized
/// node designs are cached, so repeated estimates at the same node (the
/// pattern of the Picard solver) cost one linear solve each.
class CondExpectationEngine {
public:
    CondExpectationEngine(const PathEnsemble& ensemble, BasisSpec basis);

    /// E[target | state at grid node]. Node 0 carries the trivial sigma-field
    /// and returns the ensemble mean on every path.
    ConditionalEstimate at_node(std::size_t node, std::span<const double> target) const;

    /// E[target | information at time index `step`] for the given model.
    ConditionalEstimate conditional(std::size_t step, const InformationModel& info,
                                    std::span<const double> target) const;

    const PathEnsemble& ensemble() const { return ensemble_; }
    const BasisSpec& basis() const { return basis_; }

private:
    struct NodePlan {
        NodeDesign design;
        Eigen::MatrixXd gram;
        Eigen::LDLT<Eigen::MatrixXd> factor;
        bool ridge = false;
        double ridge_penalty = 0.0;
        double effective_df = 1.0;
    };

    const NodePlan& plan_for(std::size_t node) const;

    const PathEnsemble& ensemble_;
    BasisSpec basis_;
    mutable std::vector<std::unique_ptr<NodePlan>> plans_;
};

/// One-off conditional expectation; validates that the target is finite on
/// all paths. For repeated estimates construct a CondExpectationEngine.
ConditionalEstimate cond_expect(const PathEnsemble& ensemble, std::size_t step,
                                const InformationModel& info, std::span<const double> target);

/// Discrete density of the H-predictable dual projection of L against <M>:
/// density_i = E[dL_i | H_i] / E[d<M>_i | H_i] per path and step.
struct DualProjection {
    std::vector<double> density;       // n_steps x n_paths
    std::size_t zero_denominator_cells = 0;  // strata where the estimate fell below tolerance
    std::size_t ridge_nodes = 0;
};

DualProjection dual_project(const CondExpectationEngine& engine, const InformationModel& info,
                            std::span<const double> numerator_increments,
                            std::span<const double> denominator_increments,
                            double denominator_tolerance = 1e-12);

DualProjection dual_project(const PathEnsemble& ensemble, const InformationModel& info,
                            std::span<const double> numerator_increments,
                            std::span<const double> denominator_increments,
                            double denominator_tolerance = 1e-12);

}  // namespace qhedge
