#pragma once

#include <vector>

#include "qhedge/bsde.hpp"
#include "qhedge/information.hpp"
#include "qhedge/market.hpp"

namespace qhedge {

enum class DecompositionKind { gkw, fs };

/// Orthogonal decomposition of a claim,
///   xi = u0 + sum_i integrand_i * d(driver)_i + sum_i dA_i,
/// where the integrator is M (GKW) or S (FS). The residual increments are
/// defined so the reconstruction holds pathwise with zero tolerance.
struct Decomposition {
    DecompositionKind kind = DecompositionKind::gkw;
    InformationModel info;
    Grid grid;
    std::size_t n_paths = 0;

    double u0 = 0.0;
    std::vector<double> integrand;            // n_steps x n_paths
    std::vector<double> residual_increments;  // n_steps x n_paths
    std::vector<double> value;                // (n_steps + 1) x n_paths; intermediate values

    // For FS: the solver metadata behind the decomposition.
    std::size_t picard_iterations = 0;
    bool converged = true;

    double integrand_at(std::size_t step, std::size_t path) const {
        return integrand[step * n_paths + path];
    }
    double da_at(std::size_t step, std::size_t path) const {
        return residual_increments[step * n_paths + path];
    }
};

// Residual increment of a decomposition step,
//   dA_i = (V_{i+1} - V_i) - integrand_i * d(driver)_i.
// Shared by the builders and by every reconstruction check.
inline double decomposition_residual(double value_next, double value_cur, double integrand,
                                     double d_integrator) {
    return (value_next - value_cur) - integrand * d_integrator;
}

/// Galtchouk-Kunita-Watanabe decomposition of the claim against M at the
/// given information level.
Decomposition gkw_decompose(const PathEnsemble& ensemble, const InformationModel& info,
                            const Claim& claim);

/// Foellmer-Schweizer decomposition of the claim against S, computed through
/// the backward equation with driver f = -alpha z.
Decomposition fs_decompose(const PathEnsemble& ensemble, const InformationModel& info,
                           const Claim& claim, const SolveOptions& options = {});

}  // namespace qhedge
