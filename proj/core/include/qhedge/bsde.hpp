#pragma once

#include <functional>
#include <string>
#include <vector>

#include "qhedge/information.hpp"
#include "qhedge/market.hpp"

namespace qhedge {

/// Driver f of the backward equation, with its declared Lipschitz constant,
/// dependence flags and (for the delayed block solver) sublinear growth
/// constant. The callable may read per-path data through (path, step).
struct Driver {
    std::string name = "zero";
    std::function<double(std::size_t path, std::size_t step, double t, double y, double z)> f;
    double lipschitz_k = 0.0;
    bool depends_on_y = false;
    bool depends_on_z = false;
    double growth_c = 0.0;  // |f(t,z)|^2 <= growth_c (1 + z^2)

    double operator()(std::size_t path, std::size_t step, double t, double y, double z) const {
        return f(path, step, t, y, z);
    }

    static Driver zero();
    static Driver constant(double c);
    static Driver linear_in_y(double rate);  // f = -rate * y
    static Driver linear_in_z(double load);  // f = -load * z
    /// f = -alpha_t z with the ensemble's own drift loading; the driver of the
    /// Foellmer-Schweizer equation under the structure condition.
    static Driver structure(const PathEnsemble& ensemble);
};

/// Spot-check of the declared Lipschitz constant and the integrability of
/// f(.,0,0) against an ensemble.
struct DriverCheck {
    double worst_lipschitz_ratio = 0.0;  // max |f(x)-f(x')| / (K(|dy|+|dz|)); <= 1 when honest
    double integrability = 0.0;          // mean over paths of sum |f(t,0,0)|^2 d<M>
    bool lipschitz_ok = false;
    bool integrable = false;
};
DriverCheck validate_driver(const Driver& driver, const PathEnsemble& ensemble,
                            std::size_t n_samples = 256, std::uint64_t seed = 1);

/// Terminal payoff; evaluated from the terminal path state.
struct Claim {
    std::string name = "claim";
    std::function<double(const PathEnsemble&, std::size_t path)> payoff;
};

enum class ClaimUnderlying { price, martingale };

Claim claim_identity(ClaimUnderlying underlying);
Claim claim_call(ClaimUnderlying underlying, double strike);
Claim claim_put(ClaimUnderlying underlying, double strike);
Claim claim_power(ClaimUnderlying underlying, double power);

/// Evaluates the claim on every path; rejects non-finite payoffs and payoffs
/// with non-finite empirical second moment.
std::vector<double> evaluate_claim(const Claim& claim, const PathEnsemble& ensemble);

/// Solution triplet on the grid: Y per node, Z per step (measurable at the
/// declared information level), O as per-step increments defined as the
/// pathwise residual of the backward recursion.
struct BsdeSolution {
    Grid grid;
    std::size_t n_paths = 0;
    InformationModel info;
    std::vector<double> y;             // (n_steps + 1) x n_paths
    std::vector<double> z;             // n_steps x n_paths
    std::vector<double> o_increments;  // n_steps x n_paths

    std::size_t picard_iterations = 0;
    bool converged = true;
    std::vector<double> pnorm_history;  // squared weighted p-norm of successive deltas
    std::vector<double> ratio_history;  // norm ratio of successive deltas
    std::size_t ridge_nodes = 0;
    std::size_t zero_denominator_cells = 0;

    double y_at(std::size_t node, std::size_t path) const { return y[node * n_paths + path]; }
    double z_at(std::size_t step, std::size_t path) const { return z[step * n_paths + path]; }
    double do_at(std::size_t step, std::size_t path) const { return o_increments[step * n_paths + path]; }
};

// Residual of one backward step,
//   dO_i = (Y_{i+1} - Y_i) + f(t_i, Y_i, Z_i) d<M>_i - Z_i dM_i.
// Shared by the solvers and by every check that asserts the recursion with
// zero tolerance.
inline double bsde_residual(double y_next, double y_cur, double f_value, double d_bracket,
                            double z, double d_martingale) {
    return (y_next - y_cur) + f_value * d_bracket - z * d_martingale;
}

struct SolveOptions {
    double tol = 1e-3;          // relative tolerance on the weighted p-norm of deltas
    std::size_t max_iter = 16;
};

/// One frozen-coefficient sweep: Y from conditional expectations of the claim
/// plus the driver integral evaluated along the previous iterate (u, v);
/// Z from the dual projection of the one-step covariation with M; O as the
/// pathwise residual.
BsdeSolution picard_step(const PathEnsemble& ensemble, const InformationModel& info,
                         const Driver& driver, const Claim& claim,
                         const std::vector<double>& prev_y, const std::vector<double>& prev_z);

/// Picard fixed point from (0, 0); stops when the weighted p-norm distance of
/// successive iterates drops below tol (relative) or max_iter is reached. A
/// non-converged result carries converged = false, never fails silently.
BsdeSolution solve_bsde_partial(const PathEnsemble& ensemble, const InformationModel& info,
                                const Driver& driver, const Claim& claim,
                                const SolveOptions& options = {});

/// Full-information solve: the same equation with H = F.
BsdeSolution solve_bsde_full(const PathEnsemble& ensemble, const Driver& driver,
                             const Claim& claim, const SolveOptions& options = {});

/// Backward block construction for delayed information with T an integer
/// multiple of tau: each block [(j-1) tau, j tau] is solved under full
/// information with the driver evaluated at the H-projection of the block's
/// integrand, then the blocks are stitched and projected. Requires a driver
/// that depends on z only and satisfies the declared sublinear growth.
BsdeSolution solve_bsde_delayed_blocks(const PathEnsemble& ensemble, double tau,
                                       const Driver& driver_z_only, const Claim& claim,
                                       std::size_t basis_degree = 3);

/// Maps a full-information solution to a partial-information one:
/// Y unchanged, Z the dual-projection density of the integrated integrand,
/// and (Z_full - Z) dM folded into the O increments. Exact for z-independent
/// drivers; for z-dependent drivers the input must solve the frozen-form
/// full-information equation.
BsdeSolution reduce_full_to_partial(const BsdeSolution& full_solution,
                                    const PathEnsemble& ensemble, const InformationModel& info);

/// Difference of two solution triplets (or one triplet against zero).
struct BsdeDelta {
    std::vector<double> y;             // (n_steps + 1) x n_paths
    std::vector<double> z;             // n_steps x n_paths
    std::vector<double> o_increments;  // n_steps x n_paths
};

BsdeDelta delta_between(const BsdeSolution& a, const BsdeSolution& b);

/// Number of blocks of the weighted norm: smallest regular partition whose
/// cell width r satisfies 42 K^2 max(rho(r)^2, rho(r)) <= 1/6 for
/// rho(r) = bracket_rate * r. K = 0 gives a single block.
std::size_t p_norm_block_count(double lipschitz_k, double bracket_rate, double horizon);

/// Squared weighted norm
///   sum_k (5*42)^k E[ sup_{I_k} |dY|^2 + sum_{I_k} |dZ|^2 d<M> + sum_{I_k} (dO)^2 ],
/// over the regular partition I_k of [0, T] into p_norm_block_count blocks
/// (block count from lipschitz_k and rho_rate, the slope of the bracket
/// bound rho(r) = rho_rate * r). Sandwiched between the classical squared
/// norm and m (5*42)^(m-1) times it.
double p_norm(const BsdeDelta& delta, const Grid& grid, std::size_t n_paths, double lipschitz_k,
              double rho_rate, std::span<const double> d_bracket);

/// Same, drawing the bracket stream and the declared rate from the ensemble.
double p_norm(const BsdeDelta& delta, const PathEnsemble& ensemble, double lipschitz_k);

}  // namespace qhedge
