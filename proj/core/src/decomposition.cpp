#include "qhedge/decomposition.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace qhedge {

Decomposition gkw_decompose(const PathEnsemble& ensemble, const InformationModel& info,
                            const Claim& claim) {
    info.validate(ensemble.grid);
    const std::size_t n = ensemble.n_steps();
    const std::size_t paths = ensemble.n_paths;
    std::vector<double> xi = evaluate_claim(claim, ensemble);
    CondExpectationEngine engine(ensemble, info.basis);

    Decomposition dec;
    dec.kind = DecompositionKind::gkw;
    dec.info = info;
    dec.grid = ensemble.grid;
    dec.n_paths = paths;
    dec.value.assign((n + 1) * paths, 0.0);
    dec.integrand.assign(n * paths, 0.0);
    dec.residual_increments.assign(n * paths, 0.0);

    // value martingale m_i = E[xi | F_{t_i}], backward tower recursion. Per
    // node: provisional fit of m_{i+1}, covariation regression against the
    // provisional residual, then the final fit of the hedged target
    // m_{i+1} - H dM so the orthogonal increment stays conditionally centered
    // against the node basis.
    for (std::size_t p = 0; p < paths; ++p) dec.value[n * paths + p] = xi[p];
    std::vector<double> num(paths);
    std::vector<double> den(paths);
    std::vector<double> target(paths);
    for (std::size_t i = n; i-- > 0;) {
        const double db = ensemble.d_bracket[i];
        std::span<const double> next(dec.value.data() + (i + 1) * paths, paths);
        auto pre = engine.at_node(i, next);
        for (std::size_t p = 0; p < paths; ++p) {
            num[p] = (next[p] - pre.values[p]) * ensemble.d_martingale[i * paths + p];
            den[p] = db;
        }
        auto num_est = engine.conditional(i, info, num);
        auto den_est = engine.conditional(i, info, den);
        for (std::size_t p = 0; p < paths; ++p) {
            const double d = den_est.values[p];
            dec.integrand[i * paths + p] = d <= 1e-12 ? 0.0 : num_est.values[p] / d;
        }
        for (std::size_t p = 0; p < paths; ++p) {
            target[p] =
                next[p] - dec.integrand[i * paths + p] * ensemble.d_martingale[i * paths + p];
        }
        auto est = engine.at_node(i, target);
        for (std::size_t p = 0; p < paths; ++p) {
            if (!std::isfinite(est.values[p])) {
                throw std::runtime_error("gkw_decompose: non-finite estimate at step " +
                                         std::to_string(i));
            }
            dec.value[i * paths + p] = est.values[p];
        }
    }
    dec.u0 = dec.value[0];  // trivial F_0: identical on every path

    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < paths; ++p) {
            dec.residual_increments[i * paths + p] = decomposition_residual(
                dec.value[(i + 1) * paths + p], dec.value[i * paths + p],
                dec.integrand[i * paths + p], ensemble.d_martingale[i * paths + p]);
        }
    }
    return dec;
}

Decomposition fs_decompose(const PathEnsemble& ensemble, const InformationModel& info,
                           const Claim& claim, const SolveOptions& options) {
    info.validate(ensemble.grid);

    // the mean-variance tradeoff must stay within its declared bound
    const std::vector<double> k = tradeoff_process(ensemble);
    const double k_bound = ensemble.config.alpha.bound * ensemble.config.alpha.bound *
                           ensemble.config.c_bar * ensemble.grid.horizon;
    const std::size_t n = ensemble.n_steps();
    const std::size_t paths = ensemble.n_paths;
    for (std::size_t p = 0; p < paths; ++p) {
        if (k[n * paths + p] > k_bound * (1.0 + 1e-12) + 1e-15) {
            throw std::runtime_error(
                "fs_decompose: mean-variance tradeoff exceeds its declared bound on path " +
                std::to_string(p));
        }
    }

    Driver driver = Driver::structure(ensemble);
    BsdeSolution sol = solve_bsde_partial(ensemble, info, driver, claim, options);

    Decomposition dec;
    dec.kind = DecompositionKind::fs;
    dec.info = info;
    dec.grid = ensemble.grid;
    dec.n_paths = paths;
    dec.u0 = sol.y[0];
    dec.integrand = sol.z;
    dec.value = sol.y;
    dec.picard_iterations = sol.picard_iterations;
    dec.converged = sol.converged;

    // residual against the price increments; by the structure condition this
    // coincides with the solver's orthogonal part
    dec.residual_increments.assign(n * paths, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < paths; ++p) {
            dec.residual_increments[i * paths + p] = decomposition_residual(
                dec.value[(i + 1) * paths + p], dec.value[i * paths + p],
                dec.integrand[i * paths + p], ensemble.d_price[i * paths + p]);
        }
    }
    return dec;
}

}  // namespace qhedge
