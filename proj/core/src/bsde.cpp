#include "qhedge/bsde.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "qhedge/parallel.hpp"
#include "qhedge/rng.hpp"

namespace qhedge {

Driver Driver::zero() {
    Driver d;
    d.name = "zero";
    d.f = [](std::size_t, std::size_t, double, double, double) { return 0.0; };
    return d;
}

Driver Driver::constant(double c) {
    Driver d;
    d.name = "constant";
    d.f = [c](std::size_t, std::size_t, double, double, double) { return c; };
    d.growth_c = c * c;
    return d;
}

Driver Driver::linear_in_y(double rate) {
    Driver d;
    d.name = "linear_y";
    d.f = [rate](std::size_t, std::size_t, double, double y, double) { return -rate * y; };
    d.lipschitz_k = std::abs(rate);
    d.depends_on_y = rate != 0.0;
    return d;
}

Driver Driver::linear_in_z(double load) {
    Driver d;
    d.name = "linear_z";
    d.f = [load](std::size_t, std::size_t, double, double, double z) { return -load * z; };
    d.lipschitz_k = std::abs(load);
    d.depends_on_z = load != 0.0;
    d.growth_c = load * load;
    return d;
}

Driver Driver::structure(const PathEnsemble& ensemble) {
    Driver d;
    d.name = "structure";
    const double* alpha = ensemble.alpha.data();
    const std::size_t paths = ensemble.n_paths;
    d.f = [alpha, paths](std::size_t path, std::size_t step, double, double, double z) {
        return -alpha[step * paths + path] * z;
    };
    d.lipschitz_k = ensemble.config.alpha.bound;
    d.depends_on_z = ensemble.config.alpha.bound > 0.0;
    d.growth_c = ensemble.config.alpha.bound * ensemble.config.alpha.bound;
    return d;
}

DriverCheck validate_driver(const Driver& driver, const PathEnsemble& ensemble,
                            std::size_t n_samples, std::uint64_t seed) {
    if (!driver.f) throw std::invalid_argument("validate_driver: driver has no callable");
    auto gen = path_stream(seed, 0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    DriverCheck check;
    bool constant_in_args = true;
    for (std::size_t s = 0; s < n_samples; ++s) {
        const std::size_t p = static_cast<std::size_t>(unif(gen) * static_cast<double>(ensemble.n_paths)) %
                              ensemble.n_paths;
        const std::size_t i = static_cast<std::size_t>(unif(gen) * static_cast<double>(ensemble.n_steps())) %
                              ensemble.n_steps();
        const double t = ensemble.grid.time(i);
        const double y = 3.0 * gauss(gen);
        const double y2 = 3.0 * gauss(gen);
        const double z = 3.0 * gauss(gen);
        const double z2 = 3.0 * gauss(gen);
        const double diff = std::abs(driver(p, i, t, y, z) - driver(p, i, t, y2, z2));
        if (diff > 0.0) constant_in_args = false;
        const double denom = driver.lipschitz_k * (std::abs(y - y2) + std::abs(z - z2));
        if (denom > 0.0) {
            check.worst_lipschitz_ratio = std::max(check.worst_lipschitz_ratio, diff / denom);
        } else if (diff > 0.0) {
            check.worst_lipschitz_ratio = std::numeric_limits<double>::infinity();
        }
    }
    check.lipschitz_ok = driver.lipschitz_k == 0.0
                             ? constant_in_args
                             : check.worst_lipschitz_ratio <= 1.0 + 1e-9;

    const std::size_t paths = ensemble.n_paths;
    double total = 0.0;
    for (std::size_t p = 0; p < paths; ++p) {
        double acc = 0.0;
        for (std::size_t i = 0; i < ensemble.n_steps(); ++i) {
            const double v = driver(p, i, ensemble.grid.time(i), 0.0, 0.0);
            acc += v * v * ensemble.d_bracket[i];
        }
        total += acc;
    }
    check.integrability = total / static_cast<double>(paths);
    check.integrable = std::isfinite(check.integrability);
    return check;
}

namespace {

double terminal_value(const PathEnsemble& ensemble, std::size_t path, ClaimUnderlying underlying) {
    const std::size_t last = ensemble.n_steps();
    return underlying == ClaimUnderlying::price ? ensemble.s(last, path) : ensemble.m(last, path);
}

}  // namespace

Claim claim_identity(ClaimUnderlying underlying) {
    return Claim{"identity", [underlying](const PathEnsemble& e, std::size_t p) {
                     return terminal_value(e, p, underlying);
                 }};
}

Claim claim_call(ClaimUnderlying underlying, double strike) {
    return Claim{"call", [underlying, strike](const PathEnsemble& e, std::size_t p) {
                     return std::max(terminal_value(e, p, underlying) - strike, 0.0);
                 }};
}

Claim claim_put(ClaimUnderlying underlying, double strike) {
    return Claim{"put", [underlying, strike](const PathEnsemble& e, std::size_t p) {
                     return std::max(strike - terminal_value(e, p, underlying), 0.0);
                 }};
}

Claim claim_power(ClaimUnderlying underlying, double power) {
    return Claim{"power", [underlying, power](const PathEnsemble& e, std::size_t p) {
                     return std::pow(terminal_value(e, p, underlying), power);
                 }};
}

std::vector<double> evaluate_claim(const Claim& claim, const PathEnsemble& ensemble) {
    if (!claim.payoff) throw std::invalid_argument("claim '" + claim.name + "' has no payoff");
    std::vector<double> xi(ensemble.n_paths);
    double second_moment = 0.0;
    for (std::size_t p = 0; p < ensemble.n_paths; ++p) {
        xi[p] = claim.payoff(ensemble, p);
        if (!std::isfinite(xi[p])) {
            throw std::invalid_argument("claim '" + claim.name + "' is non-finite on path " +
                                        std::to_string(p));
        }
        second_moment += xi[p] * xi[p];
    }
    if (!std::isfinite(second_moment)) {
        throw std::invalid_argument("claim '" + claim.name + "' has non-finite second moment");
    }
    return xi;
}

namespace {

struct SweepDiagnostics {
    std::size_t ridge_nodes = 0;
    std::size_t zero_denominator_cells = 0;
};

// One frozen-coefficient backward sweep (the contraction map applied once).
BsdeSolution picard_sweep(const CondExpectationEngine& engine, const InformationModel& info,
                          const Driver& driver, std::span<const double> xi,
                          std::span<const double> prev_y, std::span<const double> prev_z,
                          SweepDiagnostics* diag_out = nullptr) {
    const PathEnsemble& ens = engine.ensemble();
    const std::size_t n = ens.n_steps();
    const std::size_t paths = ens.n_paths;

    BsdeSolution sol;
    sol.grid = ens.grid;
    sol.n_paths = paths;
    sol.info = info;
    sol.y.assign((n + 1) * paths, 0.0);
    sol.z.assign(n * paths, 0.0);
    sol.o_increments.assign(n * paths, 0.0);
    sol.picard_iterations = 1;

    // terminal condition, exact on every path
    for (std::size_t p = 0; p < paths; ++p) sol.y[n * paths + p] = xi[p];

    // driver along the previous iterate
    std::vector<double> frozen(n * paths);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = ens.grid.time(i);
        for (std::size_t p = 0; p < paths; ++p) {
            const double v = driver(p, i, t, prev_y[i * paths + p], prev_z[i * paths + p]);
            if (!std::isfinite(v)) {
                throw std::runtime_error("picard_step: non-finite driver value at step " +
                                         std::to_string(i));
            }
            frozen[i * paths + p] = v;
        }
    }

    // Backward tower recursion for Y = E[xi + sum_{j>=i} f_j d<M>_j | F_{t_i}],
    // one step at a time. Per node: a provisional fit of the one-step target
    // centers the covariation regression for Z, then Y is refitted on the
    // hedged target (one-step target minus Z dM). The hedged fit keeps the
    // per-node regression noise at the one-step scale and leaves the O
    // increment conditionally centered against the node basis by the normal
    // equations themselves.
    std::vector<double> target(paths);
    std::vector<double> num(paths);
    std::vector<double> den(paths);
    for (std::size_t i = n; i-- > 0;) {
        const double db = ens.d_bracket[i];
        for (std::size_t p = 0; p < paths; ++p) {
            target[p] = sol.y[(i + 1) * paths + p] + frozen[i * paths + p] * db;
        }
        auto pre = engine.at_node(i, target);
        if (pre.diag.ridge_used && diag_out) ++diag_out->ridge_nodes;

        // dual projection of the one-step covariation with M at the
        // information level
        for (std::size_t p = 0; p < paths; ++p) {
            num[p] = (target[p] - pre.values[p]) * ens.d_martingale[i * paths + p];
            den[p] = db;
        }
        auto num_est = engine.conditional(i, info, num);
        auto den_est = engine.conditional(i, info, den);
        if ((num_est.diag.ridge_used || den_est.diag.ridge_used) && diag_out) {
            ++diag_out->ridge_nodes;
        }
        for (std::size_t p = 0; p < paths; ++p) {
            const double d = den_est.values[p];
            if (d <= 1e-12) {
                sol.z[i * paths + p] = 0.0;
                if (diag_out) ++diag_out->zero_denominator_cells;
            } else {
                sol.z[i * paths + p] = num_est.values[p] / d;
            }
        }

        // final fit on the hedged target; the z-slot of the driver takes the
        // fresh integrand so the hedge and the driver see the same Z (for the
        // structure driver the two combine into -Z dS)
        const double t_i = ens.grid.time(i);
        for (std::size_t p = 0; p < paths; ++p) {
            const double z = sol.z[i * paths + p];
            const double gz = driver(p, i, t_i, prev_y[i * paths + p], z);
            if (!std::isfinite(gz)) {
                throw std::runtime_error("picard_step: non-finite driver value at step " +
                                         std::to_string(i));
            }
            target[p] = sol.y[(i + 1) * paths + p] + gz * db -
                        z * ens.d_martingale[i * paths + p];
        }
        auto est = engine.at_node(i, target);
        for (std::size_t p = 0; p < paths; ++p) {
            const double v = est.values[p];
            if (!std::isfinite(v)) {
                throw std::runtime_error("picard_step: non-finite Y estimate at step " +
                                         std::to_string(i));
            }
            sol.y[i * paths + p] = v;
        }
    }

    // O as the pathwise residual of the recursion, driver at the new (Y, Z)
    for (std::size_t i = 0; i < n; ++i) {
        const double t = ens.grid.time(i);
        const double db = ens.d_bracket[i];
        for (std::size_t p = 0; p < paths; ++p) {
            const double y_cur = sol.y[i * paths + p];
            const double z = sol.z[i * paths + p];
            const double fv = driver(p, i, t, y_cur, z);
            if (!std::isfinite(fv)) {
                throw std::runtime_error("picard_step: non-finite driver value at step " +
                                         std::to_string(i));
            }
            sol.o_increments[i * paths + p] = bsde_residual(
                sol.y[(i + 1) * paths + p], y_cur, fv, db, z, ens.d_martingale[i * paths + p]);
        }
    }
    return sol;
}

// Block aggregates of the weighted norm, one value per block:
//   mean over paths of sup_{I_k} dY^2 + sum_{I_k} dZ^2 d<M> + sum_{I_k} dO^2.
std::vector<long double> block_aggregates(const BsdeDelta& delta, const Grid& grid,
                                          std::size_t n_paths, std::size_t blocks,
                                          std::span<const double> d_bracket) {
    const std::size_t n = grid.n_steps;
    std::vector<long double> agg(blocks, 0.0L);

    std::vector<std::vector<long double>> partials(chunk_count(n_paths),
                                                   std::vector<long double>(blocks, 0.0L));
    parallel_for_chunks(n_paths, [&](std::size_t begin, std::size_t end) {
        auto& local = partials[begin / kParallelChunk];
        std::vector<double> sup(blocks);
        std::vector<double> sums(blocks);
        for (std::size_t p = begin; p < end; ++p) {
            std::fill(sup.begin(), sup.end(), 0.0);
            std::fill(sums.begin(), sums.end(), 0.0);
            // nodes: closed blocks, boundary nodes count for both neighbours
            for (std::size_t i = 0; i <= n; ++i) {
                const double dy = delta.y[i * n_paths + p];
                const double v = dy * dy;
                const std::size_t kk = (i * blocks) / n;
                if (kk < blocks) sup[kk] = std::max(sup[kk], v);
                if (i > 0 && (i * blocks) % n == 0 && kk >= 1 && kk - 1 < blocks) {
                    sup[kk - 1] = std::max(sup[kk - 1], v);
                }
            }
            // steps: assigned by left endpoint
            for (std::size_t j = 0; j < n; ++j) {
                const std::size_t k = std::min((j * blocks) / n, blocks - 1);
                const double dz = delta.z[j * n_paths + p];
                const double dob = delta.o_increments[j * n_paths + p];
                sums[k] += dz * dz * d_bracket[j] + dob * dob;
            }
            for (std::size_t k = 0; k < blocks; ++k) local[k] += sup[k] + sums[k];
        }
    });
    for (const auto& local : partials) {
        for (std::size_t k = 0; k < blocks; ++k) agg[k] += local[k];
    }
    for (auto& a : agg) a /= static_cast<long double>(n_paths);
    return agg;
}

}  // namespace

BsdeDelta delta_between(const BsdeSolution& a, const BsdeSolution& b) {
    if (a.y.size() != b.y.size() || a.z.size() != b.z.size() ||
        a.o_increments.size() != b.o_increments.size()) {
        throw std::invalid_argument("delta_between: mismatched solution shapes");
    }
    BsdeDelta d;
    d.y.resize(a.y.size());
    d.z.resize(a.z.size());
    d.o_increments.resize(a.o_increments.size());
    for (std::size_t i = 0; i < a.y.size(); ++i) d.y[i] = a.y[i] - b.y[i];
    for (std::size_t i = 0; i < a.z.size(); ++i) d.z[i] = a.z[i] - b.z[i];
    for (std::size_t i = 0; i < a.o_increments.size(); ++i) {
        d.o_increments[i] = a.o_increments[i] - b.o_increments[i];
    }
    return d;
}

std::size_t p_norm_block_count(double lipschitz_k, double bracket_rate, double horizon) {
    if (lipschitz_k <= 0.0 || bracket_rate <= 0.0) return 1;
    const double c = 6.0 * 42.0 * lipschitz_k * lipschitz_k;
    const double inv_c = 1.0 / c;
    const double u_star = std::min(inv_c, std::sqrt(inv_c));
    const double r0 = u_star / bracket_rate;
    if (r0 >= horizon) return 1;
    return static_cast<std::size_t>(std::floor(horizon / r0)) + 1;
}

double p_norm(const BsdeDelta& delta, const Grid& grid, std::size_t n_paths, double lipschitz_k,
              double rho_rate, std::span<const double> d_bracket) {
    const std::size_t n = grid.n_steps;
    if (delta.y.size() != (n + 1) * n_paths || delta.z.size() != n * n_paths ||
        delta.o_increments.size() != n * n_paths) {
        throw std::invalid_argument("p_norm: delta shapes do not match the grid");
    }
    if (d_bracket.size() != n) {
        throw std::invalid_argument("p_norm: bracket stream must have one entry per step");
    }
    const std::size_t blocks = p_norm_block_count(lipschitz_k, rho_rate, grid.horizon);
    auto agg = block_aggregates(delta, grid, n_paths, blocks, d_bracket);
    long double total = 0.0L;
    long double w = 1.0L;
    for (std::size_t k = 0; k < blocks; ++k) {
        total += w * agg[k];
        w *= 210.0L;  // 5 * 42
    }
    return static_cast<double>(total);
}

double p_norm(const BsdeDelta& delta, const PathEnsemble& ensemble, double lipschitz_k) {
    return p_norm(delta, ensemble.grid, ensemble.n_paths, lipschitz_k, ensemble.config.c_bar,
                  ensemble.d_bracket);
}

BsdeSolution picard_step(const PathEnsemble& ensemble, const InformationModel& info,
                         const Driver& driver, const Claim& claim,
                         const std::vector<double>& prev_y, const std::vector<double>& prev_z) {
    info.validate(ensemble.grid);
    if (!driver.f) throw std::invalid_argument("picard_step: driver has no callable");
    const std::size_t n = ensemble.n_steps();
    const std::size_t paths = ensemble.n_paths;
    if (prev_y.size() != (n + 1) * paths || prev_z.size() != n * paths) {
        throw std::invalid_argument("picard_step: previous iterate must cover the full grid");
    }
    std::vector<double> xi = evaluate_claim(claim, ensemble);
    CondExpectationEngine engine(ensemble, info.basis);
    SweepDiagnostics diag;
    BsdeSolution sol = picard_sweep(engine, info, driver, xi, prev_y, prev_z, &diag);
    sol.ridge_nodes = diag.ridge_nodes;
    sol.zero_denominator_cells = diag.zero_denominator_cells;
    return sol;
}

BsdeSolution solve_bsde_partial(const PathEnsemble& ensemble, const InformationModel& info,
                                const Driver& driver, const Claim& claim,
                                const SolveOptions& options) {
    info.validate(ensemble.grid);
    if (!driver.f) throw std::invalid_argument("solve_bsde_partial: driver has no callable");
    if (options.max_iter == 0) {
        throw std::invalid_argument("solve_bsde_partial: max_iter must be >= 1");
    }
    const std::size_t n = ensemble.n_steps();
    const std::size_t paths = ensemble.n_paths;
    std::vector<double> xi = evaluate_claim(claim, ensemble);
    CondExpectationEngine engine(ensemble, info.basis);
    SweepDiagnostics diag;

    std::vector<double> prev_y((n + 1) * paths, 0.0);
    std::vector<double> prev_z(n * paths, 0.0);

    // A driver that ignores (y, z) makes the first sweep the fixed point.
    if (!driver.depends_on_y && !driver.depends_on_z) {
        BsdeSolution sol = picard_sweep(engine, info, driver, xi, prev_y, prev_z, &diag);
        sol.picard_iterations = 1;
        sol.converged = true;
        sol.ridge_nodes = diag.ridge_nodes;
        sol.zero_denominator_cells = diag.zero_denominator_cells;
        return sol;
    }

    const double c_bar = ensemble.config.c_bar;
    const std::size_t blocks = p_norm_block_count(driver.lipschitz_k, c_bar, ensemble.grid.horizon);

    // Weighted norms are compared with the top block weight normalized to one
    // so the arithmetic cannot overflow for large block counts; solve
    // tolerances and contraction ratios are scale free.
    auto scaled_norm = [&](const BsdeDelta& d) {
        auto agg = block_aggregates(d, ensemble.grid, paths, blocks, ensemble.d_bracket);
        long double total = 0.0L;
        for (std::size_t k = 0; k < blocks; ++k) {
            total += powl(210.0L, static_cast<long double>(k) - static_cast<long double>(blocks - 1)) *
                     agg[k];
        }
        return total;
    };
    const long double top_weight = powl(210.0L, static_cast<long double>(blocks - 1));

    BsdeSolution sol;
    std::vector<double> prev_o(n * paths, 0.0);
    std::vector<double> pnorm_history;
    std::vector<double> ratio_history;
    long double prev_delta_norm = -1.0L;
    bool converged = false;
    std::size_t iterations = 0;

    for (std::size_t k = 1; k <= options.max_iter; ++k) {
        sol = picard_sweep(engine, info, driver, xi, prev_y, prev_z, &diag);
        iterations = k;

        BsdeDelta delta;
        delta.y.resize((n + 1) * paths);
        delta.z.resize(n * paths);
        delta.o_increments.resize(n * paths);
        for (std::size_t i = 0; i < delta.y.size(); ++i) delta.y[i] = sol.y[i] - prev_y[i];
        for (std::size_t i = 0; i < delta.z.size(); ++i) delta.z[i] = sol.z[i] - prev_z[i];
        for (std::size_t i = 0; i < delta.o_increments.size(); ++i) {
            delta.o_increments[i] = sol.o_increments[i] - prev_o[i];
        }

        const long double delta_norm2 = scaled_norm(delta);
        pnorm_history.push_back(static_cast<double>(delta_norm2 * top_weight));
        if (prev_delta_norm > 0.0L) {
            ratio_history.push_back(
                static_cast<double>(sqrtl(delta_norm2 / prev_delta_norm)));
        }
        prev_delta_norm = delta_norm2;

        BsdeDelta current;
        current.y = sol.y;
        current.z = sol.z;
        current.o_increments = sol.o_increments;
        const long double solution_norm2 = scaled_norm(current);
        const long double denom = std::max(sqrtl(solution_norm2), 1e-15L);
        if (sqrtl(delta_norm2) <= static_cast<long double>(options.tol) * denom) {
            converged = true;
        }

        prev_y = sol.y;
        prev_z = sol.z;
        prev_o = sol.o_increments;
        if (converged) break;
    }

    sol.picard_iterations = iterations;
    sol.converged = converged;
    sol.pnorm_history = std::move(pnorm_history);
    sol.ratio_history = std::move(ratio_history);
    sol.ridge_nodes = diag.ridge_nodes;
    sol.zero_denominator_cells = diag.zero_denominator_cells;
    return sol;
}

BsdeSolution solve_bsde_full(const PathEnsemble& ensemble, const Driver& driver,
                             const Claim& claim, const SolveOptions& options) {
    return solve_bsde_partial(ensemble, InformationModel::full(), driver, claim, options);
}

BsdeSolution solve_bsde_delayed_blocks(const PathEnsemble& ensemble, double tau,
                                       const Driver& driver, const Claim& claim,
                                       std::size_t basis_degree) {
    InformationModel info = InformationModel::delayed(tau, basis_degree);
    info.validate(ensemble.grid);
    if (!driver.f) throw std::invalid_argument("solve_bsde_delayed_blocks: driver has no callable");
    if (driver.depends_on_y) {
        throw std::invalid_argument(
            "solve_bsde_delayed_blocks: the block construction needs a driver independent of y");
    }
    const std::size_t n = ensemble.n_steps();
    const std::size_t paths = ensemble.n_paths;
    const std::size_t k_tau = info.delay_steps(ensemble.grid);
    if (n % k_tau != 0) {
        throw std::invalid_argument(
            "solve_bsde_delayed_blocks: the horizon must be an integer multiple of tau");
    }
    const std::size_t n_blocks = n / k_tau;

    std::vector<double> xi = evaluate_claim(claim, ensemble);
    CondExpectationEngine engine(ensemble, info.basis);

    BsdeSolution sol;
    sol.grid = ensemble.grid;
    sol.n_paths = paths;
    sol.info = info;
    sol.y.assign((n + 1) * paths, 0.0);
    sol.z.assign(n * paths, 0.0);
    sol.o_increments.assign(n * paths, 0.0);
    for (std::size_t p = 0; p < paths; ++p) sol.y[n * paths + p] = xi[p];

    std::vector<double> z_full(n * paths, 0.0);
    std::vector<double> m_block((k_tau + 1) * paths);
    std::vector<double> dl(paths);

    for (std::size_t j = n_blocks; j-- > 0;) {
        const std::size_t lo = j * k_tau;
        const std::size_t hi = lo + k_tau;

        // terminal of the block: the value carried from the later block
        for (std::size_t p = 0; p < paths; ++p) {
            m_block[k_tau * paths + p] = sol.y[hi * paths + p];
        }
        std::span<const double> block_terminal(m_block.data() + k_tau * paths, paths);

        // full-information value martingale of the block terminal, backward
        // tower recursion with the hedged refit; the provisional residual
        // feeds the full-information integrand, whose H-projection is the
        // final Z on the block
        for (std::size_t i = hi; i-- > lo;) {
            const double db = ensemble.d_bracket[i];
            std::span<const double> next(m_block.data() + (i - lo + 1) * paths, paths);
            auto pre = engine.at_node(i, next);
            if (pre.diag.ridge_used) ++sol.ridge_nodes;
            for (std::size_t p = 0; p < paths; ++p) {
                dl[p] = (next[p] - pre.values[p]) * ensemble.d_martingale[i * paths + p];
            }
            auto cov = engine.at_node(i, dl);
            for (std::size_t p = 0; p < paths; ++p) {
                if (db <= 1e-12) {
                    z_full[i * paths + p] = 0.0;
                    ++sol.zero_denominator_cells;
                } else {
                    z_full[i * paths + p] = cov.values[p] / db;
                }
            }
            auto proj = engine.conditional(i, info, {z_full.data() + i * paths, paths});
            if (proj.diag.ridge_used) ++sol.ridge_nodes;
            for (std::size_t p = 0; p < paths; ++p) sol.z[i * paths + p] = proj.values[p];

            std::vector<double>& hedged = dl;  // reuse the scratch buffer
            for (std::size_t p = 0; p < paths; ++p) {
                hedged[p] =
                    next[p] - z_full[i * paths + p] * ensemble.d_martingale[i * paths + p];
            }
            auto est = engine.at_node(i, hedged);
            for (std::size_t p = 0; p < paths; ++p) {
                if (!std::isfinite(est.values[p])) {
                    throw std::runtime_error(
                        "solve_bsde_delayed_blocks: non-finite estimate at step " +
                        std::to_string(i));
                }
                m_block[(i - lo) * paths + p] = est.values[p];
            }
        }

        // Y = block value martingale plus the remaining driver integral,
        // which is known one block ahead because the projected integrand is
        // H-predictable and the bracket deterministic.
        std::vector<double> run(paths, 0.0);
        for (std::size_t i = hi; i-- > lo;) {
            const double t = ensemble.grid.time(i);
            const double db = ensemble.d_bracket[i];
            for (std::size_t p = 0; p < paths; ++p) {
                const double fv = driver(p, i, t, 0.0, sol.z[i * paths + p]);
                if (!std::isfinite(fv)) {
                    throw std::runtime_error(
                        "solve_bsde_delayed_blocks: non-finite driver value at step " +
                        std::to_string(i));
                }
                run[p] += fv * db;
                sol.y[i * paths + p] = m_block[(i - lo) * paths + p] + run[p];
            }
        }
    }

    // residual increments, driver at the projected integrand
    for (std::size_t i = 0; i < n; ++i) {
        const double t = ensemble.grid.time(i);
        const double db = ensemble.d_bracket[i];
        for (std::size_t p = 0; p < paths; ++p) {
            const double y_cur = sol.y[i * paths + p];
            const double z = sol.z[i * paths + p];
            const double fv = driver(p, i, t, y_cur, z);
            sol.o_increments[i * paths + p] = bsde_residual(
                sol.y[(i + 1) * paths + p], y_cur, fv, db, z, ensemble.d_martingale[i * paths + p]);
        }
    }
    sol.picard_iterations = 1;
    sol.converged = true;
    return sol;
}

BsdeSolution reduce_full_to_partial(const BsdeSolution& full_solution,
                                    const PathEnsemble& ensemble, const InformationModel& info) {
    if (!(full_solution.grid == ensemble.grid) || full_solution.n_paths != ensemble.n_paths) {
        throw std::invalid_argument("reduce_full_to_partial: mismatched grids");
    }
    if (full_solution.info.kind != InfoKind::full) {
        throw std::invalid_argument("reduce_full_to_partial: input must be a full-information solution");
    }
    info.validate(ensemble.grid);

    const std::size_t n = ensemble.n_steps();
    const std::size_t paths = ensemble.n_paths;
    CondExpectationEngine engine(ensemble, info.basis);

    std::vector<double> num(n * paths);
    std::vector<double> den(n * paths);
    for (std::size_t i = 0; i < n; ++i) {
        const double db = ensemble.d_bracket[i];
        for (std::size_t p = 0; p < paths; ++p) {
            num[i * paths + p] = full_solution.z[i * paths + p] * db;
            den[i * paths + p] = db;
        }
    }
    DualProjection proj = dual_project(engine, info, num, den);

    BsdeSolution sol;
    sol.grid = ensemble.grid;
    sol.n_paths = paths;
    sol.info = info;
    sol.y = full_solution.y;
    sol.z = std::move(proj.density);
    sol.o_increments.resize(n * paths);
    sol.picard_iterations = full_solution.picard_iterations;
    sol.converged = full_solution.converged;
    sol.ridge_nodes = proj.ridge_nodes;
    sol.zero_denominator_cells = proj.zero_denominator_cells;

    // fold B = int (Z_full - Z) dM into the orthogonal part
    double projected_norm = 0.0;
    double full_norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double db = ensemble.d_bracket[i];
        for (std::size_t p = 0; p < paths; ++p) {
            const double zf = full_solution.z[i * paths + p];
            const double zh = sol.z[i * paths + p];
            sol.o_increments[i * paths + p] =
                full_solution.o_increments[i * paths + p] +
                (zf - zh) * ensemble.d_martingale[i * paths + p];
            projected_norm += zh * zh * db;
            full_norm += zf * zf * db;
        }
    }
    if (projected_norm > full_norm * (1.0 + 1e-9) + 1e-12) {
        throw std::runtime_error(
            "reduce_full_to_partial: projected integrand norm exceeds the full one");
    }
    return sol;
}

}  // namespace qhedge
