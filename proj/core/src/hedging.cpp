#include "qhedge/hedging.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace qhedge {

Strategy optimal_strategy(const PathEnsemble& ensemble, const InformationModel& info,
                          const Claim& claim, const SolveOptions& options) {
    Decomposition fs = fs_decompose(ensemble, info, claim, options);
    const std::size_t n = ensemble.n_steps();
    const std::size_t paths = ensemble.n_paths;

    Strategy st;
    st.info = info;
    st.grid = ensemble.grid;
    st.n_paths = paths;
    st.theta = fs.integrand;
    st.value = fs.value;
    st.initial_cost = fs.u0;
    st.picard_iterations = fs.picard_iterations;
    st.converged = fs.converged;

    st.cost.assign((n + 1) * paths, 0.0);
    for (std::size_t p = 0; p < paths; ++p) st.cost[p] = fs.u0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < paths; ++p) {
            st.cost[(i + 1) * paths + p] =
                st.cost[i * paths + p] + fs.residual_increments[i * paths + p];
        }
    }

    st.eta.assign((n + 1) * paths, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < paths; ++p) {
            st.eta[i * paths + p] =
                st.value[i * paths + p] - st.theta[i * paths + p] * ensemble.s(i, p);
        }
    }
    // no holding carried past the horizon
    for (std::size_t p = 0; p < paths; ++p) st.eta[n * paths + p] = st.value[n * paths + p];
    return st;
}

RiskProcess risk_process(const Strategy& strategy, const PathEnsemble& ensemble,
                         const InformationModel& info) {
    if (!(strategy.grid == ensemble.grid) || strategy.n_paths != ensemble.n_paths) {
        throw std::invalid_argument("risk_process: strategy does not match the ensemble");
    }
    info.validate(ensemble.grid);
    const std::size_t n = ensemble.n_steps();
    const std::size_t paths = ensemble.n_paths;
    CondExpectationEngine engine(ensemble, info.basis);

    RiskProcess out;
    out.values.assign((n + 1) * paths, 0.0);
    std::vector<double> target(paths);
    for (std::size_t i = 0; i <= n; ++i) {
        for (std::size_t p = 0; p < paths; ++p) {
            const double d = strategy.cost[n * paths + p] - strategy.cost[i * paths + p];
            target[p] = d * d;
        }
        auto est = engine.conditional(i, info, target);
        for (std::size_t p = 0; p < paths; ++p) {
            double v = est.values[p];
            if (v < 0.0) {
                v = 0.0;
                ++out.clipped;
            }
            out.values[i * paths + p] = v;
        }
    }
    return out;
}

std::vector<Perturbation> perturbation_battery(const PathEnsemble& ensemble,
                                               const InformationModel& info, double scale) {
    info.validate(ensemble.grid);
    const std::size_t n = ensemble.n_steps();
    const std::size_t paths = ensemble.n_paths;
    const double m0 = ensemble.config.m0;

    std::vector<Perturbation> battery;

    Perturbation constant{"constant", std::vector<double>(n * paths, scale)};
    Perturbation lagged_sign{"sign_of_lagged_m", std::vector<double>(n * paths, 0.0)};
    Perturbation bump{"mid_horizon_bump", std::vector<double>(n * paths, 0.0)};

    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t lag = info.information_node(ensemble.grid, i);
        const bool in_bump = i >= n / 3 && i < 2 * n / 3;
        for (std::size_t p = 0; p < paths; ++p) {
            const double dm = ensemble.m(lag, p) - m0;
            lagged_sign.delta[i * paths + p] = dm > 0.0 ? scale : (dm < 0.0 ? -scale : 0.0);
            if (in_bump) bump.delta[i * paths + p] = scale;
        }
    }
    // perturbations vanish at the horizon
    for (std::size_t p = 0; p < paths; ++p) {
        constant.delta[(n - 1) * paths + p] = 0.0;
        lagged_sign.delta[(n - 1) * paths + p] = 0.0;
        bump.delta[(n - 1) * paths + p] = 0.0;
    }

    battery.push_back(std::move(constant));
    battery.push_back(std::move(lagged_sign));
    battery.push_back(std::move(bump));
    return battery;
}

RiskQuotientResult risk_quotient(const Strategy& strategy, const PathEnsemble& ensemble,
                                 const InformationModel& info, const Perturbation& perturbation,
                                 const std::vector<std::size_t>& partition_nodes) {
    if (!(strategy.grid == ensemble.grid) || strategy.n_paths != ensemble.n_paths) {
        throw std::invalid_argument("risk_quotient: strategy does not match the ensemble");
    }
    info.validate(ensemble.grid);
    const std::size_t n = ensemble.n_steps();
    const std::size_t paths = ensemble.n_paths;
    if (perturbation.delta.size() != n * paths) {
        throw std::invalid_argument("risk_quotient: perturbation must be n_steps x n_paths");
    }
    if (partition_nodes.size() < 2 || partition_nodes.front() != 0 || partition_nodes.back() != n) {
        throw std::invalid_argument("risk_quotient: partition must run from node 0 to node N");
    }
    for (std::size_t k = 1; k < partition_nodes.size(); ++k) {
        if (partition_nodes[k] <= partition_nodes[k - 1] || partition_nodes[k] > n) {
            throw std::invalid_argument("risk_quotient: partition nodes must increase");
        }
    }

    CondExpectationEngine engine(ensemble, info.basis);

    // terminal cost of the mean-self-financing strategy determined by theta
    std::vector<double> ct_base(paths);
    for (std::size_t p = 0; p < paths; ++p) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            acc += strategy.theta[j * paths + p] * ensemble.d_price[j * paths + p];
        }
        ct_base[p] = strategy.value[n * paths + p] - acc;
    }

    auto estimated_risk = [&](std::size_t node, const std::vector<double>& ct) {
        auto cond = engine.at_node(node, ct);  // C_t = E[C_T | F_t]
        std::vector<double> sq(paths);
        for (std::size_t p = 0; p < paths; ++p) {
            const double d = ct[p] - cond.values[p];
            sq[p] = d * d;
        }
        return engine.conditional(node, info, sq).values;
    };

    RiskQuotientResult out;
    out.min_r_hat = std::numeric_limits<double>::infinity();
    out.min_margin = std::numeric_limits<double>::infinity();

    std::vector<double> ct_pert(paths);
    for (std::size_t k = 0; k + 1 < partition_nodes.size(); ++k) {
        RiskQuotientCell cell;
        cell.begin_node = partition_nodes[k];
        cell.end_node = partition_nodes[k + 1];

        double bracket = 0.0;
        for (std::size_t j = cell.begin_node; j < cell.end_node; ++j) bracket += ensemble.d_bracket[j];
        if (bracket <= 1e-12) {
            cell.skipped = true;
            out.cells.push_back(cell);
            continue;
        }

        for (std::size_t p = 0; p < paths; ++p) {
            double acc = 0.0;
            for (std::size_t j = cell.begin_node; j < cell.end_node; ++j) {
                acc += perturbation.delta[j * paths + p] * ensemble.d_price[j * paths + p];
            }
            ct_pert[p] = ct_base[p] - acc;
        }

        const auto risk_base = estimated_risk(cell.begin_node, ct_base);
        const auto risk_pert = estimated_risk(cell.begin_node, ct_pert);

        double mean = 0.0;
        for (std::size_t p = 0; p < paths; ++p) mean += risk_pert[p] - risk_base[p];
        mean /= static_cast<double>(paths);
        double var = 0.0;
        for (std::size_t p = 0; p < paths; ++p) {
            const double d = (risk_pert[p] - risk_base[p]) - mean;
            var += d * d;
        }
        var /= static_cast<double>(paths);

        cell.r_hat = mean / bracket;
        cell.standard_error = std::sqrt(var / static_cast<double>(paths)) / bracket;
        out.min_r_hat = std::min(out.min_r_hat, cell.r_hat);
        out.min_margin = std::min(out.min_margin, cell.r_hat + 3.0 * cell.standard_error);
        out.cells.push_back(cell);
    }
    return out;
}

MmmWeights mmm_density(const PathEnsemble& ensemble, double failure_threshold) {
    const std::size_t n = ensemble.n_steps();
    const std::size_t paths = ensemble.n_paths;

    MmmWeights w;
    w.density.assign((n + 1) * paths, 1.0);
    w.valid.assign(paths, 1);
    for (std::size_t p = 0; p < paths; ++p) {
        double l = 1.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double factor =
                1.0 - ensemble.alpha[i * paths + p] * ensemble.d_martingale[i * paths + p];
            if (factor <= 0.0) w.valid[p] = 0;
            l *= factor;
            w.density[(i + 1) * paths + p] = l;
        }
        if (!w.valid[p]) ++w.invalid_paths;
    }
    const double fraction = static_cast<double>(w.invalid_paths) / static_cast<double>(paths);
    if (fraction > failure_threshold) {
        throw std::runtime_error("mmm_density: the jump condition 1 - alpha dM > 0 failed on " +
                                 std::to_string(w.invalid_paths) + " of " + std::to_string(paths) +
                                 " paths");
    }
    return w;
}

std::vector<double> mmm_price(const PathEnsemble& ensemble, const InformationModel& info,
                              const Claim& claim, std::size_t step, const MmmWeights& weights) {
    if (info.kind != InfoKind::full) {
        throw std::invalid_argument("mmm_price: only supported under full information");
    }
    info.validate(ensemble.grid);
    if (step >= ensemble.n_nodes()) {
        throw std::out_of_range("mmm_price: step index out of range");
    }
    const std::size_t n = ensemble.n_steps();
    const std::size_t paths = ensemble.n_paths;
    if (weights.density.size() != (n + 1) * paths) {
        throw std::invalid_argument("mmm_price: weights do not match the ensemble");
    }

    std::vector<double> xi = evaluate_claim(claim, ensemble);
    CondExpectationEngine engine(ensemble, info.basis);

    std::vector<double> weighted(paths);
    std::vector<double> terminal(paths);
    for (std::size_t p = 0; p < paths; ++p) {
        terminal[p] = weights.density[n * paths + p];
        weighted[p] = terminal[p] * xi[p];
    }
    auto num = engine.at_node(step, weighted);
    auto den = engine.at_node(step, terminal);

    std::vector<double> price(paths);
    for (std::size_t p = 0; p < paths; ++p) {
        const double d = den.values[p];
        if (!(d > 1e-12)) {
            throw std::runtime_error("mmm_price: density estimate not positive at step " +
                                     std::to_string(step));
        }
        price[p] = num.values[p] / d;
    }
    return price;
}

}  // namespace qhedge
