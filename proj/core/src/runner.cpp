#include "qhedge/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>
#include <stdexcept>

#include "qhedge/csv.hpp"
#include "qhedge/decomposition.hpp"
#include "qhedge/diagnostics.hpp"
#include "qhedge/hedging.hpp"

namespace qhedge {

namespace {

using Clock = std::chrono::steady_clock;

class Stopwatch {
public:
    explicit Stopwatch(RunReport& report, std::string name)
        : report_(report), name_(std::move(name)), start_(Clock::now()) {}
    ~Stopwatch() {
        const double ms =
            std::chrono::duration<double, std::milli>(Clock::now() - start_).count();
        report_.timings_ms.emplace_back(name_, ms);
    }

private:
    RunReport& report_;
    std::string name_;
    Clock::time_point start_;
};

bool arrays_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

// ---- market checks ------------------------------------------------------

void market_checks(RunReport& report, const PathEnsemble& ens, bool with_determinism) {
    auto mg = martingale_checks(ens);
    report.checks.push_back(
        CheckResult::abs_le("market.martingale_increments", mg.max_abs_increment_z, 3.0,
                            "max |z| of mean dM over steps"));
    report.checks.push_back(
        CheckResult::abs_le("market.bracket_compensation", mg.max_abs_compensation_z, 3.0,
                            "max |z| of mean dM^2 - d<M> over steps"));

    // structure condition, recomputed through the shared kernel
    double worst = 0.0;
    const std::size_t paths = ens.n_paths;
    for (std::size_t i = 0; i < ens.n_steps(); ++i) {
        for (std::size_t p = 0; p < paths; ++p) {
            const double expected =
                sc_increment(ens.d_martingale[i * paths + p], ens.alpha[i * paths + p],
                             ens.d_bracket[i]);
            worst = std::max(worst, std::abs(ens.d_price[i * paths + p] - expected));
        }
    }
    report.checks.push_back(CheckResult::eq_zero("market.structure_condition_identity", worst,
                                                 "pathwise dS = dM + alpha d<M>"));

    double bracket_excess = 0.0;
    const double cap = ens.config.c_bar * ens.grid.dt();
    for (double b : ens.d_bracket) bracket_excess = std::max(bracket_excess, b - cap);
    report.checks.push_back(CheckResult::le("market.bracket_bound", bracket_excess, 1e-15,
                                            "d<M> <= c_bar dt per step"));

    const auto k = tradeoff_process(ens);
    double k_violation = 0.0;
    double monotone_violation = 0.0;
    const double k_bound = ens.config.alpha.bound * ens.config.alpha.bound * ens.config.c_bar *
                           ens.grid.horizon;
    for (std::size_t p = 0; p < paths; ++p) {
        for (std::size_t i = 0; i < ens.n_steps(); ++i) {
            monotone_violation = std::max(
                monotone_violation, k[i * paths + p] - k[(i + 1) * paths + p]);
        }
        k_violation = std::max(k_violation, k[ens.n_steps() * paths + p] - k_bound);
    }
    report.checks.push_back(CheckResult::le("market.tradeoff_monotone", monotone_violation, 0.0,
                                            "K is nondecreasing"));
    report.checks.push_back(CheckResult::le("market.tradeoff_bound", k_violation, 1e-12,
                                            "K_T <= Kbar^2 c_bar T"));

    if (with_determinism) {
        PathEnsemble again = simulate_market(ens.config, ens.grid);
        const bool same = arrays_equal(again.d_martingale, ens.d_martingale) &&
                          arrays_equal(again.price, ens.price) &&
                          arrays_equal(again.brownian, ens.brownian) &&
                          arrays_equal(again.jump_count, ens.jump_count);
        report.checks.push_back(CheckResult::eq_zero("market.seed_determinism", same ? 0.0 : 1.0,
                                                     "re-simulation is byte identical"));
    }
}

// ---- information checks -------------------------------------------------

// Splices suffix increments onto shared prefixes so several paths carry the
// same history up to the lag node; estimates under delayed information must
// then agree within each group exactly.
PathEnsemble coupled_ensemble(const MarketConfig& base, const Grid& grid, std::size_t groups,
                              std::size_t copies, std::size_t lag_node) {
    MarketConfig prefix_cfg = base;
    prefix_cfg.n_paths = groups;
    prefix_cfg.seed = base.seed + 1;
    PathEnsemble prefix = simulate_market(prefix_cfg, grid);

    MarketConfig suffix_cfg = base;
    suffix_cfg.n_paths = groups * copies;
    suffix_cfg.seed = base.seed + 2;
    PathEnsemble spliced = simulate_market(suffix_cfg, grid);

    const std::size_t paths = spliced.n_paths;
    for (std::size_t p = 0; p < paths; ++p) {
        const std::size_t g = p / copies;
        for (std::size_t i = 0; i < lag_node; ++i) {
            spliced.d_brownian[i * paths + p] = prefix.d_brownian[i * groups + g];
            spliced.jump_sum[i * paths + p] = prefix.jump_sum[i * groups + g];
            spliced.d_martingale[i * paths + p] = prefix.d_martingale[i * groups + g];
        }
    }
    // rebuild cumulative arrays and the price recursion
    for (std::size_t p = 0; p < paths; ++p) {
        double w = 0.0, m = base.m0, s = base.s0, count = 0.0;
        for (std::size_t i = 0; i < grid.n_steps; ++i) {
            const std::size_t idx = i * paths + p;
            w += spliced.d_brownian[idx];
            m += spliced.d_martingale[idx];
            const double a = base.alpha.kind == AlphaSpec::Kind::constant
                                 ? base.alpha.value
                                 : base.alpha.value * std::tanh(s - base.s0);
            spliced.alpha[idx] = a;
            const double ds = sc_increment(spliced.d_martingale[idx], a, spliced.d_bracket[i]);
            spliced.d_price[idx] = ds;
            s += ds;
            if (spliced.jump_sum[idx] != 0.0) count += 1.0;
            spliced.brownian[(i + 1) * paths + p] = w;
            spliced.martingale[(i + 1) * paths + p] = m;
            spliced.price[(i + 1) * paths + p] = s;
            spliced.jump_count[(i + 1) * paths + p] = count;
        }
    }
    return spliced;
}

void information_checks(RunReport& report, const PathEnsemble& ens, const InformationModel& info,
                        std::span<const double> xi) {
    CondExpectationEngine engine(ens, info.basis);
    const std::size_t paths = ens.n_paths;
    const std::size_t mid = ens.n_steps() / 2;

    // constants are measurable for every sigma-field
    std::vector<double> constant(paths, 3.25);
    {
        auto est = engine.conditional(mid, info, constant);
        double worst = 0.0;
        for (double v : est.values) worst = std::max(worst, std::abs(v - 3.25));
        report.checks.push_back(CheckResult::le("info.constant_target_exact", worst, 1e-9,
                                                "estimate of a constant is the constant"));
    }

    // Jensen: the projection does not increase second moments
    {
        auto est = engine.conditional(mid, info, xi);
        double m2_est = 0.0, m2_target = 0.0;
        for (std::size_t p = 0; p < paths; ++p) {
            m2_est += est.values[p] * est.values[p];
            m2_target += xi[p] * xi[p];
        }
        m2_est /= static_cast<double>(paths);
        m2_target /= static_cast<double>(paths);
        std::vector<double> sq(paths);
        for (std::size_t p = 0; p < paths; ++p) sq[p] = xi[p] * xi[p];
        const double se = mean_stat(sq).standard_error;
        report.checks.push_back(CheckResult::le("info.jensen_contraction", m2_est,
                                                m2_target + 3.0 * se,
                                                "second moment of the estimate vs the target"));
    }

    // projecting an estimate again changes nothing beyond solver noise
    {
        auto est = engine.conditional(mid, info, xi);
        auto re = engine.conditional(mid, info, est.values);
        report.checks.push_back(CheckResult::le("info.projection_idempotent",
                                                rms_difference(est.values, re.values), 1e-6,
                                                "H-projection applied twice"));
    }

    // tower property: H-projection of the F-estimate equals the H-estimate
    {
        auto f_est = engine.at_node(mid, xi);
        auto via_f = engine.conditional(mid, info, f_est.values);
        auto direct = engine.conditional(mid, info, xi);
        double scale = 0.0;
        for (double v : xi) scale += v * v;
        scale = std::sqrt(scale / static_cast<double>(paths));
        const double tol = 6.0 * std::max(scale, 1.0) *
                               std::sqrt(static_cast<double>(f_est.diag.basis_size) /
                                         static_cast<double>(paths)) +
                           1e-9;
        report.checks.push_back(CheckResult::le("info.tower_property",
                                                rms_difference(via_f.values, direct.values), tol,
                                                "project the F-estimate onto H vs direct"));
    }

    // measurability under delay: equal lagged history forces equal estimates
    if (info.kind == InfoKind::delayed) {
        const std::size_t k_tau = info.delay_steps(ens.grid);
        const std::size_t step = std::min(ens.n_steps() - 1, k_tau + ens.n_steps() / 4);
        const std::size_t lag = step - k_tau;
        const std::size_t groups = 40, copies = 4;
        MarketConfig small = ens.config;
        small.n_paths = groups * copies;
        PathEnsemble coupled = coupled_ensemble(small, ens.grid, groups, copies, lag);
        std::vector<double> target(coupled.n_paths);
        for (std::size_t p = 0; p < coupled.n_paths; ++p) {
            target[p] = coupled.m(coupled.n_steps(), p);
        }
        auto est = cond_expect(coupled, step, info, target);
        double worst = 0.0;
        for (std::size_t g = 0; g < groups; ++g) {
            for (std::size_t j = 1; j < copies; ++j) {
                worst = std::max(worst, std::abs(est.values[g * copies + j] -
                                                 est.values[g * copies]));
            }
        }
        report.checks.push_back(CheckResult::eq_zero("info.measurability_delayed", worst,
                                                     "equal lagged state, equal estimate"));
    } else {
        report.checks.push_back(
            CheckResult::skip("info.measurability_delayed", "full information"));
    }
}

// ---- solution checks ----------------------------------------------------

void solution_checks(RunReport& report, const PathEnsemble& ens, const BsdeSolution& sol,
                     const Driver& driver, std::span<const double> xi,
                     const InformationModel& info) {
    const std::size_t n = ens.n_steps();
    const std::size_t paths = ens.n_paths;

    double terminal = 0.0;
    for (std::size_t p = 0; p < paths; ++p) {
        terminal = std::max(terminal, std::abs(sol.y[n * paths + p] - xi[p]));
    }
    report.checks.push_back(
        CheckResult::eq_zero("bsde.terminal_condition", terminal, "Y_N = xi on every path"));

    double recursion = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = ens.grid.time(i);
        for (std::size_t p = 0; p < paths; ++p) {
            const double y_cur = sol.y[i * paths + p];
            const double z = sol.z[i * paths + p];
            const double expected =
                bsde_residual(sol.y[(i + 1) * paths + p], y_cur, driver(p, i, t, y_cur, z),
                              ens.d_bracket[i], z, ens.d_martingale[i * paths + p]);
            recursion = std::max(recursion, std::abs(sol.o_increments[i * paths + p] - expected));
        }
    }
    report.checks.push_back(CheckResult::eq_zero("bsde.pathwise_recursion", recursion,
                                                 "dO recomputes as the step residual"));

    const auto zs = conditional_mean_zscores(ens, sol.o_increments, info.basis.degree);
    report.checks.push_back(CheckResult::le("bsde.o_conditional_mean", max_abs(zs), 3.0,
                                            "per-step z of E[dO | F] = 0"));

    const auto orth = orthogonality_battery(ens, info, sol.o_increments);
    double worst_z = 0.0;
    for (const auto& s : orth) worst_z = std::max(worst_z, std::abs(s.z));
    report.checks.push_back(CheckResult::le("bsde.weak_orthogonality", worst_z, 3.0,
                                            "E[O_T int phi dM] over the phi battery"));

    report.checks.push_back(CheckResult::eq_zero("bsde.picard_converged",
                                                 sol.converged ? 0.0 : 1.0,
                                                 sol.converged ? "" : "best iterate returned"));
    if (sol.ratio_history.empty()) {
        report.checks.push_back(
            CheckResult::skip("bsde.contraction_ratios", "driver free of (y, z)"));
    } else {
        report.checks.push_back(CheckResult::le("bsde.contraction_ratios",
                                                *std::max_element(sol.ratio_history.begin(),
                                                                  sol.ratio_history.end()),
                                                0.6, "norm ratio of successive deltas"));
    }
}

// ---- decomposition checks ----------------------------------------------

void decomposition_checks(RunReport& report, const PathEnsemble& ens, const Decomposition& gkw,
                          const Decomposition& fs, std::span<const double> xi,
                          const InformationModel& info) {
    const std::size_t n = ens.n_steps();
    const std::size_t paths = ens.n_paths;

    double worst_step = 0.0;
    double worst_sum = 0.0;
    for (const Decomposition* dec : {&gkw, &fs}) {
        const std::vector<double>& dint =
            dec->kind == DecompositionKind::gkw ? ens.d_martingale : ens.d_price;
        for (std::size_t p = 0; p < paths; ++p) {
            double acc = dec->u0;
            for (std::size_t i = 0; i < n; ++i) {
                const double expected = decomposition_residual(
                    dec->value[(i + 1) * paths + p], dec->value[i * paths + p],
                    dec->integrand[i * paths + p], dint[i * paths + p]);
                worst_step = std::max(
                    worst_step,
                    std::abs(dec->residual_increments[i * paths + p] - expected));
                acc += dec->integrand[i * paths + p] * dint[i * paths + p] +
                       dec->residual_increments[i * paths + p];
            }
            worst_sum = std::max(worst_sum, std::abs(acc - xi[p]));
        }
    }
    report.checks.push_back(CheckResult::eq_zero("decomposition.reconstruction_exact", worst_step,
                                                 "per-step residual identity"));
    report.checks.push_back(CheckResult::le("decomposition.reconstruction_telescoped", worst_sum,
                                            1e-9, "float accumulation across the grid"));

    if (ens.config.alpha.is_zero()) {
        const double dy = rms_difference(gkw.value, fs.value);
        const double dz = rms_difference(gkw.integrand, fs.integrand);
        report.checks.push_back(CheckResult::le("decomposition.alpha_zero_collapse",
                                                std::max(dy, dz), 1e-10,
                                                "FS equals GKW in the martingale case"));
    } else {
        report.checks.push_back(
            CheckResult::skip("decomposition.alpha_zero_collapse", "alpha not identically zero"));
    }

    double worst_orth = 0.0;
    for (const Decomposition* dec : {&gkw, &fs}) {
        for (const auto& s : orthogonality_battery(ens, info, dec->residual_increments)) {
            worst_orth = std::max(worst_orth, std::abs(s.z));
        }
    }
    report.checks.push_back(CheckResult::le("decomposition.residual_orthogonality", worst_orth,
                                            3.0, "E[A_T int phi dM] over the phi battery"));

    const auto k = tradeoff_process(ens);
    const double k_bound = ens.config.alpha.bound * ens.config.alpha.bound * ens.config.c_bar *
                           ens.grid.horizon;
    double excess = 0.0;
    for (std::size_t p = 0; p < paths; ++p) {
        excess = std::max(excess, k[n * paths + p] - k_bound);
    }
    report.checks.push_back(CheckResult::le("decomposition.tradeoff_precondition", excess, 1e-12,
                                            "bounded mean-variance tradeoff before decomposing"));
}

// ---- hedging checks -----------------------------------------------------

void hedging_checks(RunReport& report, const PathEnsemble& ens, const Strategy& st,
                    std::span<const double> xi, const InformationModel& info) {
    const std::size_t n = ens.n_steps();
    const std::size_t paths = ens.n_paths;

    double replication = 0.0;
    for (std::size_t p = 0; p < paths; ++p) {
        replication = std::max(replication, std::abs(st.value[n * paths + p] - xi[p]));
    }
    report.checks.push_back(
        CheckResult::eq_zero("hedge.replication", replication, "V_N = xi on every path"));

    std::vector<double> dc(n * paths);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < paths; ++p) {
            dc[i * paths + p] = st.cost[(i + 1) * paths + p] - st.cost[i * paths + p];
        }
    }
    const auto zs = conditional_mean_zscores(ens, dc, info.basis.degree);
    report.checks.push_back(CheckResult::le("hedge.mean_self_financing", max_abs(zs), 3.0,
                                            "per-step z of E[dC | F] = 0"));

    double worst_orth = 0.0;
    for (const auto& s : orthogonality_battery(ens, info, dc)) {
        worst_orth = std::max(worst_orth, std::abs(s.z));
    }
    report.checks.push_back(CheckResult::le("hedge.cost_orthogonality", worst_orth, 3.0,
                                            "E[(C_T - C_0) int phi dM] over the phi battery"));

    auto risk = risk_process(st, ens, info);
    const double clip_fraction =
        static_cast<double>(risk.clipped) / static_cast<double>(risk.values.size());
    report.checks.push_back(CheckResult::le("hedge.risk_nonnegative", clip_fraction, 0.05,
                                            "fraction of risk estimates clipped at zero"));

    // local risk quotient over a coarse partition for the whole battery
    std::vector<std::size_t> partition;
    const std::size_t cells = 4;
    for (std::size_t c = 0; c <= cells; ++c) partition.push_back(c * n / cells);
    double min_margin = std::numeric_limits<double>::infinity();
    for (const auto& pert : perturbation_battery(ens, info)) {
        auto rq = risk_quotient(st, ens, info, pert, partition);
        min_margin = std::min(min_margin, rq.min_margin);
    }
    report.checks.push_back(CheckResult::ge("hedge.risk_quotient_floor", min_margin, 0.0,
                                            "min over cells of r_hat + 3 se, full battery"));

    // theta against the closed-form integrand when one exists
    const bool ito_case = ens.config.jump_intensity == 0.0 && ens.config.alpha.is_zero();
    if (ito_case) {
        // E[M_T^2 | F_t] decomposes with integrand 2 M_t; delayed information
        // projects it to the lagged value.
        bool squared_martingale = false;
        double worst = 0.0;
        // Identify the claim through its payoff on the ensemble: xi == M_T^2.
        squared_martingale = true;
        for (std::size_t p = 0; p < paths && squared_martingale; ++p) {
            const double mt = ens.m(n, p);
            if (std::abs(xi[p] - mt * mt) > 1e-12 * (1.0 + mt * mt)) squared_martingale = false;
        }
        if (squared_martingale) {
            std::vector<double> oracle(n * paths);
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t lag = info.information_node(ens.grid, i);
                for (std::size_t p = 0; p < paths; ++p) {
                    oracle[i * paths + p] = 2.0 * ens.m(lag, p);
                }
            }
            worst = rms_difference(st.theta, oracle);
            report.checks.push_back(CheckResult::le("hedge.theta_vs_ito_oracle", worst, 0.1,
                                                    "integrand of the squared martingale"));
        } else {
            report.checks.push_back(
                CheckResult::skip("hedge.theta_vs_ito_oracle", "no closed form for this claim"));
        }
    } else {
        report.checks.push_back(
            CheckResult::skip("hedge.theta_vs_ito_oracle", "no closed form for this market"));
    }
}

void mmm_checks(RunReport& report, const PathEnsemble& ens, const MmmWeights& weights,
                std::span<const double> xi, const Strategy* strategy,
                const InformationModel& info) {
    const std::size_t n = ens.n_steps();
    const std::size_t paths = ens.n_paths;

    std::vector<double> terminal(paths);
    std::vector<double> weighted_price(paths);
    for (std::size_t p = 0; p < paths; ++p) {
        terminal[p] = weights.density[n * paths + p];
        weighted_price[p] = terminal[p] * ens.s(n, p);
    }
    auto mean_l = mean_stat(terminal);
    report.checks.push_back(CheckResult::abs_le(
        "mmm.density_mean",
        mean_l.standard_error > 0.0 ? (mean_l.mean - 1.0) / mean_l.standard_error : 0.0, 3.0,
        "E[L_T] = 1"));

    std::vector<double> centered(paths);
    for (std::size_t p = 0; p < paths; ++p) centered[p] = weighted_price[p] - ens.config.s0;
    auto mean_ls = mean_stat(centered);
    report.checks.push_back(CheckResult::abs_le("mmm.price_consistency", mean_ls.z, 3.0,
                                                "E[L_T S_T] = S_0"));

    report.checks.push_back(CheckResult::eq_zero(
        "mmm.positivity", static_cast<double>(weights.invalid_paths),
        "1 - alpha dM > 0 on every sampled path"));

    double var = 0.0;
    for (std::size_t p = 0; p < paths; ++p) {
        var += (terminal[p] - mean_l.mean) * (terminal[p] - mean_l.mean);
    }
    var /= static_cast<double>(paths);
    report.checks.push_back(CheckResult::eq_zero("mmm.square_integrable",
                                                 std::isfinite(var) ? 0.0 : 1.0,
                                                 "Var(L_T) finite"));

    if (strategy != nullptr && info.kind == InfoKind::full && weights.invalid_paths == 0) {
        InformationModel full = InformationModel::full(info.basis.degree);
        Claim claim{"report", [&xi](const PathEnsemble&, std::size_t p) { return xi[p]; }};
        double acc = 0.0;
        std::size_t count = 0;
        for (std::size_t i = 0; i <= n; i += std::max<std::size_t>(1, n / 8)) {
            auto price = mmm_price(ens, full, claim, i, weights);
            for (std::size_t p = 0; p < paths; ++p) {
                const double d = price[p] - strategy->value[i * paths + p];
                acc += d * d;
                ++count;
            }
        }
        const double rms_gap = std::sqrt(acc / static_cast<double>(count));
        report.checks.push_back(CheckResult::le("mmm.value_agreement", rms_gap, 0.1,
                                                "Bayes price vs the FS value process"));
    } else {
        report.checks.push_back(CheckResult::skip(
            "mmm.value_agreement",
            info.kind == InfoKind::full ? "density not valid on every path"
                                        : "partial information: no MMM identification"));
    }
}

std::filesystem::path artifact_path(const Scenario& sc, Subcommand cmd, const std::string& what) {
    return std::filesystem::path(sc.output_dir) /
           (subcommand_name(cmd) + "_" + sc.hash() + "_" + what);
}

}  // namespace

Subcommand parse_subcommand(const std::string& name) {
    if (name == "simulate") return Subcommand::simulate;
    if (name == "solve") return Subcommand::solve;
    if (name == "decompose") return Subcommand::decompose;
    if (name == "hedge") return Subcommand::hedge;
    if (name == "mmm") return Subcommand::mmm;
    if (name == "validate") return Subcommand::validate;
    throw std::invalid_argument("unknown subcommand '" + name + "'");
}

std::string subcommand_name(Subcommand cmd) {
    switch (cmd) {
        case Subcommand::simulate: return "simulate";
        case Subcommand::solve: return "solve";
        case Subcommand::decompose: return "decompose";
        case Subcommand::hedge: return "hedge";
        case Subcommand::mmm: return "mmm";
        case Subcommand::validate: return "validate";
    }
    return "?";
}

RunReport run_scenario(const Scenario& sc, Subcommand cmd, const RunOptions& options) {
    sc.validate();

    RunReport report;
    report.scenario_hash = sc.hash();
    report.subcommand = subcommand_name(cmd);

    PathEnsemble ens;
    {
        Stopwatch sw(report, "simulate");
        ens = simulate_market(sc.market, sc.grid);
    }

    const bool validate_all = cmd == Subcommand::validate;
    if (cmd == Subcommand::simulate || validate_all) {
        Stopwatch sw(report, "market_checks");
        market_checks(report, ens, /*with_determinism=*/true);
    }

    Claim claim = sc.claim.build();
    std::vector<double> xi = evaluate_claim(claim, ens);
    Driver driver = sc.driver.build(ens);

    if (validate_all) {
        Stopwatch sw(report, "information_checks");
        information_checks(report, ens, sc.info, xi);
        auto dc = validate_driver(driver, ens);
        report.checks.push_back(CheckResult::eq_zero("bsde.driver_lipschitz",
                                                     dc.lipschitz_ok ? 0.0 : 1.0,
                                                     "spot-checked on random pairs"));
        report.checks.push_back(CheckResult::eq_zero("bsde.driver_integrability",
                                                     dc.integrable ? 0.0 : 1.0,
                                                     "E[int f(t,0,0)^2 d<M>] finite"));
    }

    BsdeSolution sol;
    const bool need_solution = cmd == Subcommand::solve || cmd == Subcommand::hedge ||
                               cmd == Subcommand::decompose || cmd == Subcommand::mmm ||
                               validate_all;
    if (need_solution) {
        Stopwatch sw(report, "solve");
        if (sc.scheme == "blocks") {
            sol = solve_bsde_delayed_blocks(ens, sc.info.tau, driver, claim,
                                            sc.info.basis.degree);
        } else {
            sol = solve_bsde_partial(ens, sc.info, driver, claim, sc.solve);
        }
        report.picard_iterations = sol.picard_iterations;
        report.picard_converged = sol.converged;
        report.pnorm_history = sol.pnorm_history;
        report.ratio_history = sol.ratio_history;
    }

    if (cmd == Subcommand::solve || validate_all) {
        Stopwatch sw(report, "solution_checks");
        solution_checks(report, ens, sol, driver, xi, sc.info);
        if (validate_all) {
            if (driver.name == "zero") {
                Decomposition gkw = gkw_decompose(ens, sc.info, claim);
                const double dy = rms_difference(gkw.value, sol.y);
                const double dz = rms_difference(gkw.integrand, sol.z);
                report.checks.push_back(CheckResult::le("bsde.gkw_consistency",
                                                        std::max(dy, dz), 1e-10,
                                                        "driver-free solve equals GKW"));
            } else {
                report.checks.push_back(
                    CheckResult::skip("bsde.gkw_consistency", "driver not identically zero"));
            }
            if (!driver.depends_on_z && sc.info.kind == InfoKind::full) {
                BsdeSolution full = solve_bsde_full(ens, driver, claim, sc.solve);
                BsdeSolution reduced = reduce_full_to_partial(full, ens, sc.info);
                double dy = 0.0;
                for (std::size_t i = 0; i < full.y.size(); ++i) {
                    dy = std::max(dy, std::abs(reduced.y[i] - full.y[i]));
                }
                const double dz = rms_difference(reduced.z, full.z);
                report.checks.push_back(CheckResult::le("bsde.full_reduction_identity",
                                                        std::max(dy, dz), 1e-8,
                                                        "projection onto F is the identity"));
            } else {
                report.checks.push_back(CheckResult::skip(
                    "bsde.full_reduction_identity",
                    "needs full information and a z-independent driver"));
            }
            const bool blocks_apply = sc.info.kind == InfoKind::delayed &&
                                      !driver.depends_on_y &&
                                      ens.n_steps() % sc.info.delay_steps(ens.grid) == 0;
            if (blocks_apply) {
                BsdeSolution blocks = solve_bsde_delayed_blocks(ens, sc.info.tau, driver, claim,
                                                                sc.info.basis.degree);
                BsdeSolution picard = sc.scheme == "blocks"
                                          ? solve_bsde_partial(ens, sc.info, driver, claim,
                                                               sc.solve)
                                          : sol;
                report.checks.push_back(CheckResult::le(
                    "bsde.blocks_vs_picard", rms_difference(blocks.y, picard.y), 0.05,
                    "block construction against the fixed point"));
            } else {
                report.checks.push_back(CheckResult::skip(
                    "bsde.blocks_vs_picard", "block construction not applicable"));
            }
        }
    }

    Decomposition gkw, fs;
    if (cmd == Subcommand::decompose || cmd == Subcommand::hedge || validate_all) {
        Stopwatch sw(report, "decompose");
        gkw = gkw_decompose(ens, sc.info, claim);
        fs = fs_decompose(ens, sc.info, claim, sc.solve);
    }
    if (cmd == Subcommand::decompose || validate_all) {
        Stopwatch sw(report, "decomposition_checks");
        decomposition_checks(report, ens, gkw, fs, xi, sc.info);
    }

    Strategy strategy;
    MmmWeights weights;
    bool have_weights = false;
    if (cmd == Subcommand::hedge || cmd == Subcommand::mmm || validate_all) {
        Stopwatch sw(report, "hedge");
        strategy = optimal_strategy(ens, sc.info, claim, sc.solve);
        weights = mmm_density(ens, /*failure_threshold=*/1.0);
        have_weights = true;
    }
    if (cmd == Subcommand::hedge || validate_all) {
        Stopwatch sw(report, "hedging_checks");
        hedging_checks(report, ens, strategy, xi, sc.info);
    }
    if (cmd == Subcommand::mmm || cmd == Subcommand::hedge || validate_all) {
        Stopwatch sw(report, "mmm_checks");
        mmm_checks(report, ens, weights, xi, &strategy, sc.info);
    }

    if (validate_all) {
        // scenario hash is a pure function of the semantic fields
        const bool stable = sc.hash() == report.scenario_hash;
        report.checks.push_back(CheckResult::eq_zero("cli.hash_stable", stable ? 0.0 : 1.0,
                                                     "hash recomputation agrees"));
    }

    if (options.write_artifacts) {
        Stopwatch sw(report, "export");
        std::filesystem::create_directories(sc.output_dir);
        if (sc.export_csv) {
            if (cmd == Subcommand::simulate || validate_all) {
                auto p = artifact_path(sc, cmd, "ensemble.csv");
                write_ensemble_csv(p.string(), ens);
                report.artifacts.push_back(p.string());
            }
            if (need_solution && (cmd == Subcommand::solve || validate_all)) {
                auto p = artifact_path(sc, cmd, "solution.csv");
                write_solution_csv(p.string(), sol);
                report.artifacts.push_back(p.string());
            }
            if (cmd == Subcommand::decompose || validate_all) {
                auto pg = artifact_path(sc, cmd, "gkw.csv");
                write_decomposition_csv(pg.string(), gkw);
                report.artifacts.push_back(pg.string());
                auto pf = artifact_path(sc, cmd, "fs.csv");
                write_decomposition_csv(pf.string(), fs);
                report.artifacts.push_back(pf.string());
            }
            if (cmd == Subcommand::hedge || validate_all) {
                auto p = artifact_path(sc, cmd, "strategy.csv");
                write_strategy_csv(p.string(), strategy, ens);
                report.artifacts.push_back(p.string());
            }
            if (have_weights && (cmd == Subcommand::mmm || validate_all)) {
                auto p = artifact_path(sc, cmd, "mmm.csv");
                write_mmm_csv(p.string(), weights, ens);
                report.artifacts.push_back(p.string());
            }
        }
        auto rp = artifact_path(sc, cmd, "report.json");
        report.artifacts.push_back(rp.string());
        report.save(rp.string());
    }
    return report;
}

}  // namespace qhedge
