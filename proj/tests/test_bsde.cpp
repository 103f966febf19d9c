#include <doctest.h>

#include <cmath>

#include "qhedge/bsde.hpp"
#include "qhedge/decomposition.hpp"
#include "qhedge/diagnostics.hpp"
#include "test_support.hpp"

using namespace qhedge;

namespace {

PathEnsemble standard_brownian(std::size_t paths, std::uint64_t seed = 21) {
    MarketConfig cfg;
    cfg.sigma_bar = 1.0;
    cfg.jump_intensity = 0.0;
    cfg.alpha = AlphaSpec::constant(0.0);
    cfg.c_bar = 1.0;
    cfg.s0 = 1.0;
    cfg.m0 = 0.0;
    cfg.seed = seed;
    cfg.n_paths = paths;
    return simulate_market(cfg, Grid::uniform(1.0, 64));
}

Claim squared_martingale() { return claim_power(ClaimUnderlying::martingale, 2.0); }

void check_exact_identities(const PathEnsemble& ens, const BsdeSolution& sol,
                            const Driver& driver, const std::vector<double>& xi) {
    const std::size_t n = ens.n_steps();
    const std::size_t paths = ens.n_paths;
    for (std::size_t p = 0; p < paths; ++p) {
        CHECK(sol.y[n * paths + p] == xi[p]);
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double t = ens.grid.time(i);
        for (std::size_t p = 0; p < paths; ++p) {
            const double y_cur = sol.y[i * paths + p];
            const double z = sol.z[i * paths + p];
            const double expected =
                bsde_residual(sol.y[(i + 1) * paths + p], y_cur, driver(p, i, t, y_cur, z),
                              ens.d_bracket[i], z, ens.d_martingale[i * paths + p]);
            CHECK(sol.o_increments[i * paths + p] == expected);
        }
    }
}

}  // namespace

TEST_CASE("constant claims solve trivially") {
    auto ens = standard_brownian(3000);
    Claim c{"const", [](const PathEnsemble&, std::size_t) { return 4.0; }};
    auto prev_y = std::vector<double>(ens.n_nodes() * ens.n_paths, 0.0);
    auto prev_z = std::vector<double>(ens.n_steps() * ens.n_paths, 0.0);
    auto sol = picard_step(ens, InformationModel::full(), Driver::zero(), c, prev_y, prev_z);
    for (double y : sol.y) CHECK(y == doctest::Approx(4.0).epsilon(1e-12));
    for (double z : sol.z) CHECK(z == doctest::Approx(0.0).epsilon(1e-10));
    for (double o : sol.o_increments) CHECK(o == doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("martingale claims reproduce the representation") {
    auto ens = standard_brownian(50000);
    auto sol = solve_bsde_partial(ens, InformationModel::full(), Driver::zero(),
                                  claim_identity(ClaimUnderlying::martingale));
    CHECK(sol.picard_iterations == 1);
    const std::size_t paths = ens.n_paths;

    std::vector<double> y_oracle(sol.y.size());
    for (std::size_t i = 0; i <= ens.n_steps(); ++i) {
        for (std::size_t p = 0; p < paths; ++p) y_oracle[i * paths + p] = ens.m(i, p);
    }
    CHECK(rms_difference(sol.y, y_oracle) < 0.05);

    std::vector<double> z_oracle(sol.z.size(), 1.0);
    CHECK(rms_difference(sol.z, z_oracle) < 0.05);

    auto xi = evaluate_claim(claim_identity(ClaimUnderlying::martingale), ens);
    check_exact_identities(ens, sol, Driver::zero(), xi);
}

TEST_CASE("driver-free solves converge in exactly one iteration and match GKW") {
    auto ens = standard_brownian(10000);
    auto info = InformationModel::delayed(0.25);
    auto sol = solve_bsde_partial(ens, info, Driver::zero(), squared_martingale());
    CHECK(sol.picard_iterations == 1);
    CHECK(sol.converged);

    auto gkw = gkw_decompose(ens, info, squared_martingale());
    CHECK(rms_difference(sol.y, gkw.value) <= 1e-10);
    CHECK(rms_difference(sol.z, gkw.integrand) <= 1e-10);
    CHECK(rms_difference(sol.o_increments, gkw.residual_increments) <= 1e-10);
}

TEST_CASE("linear driver matches the integrating-factor closed form") {
    auto ens = standard_brownian(20000);
    const double r = 0.5;
    auto sol = solve_bsde_partial(ens, InformationModel::full(), Driver::linear_in_y(r),
                                  squared_martingale());
    CHECK(sol.converged);
    CHECK(sol.picard_iterations <= 8);

    const std::size_t paths = ens.n_paths;
    const double horizon = ens.grid.horizon;
    std::vector<double> oracle(sol.y.size());
    for (std::size_t i = 0; i <= ens.n_steps(); ++i) {
        const double t = ens.grid.time(i);
        for (std::size_t p = 0; p < paths; ++p) {
            const double m = ens.m(i, p);
            oracle[i * paths + p] = std::exp(-r * (horizon - t)) * (m * m + (horizon - t));
        }
    }
    CHECK(rms_difference(sol.y, oracle) < 0.05);

    // contraction: every recorded ratio at most 0.6 from the second iterate on
    REQUIRE(!sol.ratio_history.empty());
    for (double ratio : sol.ratio_history) CHECK(ratio <= 0.6);

    auto xi = evaluate_claim(squared_martingale(), ens);
    check_exact_identities(ens, sol, Driver::linear_in_y(r), xi);

    const auto orth = orthogonality_battery(ens, InformationModel::full(), sol.o_increments);
    CHECK(orth.size() >= 5);
    for (const auto& s : orth) CHECK(std::abs(s.z) <= 3.0);
}

TEST_CASE("non-convergence is reported, never silent") {
    auto ens = standard_brownian(2000);
    SolveOptions opts;
    opts.tol = 1e-12;
    opts.max_iter = 1;
    auto sol = solve_bsde_partial(ens, InformationModel::full(), Driver::linear_in_y(0.5),
                                  squared_martingale(), opts);
    CHECK(!sol.converged);
    CHECK(sol.picard_iterations == 1);
}

TEST_CASE("driver blow-ups abort with the offending step") {
    auto ens = standard_brownian(500);
    Driver bad;
    bad.name = "explosive";
    bad.f = [](std::size_t, std::size_t, double, double y, double) {
        return std::exp(800.0 * (1.0 + std::abs(y)));
    };
    bad.lipschitz_k = 1.0;
    bad.depends_on_y = true;
    try {
        solve_bsde_partial(ens, InformationModel::full(), bad, squared_martingale());
        FAIL("expected a runtime error");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("step") != std::string::npos);
    }
}

TEST_CASE("p-norm block count follows the contraction threshold") {
    CHECK(p_norm_block_count(0.0, 1.0, 1.0) == 1);
    CHECK(p_norm_block_count(0.5, 0.0, 1.0) == 1);
    // 252 K^2 = 2.5 -> r0 = 0.4 -> 3 blocks on [0, 1]
    CHECK(p_norm_block_count(std::sqrt(1.0 / (252.0 * 0.4)), 1.0, 1.0) == 3);
    // weak drivers keep a single block
    CHECK(p_norm_block_count(0.01, 1.0, 1.0) == 1);
}

TEST_CASE("p-norm values and sandwich") {
    auto grid = Grid::uniform(1.0, 16);
    const std::size_t paths = 500;
    const std::size_t n = grid.n_steps;
    std::vector<double> bracket(n, grid.dt());

    BsdeDelta zero;
    zero.y.assign((n + 1) * paths, 0.0);
    zero.z.assign(n * paths, 0.0);
    zero.o_increments.assign(n * paths, 0.0);
    CHECK(p_norm(zero, grid, paths, 0.3, 1.0, bracket) == 0.0);

    // single block, dZ = dO = 0: the norm is the mean of the pathwise sup
    BsdeDelta dy = zero;
    for (std::size_t i = 0; i <= n; ++i) {
        for (std::size_t p = 0; p < paths; ++p) {
            dy.y[i * paths + p] = static_cast<double>(p % 7) * (i == 5 ? 1.0 : 0.5);
        }
    }
    double expected = 0.0;
    for (std::size_t p = 0; p < paths; ++p) {
        double sup = 0.0;
        for (std::size_t i = 0; i <= n; ++i) {
            sup = std::max(sup, dy.y[i * paths + p] * dy.y[i * paths + p]);
        }
        expected += sup;
    }
    expected /= static_cast<double>(paths);
    CHECK(p_norm(dy, grid, paths, 0.0, 1.0, bracket) == doctest::Approx(expected).epsilon(1e-12));

    // random deltas: classical norm <= weighted norm <= m 210^(m-1) classical
    const double k_lip = std::sqrt(1.0 / (252.0 * 0.4));  // three blocks
    const std::size_t blocks = p_norm_block_count(k_lip, 1.0, 1.0);
    CHECK(blocks == 3);
    auto dm = test::gaussian_increments(grid, paths, 33);
    auto dm2 = test::gaussian_increments(grid, paths, 34);
    auto dm3 = test::gaussian_increments(grid, paths, 35);
    BsdeDelta rnd;
    rnd.y.assign((n + 1) * paths, 0.0);
    rnd.z = dm2;
    rnd.o_increments = dm3;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < paths; ++p) {
            rnd.y[(i + 1) * paths + p] = rnd.y[i * paths + p] + dm[i * paths + p];
        }
    }
    double classical = 0.0;
    {
        double sup_term = 0.0, z_term = 0.0, o_term = 0.0;
        for (std::size_t p = 0; p < paths; ++p) {
            double sup = 0.0;
            for (std::size_t i = 0; i <= n; ++i) {
                sup = std::max(sup, rnd.y[i * paths + p] * rnd.y[i * paths + p]);
            }
            sup_term += sup;
            for (std::size_t i = 0; i < n; ++i) {
                z_term += rnd.z[i * paths + p] * rnd.z[i * paths + p] * bracket[i];
                o_term += rnd.o_increments[i * paths + p] * rnd.o_increments[i * paths + p];
            }
        }
        classical = (sup_term + z_term + o_term) / static_cast<double>(paths);
    }
    const double weighted = p_norm(rnd, grid, paths, k_lip, 1.0, bracket);
    CHECK(classical <= weighted * (1.0 + 1e-12));
    CHECK(weighted <=
          static_cast<double>(blocks) * std::pow(210.0, static_cast<double>(blocks - 1)) *
              classical * (1.0 + 1e-12));
}

TEST_CASE("delayed block construction") {
    auto ens = standard_brownian(20000);

    SUBCASE("driver-free blocks agree with delayed GKW") {
        auto blocks = solve_bsde_delayed_blocks(ens, 0.25, Driver::zero(), squared_martingale());
        auto info = InformationModel::delayed(0.25);
        auto gkw = gkw_decompose(ens, info, squared_martingale());
        CHECK(rms_difference(blocks.y, gkw.value) < 0.05);
        CHECK(rms_difference(blocks.z, gkw.integrand) < 0.05);

        auto xi = evaluate_claim(squared_martingale(), ens);
        check_exact_identities(ens, blocks, Driver::zero(), xi);
    }

    SUBCASE("constant drivers shift the value by the remaining bracket") {
        const double c = 0.7;
        auto blocks = solve_bsde_delayed_blocks(ens, 0.25, Driver::constant(c),
                                                squared_martingale());
        auto info = InformationModel::delayed(0.25);
        auto gkw = gkw_decompose(ens, info, squared_martingale());
        const std::size_t paths = ens.n_paths;
        double total_bracket = ens.total_bracket();
        std::vector<double> oracle(blocks.y.size());
        double consumed = 0.0;
        for (std::size_t i = 0; i <= ens.n_steps(); ++i) {
            for (std::size_t p = 0; p < paths; ++p) {
                oracle[i * paths + p] = gkw.value[i * paths + p] + c * (total_bracket - consumed);
            }
            if (i < ens.n_steps()) consumed += ens.d_bracket[i];
        }
        CHECK(rms_difference(blocks.y, oracle) < 0.05);
    }

    SUBCASE("projected integrand agrees with the fixed point") {
        auto blocks = solve_bsde_delayed_blocks(ens, 0.25, Driver::linear_in_z(0.3),
                                                squared_martingale());
        auto picard = solve_bsde_partial(ens, InformationModel::delayed(0.25),
                                         Driver::linear_in_z(0.3), squared_martingale());
        CHECK(picard.converged);
        CHECK(rms_difference(blocks.y, picard.y) < 0.05);
        CHECK(rms_difference(blocks.z, picard.z) < 0.1);
    }

    SUBCASE("misaligned horizons and y-drivers are rejected") {
        CHECK_THROWS_AS(
            solve_bsde_delayed_blocks(ens, 0.375, Driver::zero(), squared_martingale()),
            std::invalid_argument);
        CHECK_THROWS_AS(
            solve_bsde_delayed_blocks(ens, 0.25, Driver::linear_in_y(0.5), squared_martingale()),
            std::invalid_argument);
    }
}

TEST_CASE("reduction of full-information solutions") {
    auto ens = standard_brownian(20000);

    SUBCASE("projection onto the full filtration is the identity") {
        auto full = solve_bsde_full(ens, Driver::zero(), squared_martingale());
        auto reduced = reduce_full_to_partial(full, ens, InformationModel::full());
        CHECK(rms_difference(reduced.y, full.y) == 0.0);
        CHECK(rms_difference(reduced.z, full.z) < 1e-8);
        CHECK(rms_difference(reduced.o_increments, full.o_increments) < 1e-8);
    }

    SUBCASE("z-independent drivers: reduction equals the direct partial solve") {
        auto info = InformationModel::delayed(0.25);
        auto driver = Driver::linear_in_y(0.5);
        auto full = solve_bsde_full(ens, driver, squared_martingale());
        auto reduced = reduce_full_to_partial(full, ens, info);
        auto direct = solve_bsde_partial(ens, info, driver, squared_martingale());
        CHECK(rms_difference(reduced.y, direct.y) < 0.01);
        CHECK(rms_difference(reduced.z, direct.z) < 0.1);

        // deterministic bracket: the density is the plain projection of Z
        CondExpectationEngine engine(ens, info.basis);
        const std::size_t paths = ens.n_paths;
        double worst = 0.0;
        for (std::size_t i = 0; i < ens.n_steps(); ++i) {
            auto proj = engine.conditional(
                i, info, std::span<const double>(full.z.data() + i * paths, paths));
            for (std::size_t p = 0; p < paths; ++p) {
                worst = std::max(worst, std::abs(proj.values[p] - reduced.z[i * paths + p]));
            }
        }
        CHECK(worst < 1e-9);
    }

    SUBCASE("mismatched grids are rejected") {
        auto full = solve_bsde_full(ens, Driver::zero(), squared_martingale());
        auto other = standard_brownian(20000, 99);
        other.grid = Grid::uniform(2.0, 64);
        CHECK_THROWS_AS(reduce_full_to_partial(full, other, InformationModel::full()),
                        std::invalid_argument);
    }
}

TEST_CASE("driver validation") {
    auto ens = standard_brownian(500);

    auto good = validate_driver(Driver::linear_in_y(0.5), ens);
    CHECK(good.lipschitz_ok);
    CHECK(good.integrable);

    Driver dishonest = Driver::linear_in_y(2.0);
    dishonest.lipschitz_k = 0.1;  // declared constant too small
    auto bad = validate_driver(dishonest, ens);
    CHECK(!bad.lipschitz_ok);

    auto strict = validate_driver(Driver::structure(ens), ens);
    CHECK(strict.lipschitz_ok);
    CHECK(strict.integrable);
}

TEST_CASE("claims with non-finite payoffs are rejected") {
    auto ens = standard_brownian(500);
    // fractional power of a sign-changing terminal value
    CHECK_THROWS_AS(evaluate_claim(claim_power(ClaimUnderlying::martingale, 0.5), ens),
                    std::invalid_argument);
}
