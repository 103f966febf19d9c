#include <doctest.h>

#include <cmath>

#include "qhedge/diagnostics.hpp"
#include "qhedge/information.hpp"
#include "test_support.hpp"

using namespace qhedge;

namespace {

PathEnsemble standard_brownian(std::size_t paths, std::uint64_t seed = 11) {
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

std::vector<double> terminal_martingale(const PathEnsemble& ens) {
    std::vector<double> mt(ens.n_paths);
    for (std::size_t p = 0; p < ens.n_paths; ++p) mt[p] = ens.m(ens.n_steps(), p);
    return mt;
}

}  // namespace

TEST_CASE("constants are reproduced exactly at every level") {
    auto ens = standard_brownian(4000);
    std::vector<double> target(ens.n_paths, 2.5);
    for (auto info : {InformationModel::full(), InformationModel::delayed(0.25)}) {
        auto est = cond_expect(ens, 40, info, target);
        for (double v : est.values) CHECK(v == doctest::Approx(2.5).epsilon(1e-12));
    }
}

TEST_CASE("trivial sigma-field at step zero returns the mean") {
    auto ens = standard_brownian(5000);
    auto mt = terminal_martingale(ens);
    double mean = 0.0;
    for (double v : mt) mean += v;
    mean /= static_cast<double>(mt.size());
    auto est = cond_expect(ens, 0, InformationModel::full(), mt);
    CHECK(est.diag.trivial);
    for (double v : est.values) CHECK(v == mean);
}

TEST_CASE("full information estimate of M_T tracks the running martingale") {
    auto ens = standard_brownian(50000);
    auto mt = terminal_martingale(ens);
    for (std::size_t step : {16u, 32u, 48u}) {
        auto est = cond_expect(ens, step, InformationModel::full(), mt);
        std::vector<double> oracle(ens.n_paths);
        for (std::size_t p = 0; p < ens.n_paths; ++p) oracle[p] = ens.m(step, p);
        CHECK(rms_difference(est.values, oracle) < 0.05);
    }
}

TEST_CASE("delayed estimate of M_T tracks the lagged martingale") {
    auto ens = standard_brownian(50000);
    auto mt = terminal_martingale(ens);
    auto info = InformationModel::delayed(0.25);
    // t = 0.5, lag lands at t = 0.25
    auto est = cond_expect(ens, 32, info, mt);
    std::vector<double> oracle(ens.n_paths);
    for (std::size_t p = 0; p < ens.n_paths; ++p) oracle[p] = ens.m(16, p);
    CHECK(rms_difference(est.values, oracle) < 0.05);
    CHECK(est.diag.node == 16);
}

TEST_CASE("identical information states receive identical estimates") {
    // groups of paths sharing the history up to the lag node
    const std::size_t groups = 32, copies = 4, paths = groups * copies;
    auto grid = Grid::uniform(1.0, 16);
    const std::size_t lag = 8;
    auto dm = test::gaussian_increments(grid, paths, 5);
    // overwrite the prefix so every copy in a group shares it
    for (std::size_t i = 0; i < lag; ++i) {
        for (std::size_t p = 0; p < paths; ++p) {
            dm[i * paths + p] = dm[i * paths + (p / copies) * copies];
        }
    }
    auto ens = test::manual_ensemble(grid, paths, dm,
                                     std::vector<double>(grid.n_steps, grid.dt()));
    auto mt = terminal_martingale(ens);
    auto info = InformationModel::delayed(0.5);  // 8 steps of delay
    auto est = cond_expect(ens, 16, info, mt);
    for (std::size_t g = 0; g < groups; ++g) {
        for (std::size_t j = 1; j < copies; ++j) {
            CHECK(est.values[g * copies + j] == est.values[g * copies]);
        }
    }
}

TEST_CASE("projection contracts second moments and is idempotent") {
    auto ens = standard_brownian(20000);
    auto info = InformationModel::delayed(0.25);
    std::vector<double> target(ens.n_paths);
    for (std::size_t p = 0; p < ens.n_paths; ++p) {
        const double m = ens.m(ens.n_steps(), p);
        target[p] = m * m;
    }
    auto est = cond_expect(ens, 40, info, target);
    double m2_est = 0.0, m2_tgt = 0.0;
    for (std::size_t p = 0; p < ens.n_paths; ++p) {
        m2_est += est.values[p] * est.values[p];
        m2_tgt += target[p] * target[p];
    }
    CHECK(m2_est <= m2_tgt);

    auto re = cond_expect(ens, 40, info, est.values);
    CHECK(rms_difference(re.values, est.values) < 1e-6);
}

TEST_CASE("tower property: H-projection of the F-estimate matches the direct one") {
    auto ens = standard_brownian(50000);
    auto info = InformationModel::delayed(0.25);
    std::vector<double> target(ens.n_paths);
    for (std::size_t p = 0; p < ens.n_paths; ++p) {
        const double m = ens.m(ens.n_steps(), p);
        target[p] = m * m;
    }
    CondExpectationEngine engine(ens, info.basis);
    auto f_est = engine.at_node(32, target);
    auto via_f = engine.conditional(32, info, f_est.values);
    auto direct = engine.conditional(32, info, target);
    CHECK(rms_difference(via_f.values, direct.values) < 0.05);
}

TEST_CASE("rank-deficient designs fall back to ridge with a diagnostic") {
    const std::size_t paths = 2000;
    auto grid = Grid::uniform(1.0, 8);
    auto dm = test::gaussian_increments(grid, paths, 9);
    auto ens = test::manual_ensemble(grid, paths, dm,
                                     std::vector<double>(grid.n_steps, grid.dt()));
    // price nonlinearly tied to the martingale: S = M^2 duplicates basis columns
    for (std::size_t i = 0; i <= grid.n_steps; ++i) {
        for (std::size_t p = 0; p < paths; ++p) {
            const double m = ens.martingale[i * paths + p];
            ens.price[i * paths + p] = m * m;
        }
    }
    std::vector<double> target(paths);
    for (std::size_t p = 0; p < paths; ++p) target[p] = ens.m(8, p);
    auto est = cond_expect(ens, 4, InformationModel::full(), target);
    CHECK(est.diag.ridge_used);
    for (double v : est.values) CHECK(std::isfinite(v));
}

TEST_CASE("dual projection recovers densities") {
    auto ens = standard_brownian(20000);
    const std::size_t n = ens.n_steps();
    const std::size_t paths = ens.n_paths;
    std::vector<double> den(n * paths);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < paths; ++p) den[i * paths + p] = ens.d_bracket[i];
    }

    SUBCASE("proportional increments give the constant density") {
        std::vector<double> num(n * paths);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t p = 0; p < paths; ++p) {
                num[i * paths + p] = 1.7 * ens.d_bracket[i];
            }
        }
        auto proj = dual_project(ens, InformationModel::delayed(0.25), num, den);
        for (double v : proj.density) CHECK(v == doctest::Approx(1.7).epsilon(1e-10));
        CHECK(proj.zero_denominator_cells == 0);
    }

    SUBCASE("H-predictable integrands are reproduced") {
        auto info = InformationModel::delayed(0.25);
        std::vector<double> ztilde(n * paths);
        std::vector<double> num(n * paths);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t lag = info.information_node(ens.grid, i);
            for (std::size_t p = 0; p < paths; ++p) {
                ztilde[i * paths + p] = ens.m(lag, p);
                num[i * paths + p] = ztilde[i * paths + p] * ens.d_bracket[i];
            }
        }
        auto proj = dual_project(ens, info, num, den);
        CHECK(rms_difference(proj.density, ztilde) < 1e-6);
    }

    SUBCASE("full information projection is the identity on F-integrands") {
        auto info = InformationModel::full();
        std::vector<double> ztilde(n * paths);
        std::vector<double> num(n * paths);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t p = 0; p < paths; ++p) {
                const double m = ens.m(i, p);
                ztilde[i * paths + p] = m + 0.5 * m * m;
                num[i * paths + p] = ztilde[i * paths + p] * ens.d_bracket[i];
            }
        }
        auto proj = dual_project(ens, info, num, den);
        CHECK(rms_difference(proj.density, ztilde) < 1e-8);
    }

    SUBCASE("vanishing denominators follow the null-set convention") {
        std::vector<double> zero_den(n * paths, 0.0);
        std::vector<double> num(n * paths, 0.3);
        auto proj = dual_project(ens, InformationModel::full(), num, zero_den);
        for (double v : proj.density) CHECK(v == 0.0);
        CHECK(proj.zero_denominator_cells == n * paths);
    }
}

TEST_CASE("misaligned or out-of-range delays are rejected") {
    auto ens = standard_brownian(100);
    std::vector<double> target(ens.n_paths, 1.0);
    CHECK_THROWS_AS(cond_expect(ens, 4, InformationModel::delayed(0.1), target),
                    std::invalid_argument);  // 0.1 not a multiple of 1/64
    CHECK_THROWS_AS(cond_expect(ens, 4, InformationModel::delayed(1.5), target),
                    std::invalid_argument);
    CHECK_THROWS_AS(cond_expect(ens, 4, InformationModel::delayed(0.0), target),
                    std::invalid_argument);
    std::vector<double> bad(ens.n_paths, 1.0);
    bad[3] = std::nan("");
    CHECK_THROWS_AS(cond_expect(ens, 4, InformationModel::full(), bad), std::invalid_argument);
}
