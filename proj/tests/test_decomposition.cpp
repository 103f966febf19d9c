#include <doctest.h>

#include <cmath>

#include "qhedge/decomposition.hpp"
#include "qhedge/diagnostics.hpp"
#include "test_support.hpp"

using namespace qhedge;

namespace {

PathEnsemble brownian(std::size_t paths, double alpha = 0.0, std::uint64_t seed = 31) {
    MarketConfig cfg;
    cfg.sigma_bar = 1.0;
    cfg.jump_intensity = 0.0;
    cfg.alpha = AlphaSpec::constant(alpha);
    cfg.c_bar = 1.0;
    cfg.s0 = 1.0;
    cfg.m0 = 0.0;
    cfg.seed = seed;
    cfg.n_paths = paths;
    return simulate_market(cfg, Grid::uniform(1.0, 64));
}

void check_reconstruction(const PathEnsemble& ens, const Decomposition& dec,
                          const std::vector<double>& xi) {
    const std::size_t n = ens.n_steps();
    const std::size_t paths = ens.n_paths;
    const std::vector<double>& dint =
        dec.kind == DecompositionKind::gkw ? ens.d_martingale : ens.d_price;
    double worst_sum = 0.0;
    for (std::size_t p = 0; p < paths; ++p) {
        double acc = dec.u0;
        for (std::size_t i = 0; i < n; ++i) {
            const double expected =
                decomposition_residual(dec.value[(i + 1) * paths + p], dec.value[i * paths + p],
                                       dec.integrand[i * paths + p], dint[i * paths + p]);
            // stored residual increments recompute bitwise
            CHECK(dec.residual_increments[i * paths + p] == expected);
            acc += dec.integrand[i * paths + p] * dint[i * paths + p] +
                   dec.residual_increments[i * paths + p];
        }
        worst_sum = std::max(worst_sum, std::abs(acc - xi[p]));
    }
    CHECK(worst_sum <= 1e-9);
}

}  // namespace

TEST_CASE("constant claims decompose trivially") {
    auto ens = brownian(2000);
    Claim c{"const", [](const PathEnsemble&, std::size_t) { return 2.0; }};
    auto gkw = gkw_decompose(ens, InformationModel::full(), c);
    CHECK(gkw.u0 == doctest::Approx(2.0).epsilon(1e-12));
    for (double h : gkw.integrand) CHECK(h == doctest::Approx(0.0).epsilon(1e-10));
    for (double a : gkw.residual_increments) CHECK(a == doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("squared martingale has the Ito integrand") {
    auto ens = brownian(50000);
    auto claim = claim_power(ClaimUnderlying::martingale, 2.0);
    auto xi = evaluate_claim(claim, ens);

    SUBCASE("full information") {
        auto gkw = gkw_decompose(ens, InformationModel::full(), claim);
        CHECK(std::abs(gkw.u0 - 1.0) < 0.05);  // E[M_T^2] = T = 1
        std::vector<double> oracle(gkw.integrand.size());
        for (std::size_t i = 0; i < ens.n_steps(); ++i) {
            for (std::size_t p = 0; p < ens.n_paths; ++p) {
                oracle[i * ens.n_paths + p] = 2.0 * ens.m(i, p);
            }
        }
        CHECK(rms_difference(gkw.integrand, oracle) < 0.1);
        check_reconstruction(ens, gkw, xi);
    }

    SUBCASE("delayed information projects the integrand") {
        auto info = InformationModel::delayed(0.25);
        auto gkw = gkw_decompose(ens, info, claim);
        std::vector<double> oracle(gkw.integrand.size());
        for (std::size_t i = 0; i < ens.n_steps(); ++i) {
            const std::size_t lag = info.information_node(ens.grid, i);
            for (std::size_t p = 0; p < ens.n_paths; ++p) {
                oracle[i * ens.n_paths + p] = 2.0 * ens.m(lag, p);
            }
        }
        CHECK(rms_difference(gkw.integrand, oracle) < 0.1);
        check_reconstruction(ens, gkw, xi);

        double worst = 0.0;
        for (const auto& s : orthogonality_battery(ens, info, gkw.residual_increments)) {
            worst = std::max(worst, std::abs(s.z));
        }
        CHECK(worst <= 3.0);
    }
}

TEST_CASE("FS equals GKW in the martingale case") {
    auto ens = brownian(10000);
    auto claim = claim_power(ClaimUnderlying::martingale, 2.0);
    auto info = InformationModel::delayed(0.25);
    auto gkw = gkw_decompose(ens, info, claim);
    auto fs = fs_decompose(ens, info, claim);
    CHECK(fs.kind == DecompositionKind::fs);
    CHECK(std::abs(fs.u0 - gkw.u0) <= 1e-10);
    CHECK(rms_difference(fs.integrand, gkw.integrand) <= 1e-10);
    CHECK(rms_difference(fs.value, gkw.value) <= 1e-10);
}

TEST_CASE("the terminal price is perfectly replicable") {
    auto claim = claim_identity(ClaimUnderlying::price);

    SUBCASE("martingale price") {
        auto ens = brownian(20000, 0.0);
        auto fs = fs_decompose(ens, InformationModel::full(), claim);
        auto xi = evaluate_claim(claim, ens);
        CHECK(std::abs(fs.u0 - ens.config.s0) < 0.05);
        std::vector<double> ones(fs.integrand.size(), 1.0);
        CHECK(rms_difference(fs.integrand, ones) < 0.05);
        CHECK(rms(fs.residual_increments) < 0.01);
        check_reconstruction(ens, fs, xi);
    }

    SUBCASE("price with drift") {
        auto ens = brownian(20000, 0.4);
        SolveOptions opts;
        opts.tol = 1e-6;
        auto fs = fs_decompose(ens, InformationModel::full(), claim, opts);
        auto xi = evaluate_claim(claim, ens);
        CHECK(fs.converged);
        CHECK(std::abs(fs.u0 - ens.config.s0) < 0.05);
        std::vector<double> ones(fs.integrand.size(), 1.0);
        CHECK(rms_difference(fs.integrand, ones) < 0.05);
        CHECK(rms(fs.residual_increments) < 0.01);
        check_reconstruction(ens, fs, xi);
    }
}

TEST_CASE("FS under drift solves the structure-condition equation") {
    auto ens = brownian(20000, 0.3);
    auto claim = claim_power(ClaimUnderlying::martingale, 2.0);
    SolveOptions opts;
    opts.tol = 1e-6;
    auto info = InformationModel::full();
    auto fs = fs_decompose(ens, info, claim, opts);
    auto xi = evaluate_claim(claim, ens);
    CHECK(fs.converged);
    check_reconstruction(ens, fs, xi);

    double worst = 0.0;
    for (const auto& s : orthogonality_battery(ens, info, fs.residual_increments)) {
        worst = std::max(worst, std::abs(s.z));
    }
    CHECK(worst <= 3.0);
}

TEST_CASE("tradeoff bound is checked before decomposing") {
    auto grid = Grid::uniform(1.0, 8);
    auto dm = test::gaussian_increments(grid, 200, 3);
    auto ens = test::manual_ensemble(grid, 200, dm, std::vector<double>(8, grid.dt()));
    // inconsistent ensemble: alpha exceeds its declared bound
    for (auto& a : ens.alpha) a = 2.0;
    ens.config.alpha = AlphaSpec::constant(0.0);  // declared bound 0
    auto claim = claim_identity(ClaimUnderlying::martingale);
    CHECK_THROWS_AS(fs_decompose(ens, InformationModel::full(), claim), std::runtime_error);
}
