#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <cstring>

#include "qhedge/diagnostics.hpp"
#include "qhedge/market.hpp"

using namespace qhedge;

namespace {

MarketConfig brownian_config(std::size_t paths, std::uint64_t seed = 42) {
    MarketConfig cfg;
    cfg.sigma_bar = 1.0;
    cfg.jump_intensity = 0.0;
    cfg.alpha = AlphaSpec::constant(0.0);
    cfg.c_bar = 1.0;
    cfg.s0 = 1.0;
    cfg.m0 = 0.0;
    cfg.seed = seed;
    cfg.n_paths = paths;
    return cfg;
}

MarketConfig jump_config(std::size_t paths, std::uint64_t seed = 7) {
    MarketConfig cfg;
    cfg.sigma_bar = 0.5;
    cfg.jump_intensity = 2.0;
    cfg.marks = MarkDistribution::uniform(-0.2, 0.3);
    cfg.alpha = AlphaSpec::tanh_of_price(0.4);
    cfg.c_bar = cfg.sigma_bar * cfg.sigma_bar + cfg.jump_intensity * cfg.marks.second_moment();
    cfg.seed = seed;
    cfg.n_paths = paths;
    return cfg;
}

}  // namespace

TEST_CASE("degenerate market is constant") {
    MarketConfig cfg = brownian_config(50);
    cfg.sigma_bar = 0.0;
    cfg.c_bar = 0.0;
    auto ens = simulate_market(cfg, Grid::uniform(1.0, 16));
    for (std::size_t i = 0; i <= 16; ++i) {
        for (std::size_t p = 0; p < 50; ++p) {
            CHECK(ens.m(i, p) == cfg.m0);
            CHECK(ens.s(i, p) == cfg.s0);
        }
    }
    for (double b : ens.d_bracket) CHECK(b == 0.0);
}

TEST_CASE("terminal variance matches the bracket") {
    // <M>_T = T, so Var(M_T) = 1 at T = 1
    auto ens = simulate_market(brownian_config(50000), Grid::uniform(1.0, 64));
    const std::size_t n = ens.n_steps();
    std::vector<double> mt(ens.n_paths);
    for (std::size_t p = 0; p < ens.n_paths; ++p) mt[p] = ens.m(n, p);
    double mean = 0.0;
    for (double v : mt) mean += v;
    mean /= static_cast<double>(mt.size());
    double m2 = 0.0, m4 = 0.0;
    for (double v : mt) {
        const double c = (v - mean) * (v - mean);
        m2 += c;
        m4 += c * c;
    }
    m2 /= static_cast<double>(mt.size());
    m4 /= static_cast<double>(mt.size());
    const double se_var = std::sqrt((m4 - m2 * m2) / static_cast<double>(mt.size()));
    CHECK(std::abs(m2 - 1.0) <= 3.0 * se_var);
}

TEST_CASE("martingale and compensation z-scores stay inside three sigma") {
    auto ens = simulate_market(jump_config(20000), Grid::uniform(1.0, 32));
    auto checks = martingale_checks(ens);
    CHECK(checks.max_abs_increment_z <= 3.0);
    CHECK(checks.max_abs_compensation_z <= 3.0);
}

TEST_CASE("structure condition holds with zero tolerance") {
    auto ens = simulate_market(jump_config(500), Grid::uniform(1.0, 32));
    const std::size_t paths = ens.n_paths;
    for (std::size_t i = 0; i < ens.n_steps(); ++i) {
        for (std::size_t p = 0; p < paths; ++p) {
            const double expected = sc_increment(ens.d_martingale[i * paths + p],
                                                 ens.alpha[i * paths + p], ens.d_bracket[i]);
            CHECK(ens.d_price[i * paths + p] == expected);
            // cumulative arrays follow the increments
            CHECK(ens.s(i + 1, p) == ens.s(i, p) + ens.d_price[i * paths + p]);
            CHECK(ens.m(i + 1, p) == ens.m(i, p) + ens.d_martingale[i * paths + p]);
        }
    }
}

TEST_CASE("bracket increments are deterministic and bounded") {
    auto ens = simulate_market(jump_config(200), Grid::uniform(2.0, 40));
    const double rate = ens.config.bracket_rate();
    for (double b : ens.d_bracket) {
        CHECK(b == rate * ens.grid.dt());
        CHECK(b <= ens.config.c_bar * ens.grid.dt() * (1.0 + 1e-12));
    }
}

TEST_CASE("seed determinism is byte for byte and schedule independent") {
    auto cfg = jump_config(300);
    auto grid = Grid::uniform(1.0, 16);
    auto a = simulate_market(cfg, grid);

    setenv("QHEDGE_THREADS", "1", 1);
    auto b = simulate_market(cfg, grid);
    setenv("QHEDGE_THREADS", "3", 1);
    auto c = simulate_market(cfg, grid);
    unsetenv("QHEDGE_THREADS");

    auto same = [](const std::vector<double>& x, const std::vector<double>& y) {
        return x.size() == y.size() &&
               std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0;
    };
    CHECK(same(a.d_martingale, b.d_martingale));
    CHECK(same(a.d_martingale, c.d_martingale));
    CHECK(same(a.price, b.price));
    CHECK(same(a.price, c.price));
    CHECK(same(a.jump_count, c.jump_count));
}

TEST_CASE("invalid configurations are rejected") {
    auto grid = Grid::uniform(1.0, 8);
    MarketConfig cfg = brownian_config(10);
    cfg.sigma_bar = -1.0;
    CHECK_THROWS_AS(simulate_market(cfg, grid), std::invalid_argument);

    cfg = brownian_config(10);
    cfg.jump_intensity = -0.5;
    CHECK_THROWS_AS(simulate_market(cfg, grid), std::invalid_argument);

    cfg = brownian_config(0);
    CHECK_THROWS_AS(simulate_market(cfg, grid), std::invalid_argument);

    CHECK_THROWS_AS(Grid::uniform(1.0, 0), std::invalid_argument);

    cfg = brownian_config(10);
    cfg.marks = MarkDistribution::constant(std::nan(""));
    cfg.jump_intensity = 1.0;
    cfg.c_bar = 10.0;
    CHECK_THROWS_AS(simulate_market(cfg, grid), std::invalid_argument);

    // declared bracket bound too small
    cfg = brownian_config(10);
    cfg.c_bar = 0.5;
    CHECK_THROWS_AS(simulate_market(cfg, grid), std::invalid_argument);
}

TEST_CASE("tradeoff process closed forms and bound") {
    auto grid = Grid::uniform(1.0, 32);

    // alpha = 0 -> K = 0
    auto zero = simulate_market(brownian_config(100), grid);
    for (double v : tradeoff_process(zero)) CHECK(v == 0.0);

    // constant alpha, <M>_t = t -> K_i = a^2 t_i
    MarketConfig cfg = brownian_config(100);
    cfg.alpha = AlphaSpec::constant(0.3);
    auto ens = simulate_market(cfg, grid);
    auto k = tradeoff_process(ens);
    for (std::size_t i = 0; i <= 32; ++i) {
        for (std::size_t p = 0; p < 100; ++p) {
            CHECK(k[i * 100 + p] == doctest::Approx(0.09 * grid.time(i)).epsilon(1e-12));
        }
    }

    // state-dependent alpha respects the declared bound
    auto jumpy = simulate_market(jump_config(2000), grid);
    auto kj = tradeoff_process(jumpy);
    const double bound = jumpy.config.alpha.bound * jumpy.config.alpha.bound *
                         jumpy.config.c_bar * grid.horizon;
    double worst = 0.0;
    for (std::size_t p = 0; p < jumpy.n_paths; ++p) {
        for (std::size_t i = 0; i < 32; ++i) {
            CHECK(kj[(i + 1) * jumpy.n_paths + p] >= kj[i * jumpy.n_paths + p]);
        }
        worst = std::max(worst, kj[32 * jumpy.n_paths + p]);
    }
    CHECK(worst <= bound * (1.0 + 1e-12));
}
