#pragma once

#include <cstdint>
#include <vector>

#include "qhedge/market.hpp"
#include "qhedge/rng.hpp"

namespace qhedge::test {

/// Ensemble built from explicit martingale increments: alpha = 0, price
/// follows M, cumulative arrays rebuilt from the increments.
inline PathEnsemble manual_ensemble(const Grid& grid, std::size_t paths,
                                    std::vector<double> d_martingale,
                                    std::vector<double> d_bracket, double m0 = 0.0,
                                    double s0 = 1.0) {
    const std::size_t n = grid.n_steps;
    PathEnsemble ens;
    ens.grid = grid;
    ens.n_paths = paths;
    ens.config.sigma_bar = 1.0;
    ens.config.jump_intensity = 0.0;
    ens.config.alpha = AlphaSpec::constant(0.0);
    ens.config.c_bar = 1.0;
    ens.config.m0 = m0;
    ens.config.s0 = s0;
    ens.config.n_paths = paths;
    ens.d_martingale = std::move(d_martingale);
    ens.d_bracket = std::move(d_bracket);
    ens.d_brownian = ens.d_martingale;
    ens.jump_sum.assign(n * paths, 0.0);
    ens.alpha.assign(n * paths, 0.0);
    ens.d_price = ens.d_martingale;
    ens.brownian.assign((n + 1) * paths, 0.0);
    ens.martingale.assign((n + 1) * paths, m0);
    ens.price.assign((n + 1) * paths, s0);
    ens.jump_count.assign((n + 1) * paths, 0.0);
    for (std::size_t p = 0; p < paths; ++p) {
        double w = 0.0, m = m0, s = s0;
        for (std::size_t i = 0; i < n; ++i) {
            const double dm = ens.d_martingale[i * paths + p];
            w += dm;
            m += dm;
            s += dm;
            ens.brownian[(i + 1) * paths + p] = w;
            ens.martingale[(i + 1) * paths + p] = m;
            ens.price[(i + 1) * paths + p] = s;
        }
    }
    return ens;
}

/// Gaussian martingale increments with unit rate, one stream per path.
inline std::vector<double> gaussian_increments(const Grid& grid, std::size_t paths,
                                               std::uint64_t seed) {
    const std::size_t n = grid.n_steps;
    std::vector<double> dm(n * paths);
    const double sd = std::sqrt(grid.dt());
    for (std::size_t p = 0; p < paths; ++p) {
        auto gen = path_stream(seed, p);
        std::normal_distribution<double> gauss(0.0, sd);
        for (std::size_t i = 0; i < n; ++i) dm[i * paths + p] = gauss(gen);
    }
    return dm;
}

}  // namespace qhedge::test
