#include "qhedge/market.hpp"

#include <cmath>
#include <stdexcept>

#include "qhedge/parallel.hpp"
#include "qhedge/rng.hpp"

namespace qhedge {

double MarkDistribution::first_moment() const {
    switch (kind) {
        case Kind::normal: return mean;
        case Kind::uniform: return 0.5 * (low + high);
        case Kind::constant: return value;
    }
    return 0.0;
}

double MarkDistribution::second_moment() const {
    switch (kind) {
        case Kind::normal: return mean * mean + sd * sd;
        case Kind::uniform: return (low * low + low * high + high * high) / 3.0;
        case Kind::constant: return value * value;
    }
    return 0.0;
}

void MarkDistribution::validate() const {
    switch (kind) {
        case Kind::normal:
            if (!std::isfinite(mean) || !std::isfinite(sd) || sd < 0.0) {
                throw std::invalid_argument("MarkDistribution: normal marks need finite mean and sd >= 0");
            }
            break;
        case Kind::uniform:
            if (!std::isfinite(low) || !std::isfinite(high) || low > high) {
                throw std::invalid_argument("MarkDistribution: uniform marks need finite low <= high");
            }
            break;
        case Kind::constant:
            if (!std::isfinite(value)) {
                throw std::invalid_argument("MarkDistribution: constant mark must be finite");
            }
            break;
    }
}

double MarketConfig::bracket_rate() const {
    return sigma_bar * sigma_bar + jump_intensity * marks.second_moment();
}

void MarketConfig::validate() const {
    if (!(sigma_bar >= 0.0) || !std::isfinite(sigma_bar)) {
        throw std::invalid_argument("MarketConfig: sigma_bar must be finite and >= 0");
    }
    if (!(jump_intensity >= 0.0) || !std::isfinite(jump_intensity)) {
        throw std::invalid_argument("MarketConfig: jump_intensity must be finite and >= 0");
    }
    marks.validate();
    if (n_paths == 0) {
        throw std::invalid_argument("MarketConfig: n_paths must be >= 1");
    }
    if (!std::isfinite(s0) || !std::isfinite(m0)) {
        throw std::invalid_argument("MarketConfig: s0 and m0 must be finite");
    }
    if (!std::isfinite(alpha.value) || !std::isfinite(alpha.bound)) {
        throw std::invalid_argument("MarketConfig: alpha parameters must be finite");
    }
    if (alpha.bound < 0.0) {
        throw std::invalid_argument("MarketConfig: alpha bound must be >= 0");
    }
    if (std::abs(alpha.value) > alpha.bound + 1e-15) {
        throw std::invalid_argument("MarketConfig: |alpha| exceeds its declared bound");
    }
    if (!(c_bar >= 0.0) || !std::isfinite(c_bar)) {
        throw std::invalid_argument("MarketConfig: c_bar must be finite and >= 0");
    }
    if (bracket_rate() > c_bar * (1.0 + 1e-12) + 1e-15) {
        throw std::invalid_argument(
            "MarketConfig: sigma_bar^2 + lambda*E[mark^2] exceeds the declared c_bar");
    }
    if (state.count() == 0) {
        throw std::invalid_argument("MarketConfig: state vector needs at least one coordinate");
    }
}

double PathEnsemble::total_bracket() const {
    double total = 0.0;
    for (double b : d_bracket) total += b;
    return total;
}

void PathEnsemble::state_at(std::size_t node, std::size_t path, std::span<double> out) const {
    std::size_t k = 0;
    if (config.state.use_martingale) out[k++] = m(node, path);
    if (config.state.use_price) out[k++] = s(node, path);
    if (config.state.use_jump_count) out[k++] = jump_count[node * n_paths + path];
}

namespace {

double alpha_at(const AlphaSpec& spec, double price, double s0) {
    switch (spec.kind) {
        case AlphaSpec::Kind::constant: return spec.value;
        case AlphaSpec::Kind::tanh_of_price: return spec.value * std::tanh(price - s0);
    }
    return 0.0;
}

}  // namespace

PathEnsemble simulate_market(const MarketConfig& config, const Grid& grid) {
    config.validate();
    const std::size_t n = grid.n_steps;
    const std::size_t paths = config.n_paths;
    const double dt = grid.dt();
    const double mark_mean = config.marks.first_moment();
    const double jump_compensation = config.jump_intensity * mark_mean * dt;
    const double bracket_step = config.bracket_rate() * dt;

    PathEnsemble ens;
    ens.grid = grid;
    ens.n_paths = paths;
    ens.config = config;
    ens.d_brownian.assign(n * paths, 0.0);
    ens.jump_sum.assign(n * paths, 0.0);
    ens.d_martingale.assign(n * paths, 0.0);
    ens.alpha.assign(n * paths, 0.0);
    ens.d_price.assign(n * paths, 0.0);
    ens.d_bracket.assign(n, bracket_step);
    ens.brownian.assign((n + 1) * paths, 0.0);
    ens.martingale.assign((n + 1) * paths, config.m0);
    ens.price.assign((n + 1) * paths, config.s0);
    ens.jump_count.assign((n + 1) * paths, 0.0);

    const double sqrt_dt = std::sqrt(dt);
    const bool has_jumps = config.jump_intensity > 0.0;

    parallel_for_chunks(paths, [&](std::size_t begin, std::size_t end) {
        for (std::size_t p = begin; p < end; ++p) {
            auto gen = path_stream(config.seed, p);
            std::normal_distribution<double> gauss(0.0, 1.0);
            std::poisson_distribution<int> jumps(config.jump_intensity * dt);

            double w = 0.0;
            double m = config.m0;
            double s = config.s0;
            double count = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double dw = sqrt_dt * gauss(gen);
                double marks = 0.0;
                int n_jumps = 0;
                if (has_jumps) {
                    n_jumps = jumps(gen);
                    for (int j = 0; j < n_jumps; ++j) {
                        switch (config.marks.kind) {
                            case MarkDistribution::Kind::normal: {
                                std::normal_distribution<double> d(config.marks.mean, config.marks.sd);
                                marks += d(gen);
                                break;
                            }
                            case MarkDistribution::Kind::uniform: {
                                std::uniform_real_distribution<double> d(config.marks.low, config.marks.high);
                                marks += d(gen);
                                break;
                            }
                            case MarkDistribution::Kind::constant:
                                marks += config.marks.value;
                                break;
                        }
                    }
                }
                const double dm = config.sigma_bar * dw + (marks - jump_compensation);
                const double a = alpha_at(config.alpha, s, config.s0);
                const double ds = sc_increment(dm, a, bracket_step);

                const std::size_t idx = i * paths + p;
                ens.d_brownian[idx] = dw;
                ens.jump_sum[idx] = marks;
                ens.d_martingale[idx] = dm;
                ens.alpha[idx] = a;
                ens.d_price[idx] = ds;

                w += dw;
                m += dm;
                s += ds;
                count += static_cast<double>(n_jumps);
                const std::size_t nidx = (i + 1) * paths + p;
                ens.brownian[nidx] = w;
                ens.martingale[nidx] = m;
                ens.price[nidx] = s;
                ens.jump_count[nidx] = count;
            }
        }
    });

    return ens;
}

std::vector<double> tradeoff_process(const PathEnsemble& ensemble) {
    const std::size_t n = ensemble.n_steps();
    const std::size_t paths = ensemble.n_paths;
    std::vector<double> k((n + 1) * paths, 0.0);
    parallel_for_chunks(paths, [&](std::size_t begin, std::size_t end) {
        for (std::size_t p = begin; p < end; ++p) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double a = ensemble.alpha[i * paths + p];
                acc += a * a * ensemble.d_bracket[i];
                k[(i + 1) * paths + p] = acc;
            }
        }
    });
    return k;
}

}  // namespace qhedge
