#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qhedge/grid.hpp"

namespace qhedge {

/// Distribution of the i.i.d. jump marks. Second moments are analytic so the
/// predictable bracket stays deterministic.
struct MarkDistribution {
    enum class Kind { normal, uniform, constant };

    Kind kind = Kind::normal;
    double mean = 0.0;    // normal
    double sd = 0.1;      // normal
    double low = -0.1;    // uniform
    double high = 0.1;    // uniform
    double value = 0.0;   // constant

    static MarkDistribution normal(double mean, double sd) {
        MarkDistribution d;
        d.kind = Kind::normal;
        d.mean = mean;
        d.sd = sd;
        return d;
    }
    static MarkDistribution uniform(double low, double high) {
        MarkDistribution d;
        d.kind = Kind::uniform;
        d.low = low;
        d.high = high;
        return d;
    }
    static MarkDistribution constant(double value) {
        MarkDistribution d;
        d.kind = Kind::constant;
        d.value = value;
        return d;
    }

    double first_moment() const;
    double second_moment() const;
    void validate() const;
};

/// Drift loading in the structure condition, either a constant or a bounded
/// function of the current state.
struct AlphaSpec {
    enum class Kind { constant, tanh_of_price };

    Kind kind = Kind::constant;
    double value = 0.0;  // constant value, or scale of the tanh response
    // Declared bound K-bar; |alpha| <= bound must hold everywhere.
    double bound = 0.0;

    static AlphaSpec constant(double value) {
        AlphaSpec a;
        a.kind = Kind::constant;
        a.value = value;
        a.bound = value < 0 ? -value : value;
        return a;
    }
    static AlphaSpec tanh_of_price(double scale) {
        AlphaSpec a;
        a.kind = Kind::tanh_of_price;
        a.value = scale;
        a.bound = scale < 0 ? -scale : scale;
        return a;
    }

    bool is_zero() const { return kind == Kind::constant && value == 0.0; }
};

/// Which path coordinates feed the regression bases.
struct StateSpec {
    bool use_martingale = true;
    bool use_price = true;
    bool use_jump_count = true;

    std::size_t count() const {
        return (use_martingale ? 1u : 0u) + (use_price ? 1u : 0u) + (use_jump_count ? 1u : 0u);
    }
};

struct MarketConfig {
    double sigma_bar = 1.0;       // diffusive volatility, per sqrt(time)
    double jump_intensity = 0.0;  // events per unit time
    MarkDistribution marks;
    AlphaSpec alpha;
    double c_bar = 1.0;  // declared bound on the bracket rate sigma^2 + lambda E[mark^2]
    double s0 = 1.0;
    double m0 = 0.0;
    std::uint64_t seed = 0;
    std::size_t n_paths = 1;
    StateSpec state;

    // sigma_bar^2 + lambda * E[mark^2]; the deterministic rate of <M>.
    double bracket_rate() const;
    void validate() const;
};

/// Simulated paths of (W, jumps, M, <M>, S) on a shared grid. Node arrays are
/// laid out node-major: value(node, path) = data[node * n_paths + path], and
/// step arrays likewise. Immutable after construction; safe to share across
/// threads read-only.
struct PathEnsemble {
    Grid grid;
    std::size_t n_paths = 0;
    MarketConfig config;

    // per step (n_steps x n_paths)
    std::vector<double> d_brownian;   // Brownian increment dW
    std::vector<double> jump_sum;     // raw sum of marks over the step
    std::vector<double> d_martingale; // dM = sigma dW + (jump_sum - lambda E[mark] dt)
    std::vector<double> alpha;        // drift loading used in the step
    std::vector<double> d_price;      // dS = dM + alpha * dbracket  (stored; primary)

    // per step, deterministic (n_steps)
    std::vector<double> d_bracket;    // d<M> = (sigma^2 + lambda E[mark^2]) dt

    // per node ((n_steps + 1) x n_paths), cumulative sums of the increments
    std::vector<double> brownian;     // W
    std::vector<double> martingale;   // M
    std::vector<double> price;        // S
    std::vector<double> jump_count;   // running number of jumps (as double)

    std::size_t n_steps() const { return grid.n_steps; }
    std::size_t n_nodes() const { return grid.n_nodes(); }

    double m(std::size_t node, std::size_t path) const { return martingale[node * n_paths + path]; }
    double s(std::size_t node, std::size_t path) const { return price[node * n_paths + path]; }
    double w(std::size_t node, std::size_t path) const { return brownian[node * n_paths + path]; }
    double dm(std::size_t step, std::size_t path) const { return d_martingale[step * n_paths + path]; }
    double ds(std::size_t step, std::size_t path) const { return d_price[step * n_paths + path]; }
    double dbracket(std::size_t step, std::size_t path) const { (void)path; return d_bracket[step]; }

    std::span<const double> node_slice(const std::vector<double>& node_array, std::size_t node) const {
        return {node_array.data() + node * n_paths, n_paths};
    }
    std::span<const double> step_slice(const std::vector<double>& step_array, std::size_t step) const {
        return {step_array.data() + step * n_paths, n_paths};
    }

    // <M>_T; deterministic.
    double total_bracket() const;

    // State coordinates used by regressions, evaluated at a node.
    std::size_t state_dim() const { return config.state.count(); }
    void state_at(std::size_t node, std::size_t path, std::span<double> out) const;
};

// Price increment of the structure condition. Shared by the simulator and
// every check that asserts the identity with zero tolerance.
inline double sc_increment(double d_martingale, double alpha, double d_bracket) {
    return d_martingale + alpha * d_bracket;
}

/// Simulates the ensemble. Bit-reproducible for a fixed seed regardless of
/// the parallel execution schedule (per-path RNG streams).
PathEnsemble simulate_market(const MarketConfig& config, const Grid& grid);

/// Mean-variance tradeoff K_i = sum_{j<i} alpha_j^2 d<M>_j per path,
/// ((n_steps + 1) x n_paths), nondecreasing in the node index.
std::vector<double> tradeoff_process(const PathEnsemble& ensemble);

}  // namespace qhedge
