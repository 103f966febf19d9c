#pragma once

#include <cstddef>
#include <stdexcept>

namespace qhedge {

/// Uniform time grid t_0 = 0 < t_1 < ... < t_N = T with spacing dt = T/N.
struct Grid {
    double horizon = 1.0;
    std::size_t n_steps = 1;

    static Grid uniform(double horizon, std::size_t n_steps) {
        if (!(horizon > 0.0)) {
            throw std::invalid_argument("Grid: horizon must be positive");
        }
        if (n_steps == 0) {
            throw std::invalid_argument("Grid: n_steps must be >= 1");
        }
        return Grid{horizon, n_steps};
    }

    double dt() const { return horizon / static_cast<double>(n_steps); }

    std::size_t n_nodes() const { return n_steps + 1; }

    // The last node is pinned to the horizon so t_N == T holds regardless of
    // rounding in dt.
    double time(std::size_t node) const {
        return node == n_steps ? horizon : static_cast<double>(node) * dt();
    }

    bool operator==(const Grid& other) const {
        return horizon == other.horizon && n_steps == other.n_steps;
    }
};

}  // namespace qhedge
