#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "qhedge/market.hpp"

namespace qhedge {

/// Regression basis family and degree induced by an information model.
struct BasisSpec {
    enum class Family { polynomial };

    Family family = Family::polynomial;
    std::size_t degree = 3;

    bool operator==(const BasisSpec&) const = default;
};

// Exponent tuples of all monomials with total degree <= degree in n_coords
// variables, graded lexicographic order, constant term first.
std::vector<std::vector<unsigned>> monomial_exponents(std::size_t n_coords, std::size_t degree);

/// Standardized polynomial design at one grid node. Coordinates that are
/// constant across paths or exactly collinear with an earlier coordinate are
/// dropped before monomials are formed (affine maps do not change the span).
struct NodeDesign {
    std::size_t node = 0;
    std::vector<std::size_t> coords;      // kept state coordinates
    std::vector<double> mean;             // per kept coordinate
    std::vector<double> inv_sd;           // per kept coordinate
    std::vector<std::vector<unsigned>> exponents;
    bool trivial = false;                 // no varying coordinate: estimate = mean

    std::size_t size() const { return trivial ? 1 : exponents.size(); }

    /// Fills the row of basis values for one path.
    void row(const PathEnsemble& ensemble, std::size_t path, std::span<double> out) const;

    /// Builds the full design matrix (n_paths x size()).
    Eigen::MatrixXd matrix(const PathEnsemble& ensemble) const;
};

NodeDesign build_node_design(const PathEnsemble& ensemble, std::size_t node, const BasisSpec& spec);

}  // namespace qhedge
