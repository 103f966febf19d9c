#include "qhedge/basis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "qhedge/parallel.hpp"

namespace qhedge {

namespace {

void enumerate_exponents(std::size_t n_coords, std::size_t degree, std::size_t coord,
                         std::vector<unsigned>& current, std::size_t used,
                         std::vector<std::vector<unsigned>>& out) {
    if (coord == n_coords) {
        out.push_back(current);
        return;
    }
    for (std::size_t d = 0; d + used <= degree; ++d) {
        current[coord] = static_cast<unsigned>(d);
        enumerate_exponents(n_coords, degree, coord + 1, current, used + d, out);
    }
    current[coord] = 0;
}

}  // namespace

std::vector<std::vector<unsigned>> monomial_exponents(std::size_t n_coords, std::size_t degree) {
    std::vector<std::vector<unsigned>> raw;
    std::vector<unsigned> current(n_coords, 0);
    enumerate_exponents(n_coords, degree, 0, current, 0, raw);
    // graded order: constant first, then by total degree
    std::stable_sort(raw.begin(), raw.end(), [](const auto& a, const auto& b) {
        unsigned ta = 0, tb = 0;
        for (unsigned e : a) ta += e;
        for (unsigned e : b) tb += e;
        return ta < tb;
    });
    return raw;
}

void NodeDesign::row(const PathEnsemble& ensemble, std::size_t path, std::span<double> out) const {
    if (trivial) {
        out[0] = 1.0;
        return;
    }
    double raw[8];
    double std_coords[8];
    std::span<double> all(raw, ensemble.state_dim());
    ensemble.state_at(node, path, all);
    for (std::size_t c = 0; c < coords.size(); ++c) {
        std_coords[c] = (raw[coords[c]] - mean[c]) * inv_sd[c];
    }
    // powers up to the max exponent per coordinate
    for (std::size_t b = 0; b < exponents.size(); ++b) {
        double v = 1.0;
        const auto& expo = exponents[b];
        for (std::size_t c = 0; c < expo.size(); ++c) {
            for (unsigned e = 0; e < expo[c]; ++e) v *= std_coords[c];
        }
        out[b] = v;
    }
}

Eigen::MatrixXd NodeDesign::matrix(const PathEnsemble& ensemble) const {
    const std::size_t paths = ensemble.n_paths;
    Eigen::MatrixXd x(paths, size());
    parallel_for_chunks(paths, [&](std::size_t begin, std::size_t end) {
        std::vector<double> buf(size());
        for (std::size_t p = begin; p < end; ++p) {
            row(ensemble, p, buf);
            for (std::size_t b = 0; b < buf.size(); ++b) x(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(b)) = buf[b];
        }
    });
    return x;
}

NodeDesign build_node_design(const PathEnsemble& ensemble, std::size_t node, const BasisSpec& spec) {
    if (spec.family != BasisSpec::Family::polynomial) {
        throw std::invalid_argument("basis: unsupported family");
    }
    const std::size_t dim = ensemble.state_dim();
    if (dim > 8) {
        throw std::invalid_argument("basis: at most 8 state coordinates supported");
    }
    const std::size_t paths = ensemble.n_paths;

    NodeDesign design;
    design.node = node;

    // first/second moments per raw coordinate
    std::vector<double> sums(dim, 0.0), sqs(dim, 0.0);
    std::vector<double> buf(dim);
    std::vector<std::vector<double>> values(dim, std::vector<double>(paths));
    for (std::size_t p = 0; p < paths; ++p) {
        ensemble.state_at(node, p, buf);
        for (std::size_t c = 0; c < dim; ++c) {
            values[c][p] = buf[c];
            sums[c] += buf[c];
            sqs[c] += buf[c] * buf[c];
        }
    }
    const double np = static_cast<double>(paths);

    std::vector<std::size_t> kept;
    std::vector<double> kmean, ksd;
    for (std::size_t c = 0; c < dim; ++c) {
        const double mu = sums[c] / np;
        const double var = std::max(0.0, sqs[c] / np - mu * mu);
        const double sd = std::sqrt(var);
        if (sd <= 1e-14 * (1.0 + std::abs(mu))) continue;  // constant coordinate
        // drop coordinates exactly collinear with one already kept
        bool collinear = false;
        for (std::size_t k = 0; k < kept.size(); ++k) {
            double dot = 0.0;
            for (std::size_t p = 0; p < paths; ++p) {
                dot += (values[c][p] - mu) * (values[kept[k]][p] - kmean[k]);
            }
            const double corr = dot / (np * sd * ksd[k]);
            if (std::abs(corr) > 1.0 - 1e-10) {
                collinear = true;
                break;
            }
        }
        if (collinear) continue;
        kept.push_back(c);
        kmean.push_back(mu);
        ksd.push_back(sd);
    }

    if (kept.empty()) {
        design.trivial = true;
        return design;
    }
    design.coords = kept;
    design.mean = kmean;
    design.inv_sd.resize(kept.size());
    for (std::size_t k = 0; k < kept.size(); ++k) design.inv_sd[k] = 1.0 / ksd[k];
    design.exponents = monomial_exponents(kept.size(), spec.degree);
    return design;
}

}  // namespace qhedge
