#include "qhedge/information.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "qhedge/parallel.hpp"

namespace qhedge {

std::size_t InformationModel::delay_steps(const Grid& grid) const {
    if (kind == InfoKind::full) return 0;
    const double ratio = tau / grid.dt();
    const double rounded = std::round(ratio);
    if (std::abs(ratio - rounded) > 1e-9 * (1.0 + std::abs(ratio))) {
        throw std::invalid_argument(
            "InformationModel: tau must be an integer multiple of the grid spacing");
    }
    return static_cast<std::size_t>(rounded);
}

void InformationModel::validate(const Grid& grid) const {
    if (kind == InfoKind::delayed) {
        if (!(tau > 0.0) || !(tau < grid.horizon)) {
            throw std::invalid_argument("InformationModel: tau must lie in (0, T)");
        }
        const std::size_t k = delay_steps(grid);
        if (k == 0) {
            throw std::invalid_argument("InformationModel: tau must be at least one grid step");
        }
    }
    if (basis.degree == 0) {
        throw std::invalid_argument("InformationModel: basis degree must be >= 1");
    }
}

std::size_t InformationModel::information_node(const Grid& grid, std::size_t node) const {
    if (kind == InfoKind::full) return node;
    const std::size_t k = delay_steps(grid);
    return node > k ? node - k : 0;
}

CondExpectationEngine::CondExpectationEngine(const PathEnsemble& ensemble, BasisSpec basis)
    : ensemble_(ensemble), basis_(basis), plans_(ensemble.n_nodes()) {}

const CondExpectationEngine::NodePlan& CondExpectationEngine::plan_for(std::size_t node) const {
    if (node >= plans_.size()) {
        throw std::out_of_range("CondExpectationEngine: node index out of range");
    }
    if (plans_[node]) return *plans_[node];

    auto plan = std::make_unique<NodePlan>();
    plan->design = build_node_design(ensemble_, node, basis_);
    if (!plan->design.trivial) {
        const std::size_t b = plan->design.size();
        const std::size_t paths = ensemble_.n_paths;

        // Gram matrix via fixed chunks combined in order: deterministic for
        // any thread count.
        Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(b, b);
        parallel_reduce_chunks<Eigen::MatrixXd>(
            paths,
            [&](std::size_t begin, std::size_t end) {
                Eigen::MatrixXd partial = Eigen::MatrixXd::Zero(b, b);
                std::vector<double> buf(b);
                for (std::size_t p = begin; p < end; ++p) {
                    plan->design.row(ensemble_, p, buf);
                    Eigen::Map<const Eigen::VectorXd> x(buf.data(), b);
                    partial.selfadjointView<Eigen::Lower>().rankUpdate(x);
                }
                return partial;
            },
            [&](const Eigen::MatrixXd& partial) { gram += partial; });
        gram = gram.selfadjointView<Eigen::Lower>();
        plan->gram = gram;

        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
        const double lambda_max = std::max(eig.eigenvalues().maxCoeff(), 0.0);
        const double lambda_min = eig.eigenvalues().minCoeff();
        const bool deficient = !(lambda_min > 1e-12 * lambda_max);

        plan->factor.compute(gram);
        if (deficient || plan->factor.info() != Eigen::Success) {
            plan->ridge = true;
            plan->ridge_penalty = 1e-8 * gram.trace() / static_cast<double>(b);
            Eigen::MatrixXd ridged = gram;
            ridged.diagonal().array() += plan->ridge_penalty;
            plan->factor.compute(ridged);
            if (plan->factor.info() != Eigen::Success) {
                throw std::runtime_error("CondExpectationEngine: ridge factorization failed");
            }
        }

        double df = 0.0;
        for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i) {
            const double lambda = std::max(eig.eigenvalues()[i], 0.0);
            if (plan->ridge) {
                df += lambda / (lambda + plan->ridge_penalty);
            } else if (lambda > 1e-12 * lambda_max) {
                df += 1.0;
            }
        }
        plan->effective_df = std::max(df, 1.0);
    }

    plans_[node] = std::move(plan);
    return *plans_[node];
}

ConditionalEstimate CondExpectationEngine::at_node(std::size_t node,
                                                   std::span<const double> target) const {
    const std::size_t paths = ensemble_.n_paths;
    if (target.size() != paths) {
        throw std::invalid_argument("CondExpectationEngine: target size mismatch");
    }
    const NodePlan& plan = plan_for(node);

    ConditionalEstimate est;
    est.values.assign(paths, 0.0);
    est.diag.node = node;
    est.diag.basis_size = plan.design.size();
    est.diag.trivial = plan.design.trivial;

    if (plan.design.trivial) {
        double sum = 0.0;
        for (double v : target) sum += v;
        const double mean = sum / static_cast<double>(paths);
        for (auto& v : est.values) v = mean;
        double rss = 0.0;
        for (double v : target) rss += (v - mean) * (v - mean);
        est.diag.residual_norm = std::sqrt(rss / static_cast<double>(paths));
        est.diag.effective_df = 1.0;
        return est;
    }

    const std::size_t b = plan.design.size();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(b);
    parallel_reduce_chunks<Eigen::VectorXd>(
        paths,
        [&](std::size_t begin, std::size_t end) {
            Eigen::VectorXd partial = Eigen::VectorXd::Zero(b);
            std::vector<double> buf(b);
            for (std::size_t p = begin; p < end; ++p) {
                plan.design.row(ensemble_, p, buf);
                for (std::size_t k = 0; k < b; ++k) partial[k] += buf[k] * target[p];
            }
            return partial;
        },
        [&](const Eigen::VectorXd& partial) { rhs += partial; });

    Eigen::VectorXd beta = plan.factor.solve(rhs);
    if (!beta.allFinite()) {
        throw std::runtime_error("CondExpectationEngine: regression produced non-finite coefficients");
    }

    std::vector<double> rss_chunks(chunk_count(paths), 0.0);
    parallel_for_chunks(paths, [&](std::size_t begin, std::size_t end) {
        std::vector<double> buf(b);
        double rss = 0.0;
        for (std::size_t p = begin; p < end; ++p) {
            plan.design.row(ensemble_, p, buf);
            double fitted = 0.0;
            for (std::size_t k = 0; k < b; ++k) fitted += beta[k] * buf[k];
            est.values[p] = fitted;
            const double r = target[p] - fitted;
            rss += r * r;
        }
        rss_chunks[begin / kParallelChunk] = rss;
    });
    double rss = 0.0;
    for (double c : rss_chunks) rss += c;

    est.diag.residual_norm = std::sqrt(rss / static_cast<double>(paths));
    est.diag.ridge_used = plan.ridge;
    est.diag.ridge_penalty = plan.ridge_penalty;
    est.diag.effective_df = plan.effective_df;
    return est;
}

ConditionalEstimate CondExpectationEngine::conditional(std::size_t step,
                                                       const InformationModel& info,
                                                       std::span<const double> target) const {
    const std::size_t node = info.information_node(ensemble_.grid, step);
    return at_node(node, target);
}

ConditionalEstimate cond_expect(const PathEnsemble& ensemble, std::size_t step,
                                const InformationModel& info, std::span<const double> target) {
    if (step >= ensemble.n_nodes()) {
        throw std::out_of_range("cond_expect: step index out of range");
    }
    for (std::size_t p = 0; p < target.size(); ++p) {
        if (!std::isfinite(target[p])) {
            throw std::invalid_argument("cond_expect: target is not finite on path " +
                                        std::to_string(p));
        }
    }
    info.validate(ensemble.grid);
    CondExpectationEngine engine(ensemble, info.basis);
    return engine.conditional(step, info, target);
}

DualProjection dual_project(const CondExpectationEngine& engine, const InformationModel& info,
                            std::span<const double> numerator_increments,
                            std::span<const double> denominator_increments,
                            double denominator_tolerance) {
    const PathEnsemble& ens = engine.ensemble();
    const std::size_t n = ens.n_steps();
    const std::size_t paths = ens.n_paths;
    if (numerator_increments.size() != n * paths || denominator_increments.size() != n * paths) {
        throw std::invalid_argument("dual_project: increments must be n_steps x n_paths");
    }
    for (double d : denominator_increments) {
        if (!(d >= 0.0)) {
            throw std::invalid_argument("dual_project: denominator increments must be >= 0");
        }
    }

    DualProjection out;
    out.density.assign(n * paths, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        auto num = engine.conditional(i, info, numerator_increments.subspan(i * paths, paths));
        auto den = engine.conditional(i, info, denominator_increments.subspan(i * paths, paths));
        if (num.diag.ridge_used || den.diag.ridge_used) ++out.ridge_nodes;
        for (std::size_t p = 0; p < paths; ++p) {
            const double d = den.values[p];
            if (d <= denominator_tolerance) {
                // Radon-Nikodym convention on null sets
                out.density[i * paths + p] = 0.0;
                ++out.zero_denominator_cells;
            } else {
                out.density[i * paths + p] = num.values[p] / d;
            }
        }
    }
    return out;
}

DualProjection dual_project(const PathEnsemble& ensemble, const InformationModel& info,
                            std::span<const double> numerator_increments,
                            std::span<const double> denominator_increments,
                            double denominator_tolerance) {
    info.validate(ensemble.grid);
    CondExpectationEngine engine(ensemble, info.basis);
    return dual_project(engine, info, numerator_increments, denominator_increments,
                        denominator_tolerance);
}

}  // namespace qhedge
