#include "qhedge/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qhedge {

MeanStat mean_stat(std::span<const double> values) {
    MeanStat s;
    if (values.empty()) return s;
    const double np = static_cast<double>(values.size());
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / np;
    double var = 0.0;
    for (double v : values) var += (v - s.mean) * (v - s.mean);
    var /= np;
    s.standard_error = std::sqrt(var / np);
    s.z = s.standard_error > 0.0 ? s.mean / s.standard_error : 0.0;
    return s;
}

MartingaleChecks martingale_checks(const PathEnsemble& ensemble) {
    const std::size_t n = ensemble.n_steps();
    const std::size_t paths = ensemble.n_paths;
    MartingaleChecks out;
    out.increment_z.resize(n);
    out.compensation_z.resize(n);
    std::vector<double> comp(paths);
    for (std::size_t i = 0; i < n; ++i) {
        auto inc = mean_stat(ensemble.step_slice(ensemble.d_martingale, i));
        out.increment_z[i] = inc.z;
        for (std::size_t p = 0; p < paths; ++p) {
            const double dm = ensemble.d_martingale[i * paths + p];
            comp[p] = dm * dm - ensemble.d_bracket[i];
        }
        auto cz = mean_stat(comp);
        out.compensation_z[i] = cz.z;
        out.max_abs_increment_z = std::max(out.max_abs_increment_z, std::abs(inc.z));
        out.max_abs_compensation_z = std::max(out.max_abs_compensation_z, std::abs(cz.z));
    }
    return out;
}

std::vector<PhiProcess> phi_battery(const PathEnsemble& ensemble, const InformationModel& info) {
    info.validate(ensemble.grid);
    const std::size_t n = ensemble.n_steps();
    const std::size_t paths = ensemble.n_paths;
    const double m0 = ensemble.config.m0;
    const double s0 = ensemble.config.s0;

    std::vector<PhiProcess> battery;
    battery.push_back({"constant_one", std::vector<double>(n * paths, 1.0)});
    battery.push_back({"lagged_m", std::vector<double>(n * paths, 0.0)});
    battery.push_back({"lagged_m_squared", std::vector<double>(n * paths, 0.0)});
    battery.push_back({"indicator_m_above_start", std::vector<double>(n * paths, 0.0)});
    battery.push_back({"lagged_price_dev", std::vector<double>(n * paths, 0.0)});
    battery.push_back({"late_half", std::vector<double>(n * paths, 0.0)});

    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t lag = info.information_node(ensemble.grid, i);
        const bool late = ensemble.grid.time(i) >= 0.5 * ensemble.grid.horizon;
        for (std::size_t p = 0; p < paths; ++p) {
            const double dm = ensemble.m(lag, p) - m0;
            battery[1].values[i * paths + p] = dm;
            battery[2].values[i * paths + p] = dm * dm;
            battery[3].values[i * paths + p] = dm > 0.0 ? 1.0 : 0.0;
            battery[4].values[i * paths + p] = ensemble.s(lag, p) - s0;
            battery[5].values[i * paths + p] = late ? 1.0 : 0.0;
        }
    }
    return battery;
}

std::vector<OrthogonalityStat> orthogonality_battery(const PathEnsemble& ensemble,
                                                     const InformationModel& info,
                                                     std::span<const double> o_increments) {
    const std::size_t n = ensemble.n_steps();
    const std::size_t paths = ensemble.n_paths;
    if (o_increments.size() != n * paths) {
        throw std::invalid_argument("orthogonality_battery: increments must be n_steps x n_paths");
    }

    std::vector<double> o_terminal(paths, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < paths; ++p) o_terminal[p] += o_increments[i * paths + p];
    }

    std::vector<OrthogonalityStat> stats;
    std::vector<double> product(paths);
    for (const auto& phi : phi_battery(ensemble, info)) {
        for (std::size_t p = 0; p < paths; ++p) {
            double integral = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                integral += phi.values[i * paths + p] * ensemble.d_martingale[i * paths + p];
            }
            product[p] = o_terminal[p] * integral;
        }
        auto ms = mean_stat(product);
        stats.push_back({phi.name, ms.mean, ms.standard_error, ms.z});
    }
    return stats;
}

std::vector<double> conditional_mean_zscores(const PathEnsemble& ensemble,
                                             std::span<const double> increments,
                                             std::size_t basis_degree) {
    const std::size_t n = ensemble.n_steps();
    const std::size_t paths = ensemble.n_paths;
    if (increments.size() != n * paths) {
        throw std::invalid_argument("conditional_mean_zscores: increments must be n_steps x n_paths");
    }
    BasisSpec spec;
    spec.degree = basis_degree;

    // Self-contained regression per step: the fit sum of squares is
    // studentized by the leverage-weighted squared residuals, which keeps the
    // statistic calibrated under heteroskedastic increments.
    std::vector<double> zs(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        NodeDesign design = build_node_design(ensemble, i, spec);
        std::span<const double> target = increments.subspan(i * paths, paths);
        if (design.trivial) {
            auto ms = mean_stat(target);
            zs[i] = std::abs(ms.z);
            continue;
        }
        Eigen::MatrixXd x = design.matrix(ensemble);
        Eigen::Map<const Eigen::VectorXd> y(target.data(), static_cast<Eigen::Index>(paths));
        Eigen::MatrixXd gram = x.transpose() * x;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
        const double lambda_max = std::max(eig.eigenvalues().maxCoeff(), 0.0);
        if (!(eig.eigenvalues().minCoeff() > 1e-12 * lambda_max) ||
            ldlt.info() != Eigen::Success) {
            Eigen::MatrixXd ridged = gram;
            ridged.diagonal().array() += 1e-8 * gram.trace() / static_cast<double>(gram.rows());
            ldlt.compute(ridged);
        }
        Eigen::VectorXd beta = ldlt.solve(x.transpose() * y);
        Eigen::VectorXd fitted = x * beta;
        Eigen::VectorXd resid = y - fitted;

        double df = 0.0;
        for (Eigen::Index k = 0; k < eig.eigenvalues().size(); ++k) {
            if (eig.eigenvalues()[k] > 1e-12 * lambda_max) df += 1.0;
        }
        df = std::max(df, 1.0);

        // leverage-weighted null scale of the fit sum of squares
        Eigen::MatrixXd ginv_xt = ldlt.solve(x.transpose());
        double null_scale = 0.0;
        for (Eigen::Index p = 0; p < x.rows(); ++p) {
            const double leverage = x.row(p).dot(ginv_xt.col(p));
            null_scale += leverage * resid[p] * resid[p];
        }
        const double fit_ss = fitted.squaredNorm();
        if (!(null_scale > 0.0)) {
            zs[i] = 0.0;
            continue;
        }
        const double t = fit_ss * df / null_scale;  // ~ chi^2(df) under the null
        // Wilson-Hilferty normal score, one-sided: only an excess of fitted
        // structure witnesses a conditional-mean violation
        const double c = 2.0 / (9.0 * df);
        zs[i] = std::max((std::cbrt(t / df) - (1.0 - c)) / std::sqrt(c), 0.0);
    }
    return zs;
}

double max_abs(std::span<const double> values) {
    double m = 0.0;
    for (double v : values) m = std::max(m, std::abs(v));
    return m;
}

double rms_difference(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("rms_difference: size mismatch");
    }
    if (a.empty()) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(a.size()));
}

double rms(std::span<const double> a) {
    if (a.empty()) return 0.0;
    double acc = 0.0;
    for (double v : a) acc += v * v;
    return std::sqrt(acc / static_cast<double>(a.size()));
}

}  // namespace qhedge
