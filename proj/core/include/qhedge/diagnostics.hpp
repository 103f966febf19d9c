#pragma once

#include <span>
#include <string>
#include <vector>

#include "qhedge/information.hpp"
#include "qhedge/market.hpp"

namespace qhedge {

/// Sample mean with its standard error and z-score against zero.
struct MeanStat {
    double mean = 0.0;
    double standard_error = 0.0;
    double z = 0.0;
};
MeanStat mean_stat(std::span<const double> values);

/// Per-step z-scores of the martingale property, E[dM_i] = 0, and of the
/// bracket compensation, E[dM_i^2 - d<M>_i] = 0.
struct MartingaleChecks {
    std::vector<double> increment_z;     // one per step
    std::vector<double> compensation_z;  // one per step
    double max_abs_increment_z = 0.0;
    double max_abs_compensation_z = 0.0;
};
MartingaleChecks martingale_checks(const PathEnsemble& ensemble);

/// H-predictable test integrands for the weak orthogonality condition
/// E[O_T int phi dM] = 0.
struct PhiProcess {
    std::string name;
    std::vector<double> values;  // n_steps x n_paths
};
std::vector<PhiProcess> phi_battery(const PathEnsemble& ensemble, const InformationModel& info);

/// E[O_T int phi dM] with its standard error, for one phi.
struct OrthogonalityStat {
    std::string phi;
    double statistic = 0.0;
    double standard_error = 0.0;
    double z = 0.0;
};
std::vector<OrthogonalityStat> orthogonality_battery(const PathEnsemble& ensemble,
                                                     const InformationModel& info,
                                                     std::span<const double> o_increments);

/// Per-step z-scores for E[increment_i | F_{t_i}] = 0, from a regression of
/// the increment on the full state: the fit sum of squares, studentized by
/// the leverage-weighted squared residuals, is chi-square with the design's
/// degrees of freedom under the null and maps to a one-sided normal score
/// (Wilson-Hilferty). Zero means no detectable conditional structure.
std::vector<double> conditional_mean_zscores(const PathEnsemble& ensemble,
                                             std::span<const double> increments,
                                             std::size_t basis_degree = 3);

double max_abs(std::span<const double> values);

/// Root mean square difference of two arrays.
double rms_difference(std::span<const double> a, std::span<const double> b);
double rms(std::span<const double> a);

}  // namespace qhedge
