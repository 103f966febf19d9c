#include "qhedge/csv.hpp"

#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <stdexcept>

#include "qhedge/diagnostics.hpp"

namespace qhedge {

namespace {

class CsvFile {
public:
    explicit CsvFile(const std::string& path) : f_(std::fopen(path.c_str(), "wb")) {
        if (!f_) throw std::runtime_error("csv: cannot open '" + path + "' for writing");
    }
    ~CsvFile() {
        if (f_) std::fclose(f_);
    }
    CsvFile(const CsvFile&) = delete;
    CsvFile& operator=(const CsvFile&) = delete;

    void line(const char* fmt, ...) {
        va_list args;
        va_start(args, fmt);
        std::vfprintf(f_, fmt, args);
        va_end(args);
    }

private:
    std::FILE* f_;
};

}  // namespace

void write_ensemble_csv(const std::string& path, const PathEnsemble& ensemble) {
    CsvFile out(path);
    out.line("path,step,M,bracket,S\n");
    const std::size_t paths = ensemble.n_paths;
    for (std::size_t p = 0; p < paths; ++p) {
        for (std::size_t i = 0; i <= ensemble.n_steps(); ++i) {
            const double bracket = i == 0 ? 0.0 : ensemble.d_bracket[i - 1];
            out.line("%zu,%zu,%.17g,%.17g,%.17g\n", p, i, ensemble.m(i, p), bracket,
                     ensemble.s(i, p));
        }
    }
}

void write_solution_csv(const std::string& path, const BsdeSolution& solution) {
    CsvFile out(path);
    out.line("path,step,Y,Z,dO\n");
    const std::size_t paths = solution.n_paths;
    const std::size_t n = solution.grid.n_steps;
    for (std::size_t p = 0; p < paths; ++p) {
        for (std::size_t i = 0; i <= n; ++i) {
            const double z = i < n ? solution.z[i * paths + p] : 0.0;
            const double dob = i < n ? solution.o_increments[i * paths + p] : 0.0;
            out.line("%zu,%zu,%.17g,%.17g,%.17g\n", p, i, solution.y[i * paths + p], z, dob);
        }
    }
}

void write_decomposition_csv(const std::string& path, const Decomposition& decomposition) {
    CsvFile out(path);
    out.line("path,step,value,integrand,dA\n");
    const std::size_t paths = decomposition.n_paths;
    const std::size_t n = decomposition.grid.n_steps;
    for (std::size_t p = 0; p < paths; ++p) {
        for (std::size_t i = 0; i <= n; ++i) {
            const double integrand = i < n ? decomposition.integrand[i * paths + p] : 0.0;
            const double da = i < n ? decomposition.residual_increments[i * paths + p] : 0.0;
            out.line("%zu,%zu,%.17g,%.17g,%.17g\n", p, i, decomposition.value[i * paths + p],
                     integrand, da);
        }
    }
}

void write_strategy_csv(const std::string& path, const Strategy& strategy,
                        const PathEnsemble& ensemble) {
    CsvFile out(path);
    out.line("step,time,theta_mean,theta_sd,value_mean,cost_mean,cost_increment_z\n");
    const std::size_t paths = strategy.n_paths;
    const std::size_t n = strategy.grid.n_steps;
    std::vector<double> dc(paths);
    for (std::size_t i = 0; i < n; ++i) {
        auto theta = mean_stat(std::span<const double>(strategy.theta.data() + i * paths, paths));
        const double theta_sd =
            theta.standard_error * std::sqrt(static_cast<double>(paths));
        auto value = mean_stat(std::span<const double>(strategy.value.data() + i * paths, paths));
        auto cost = mean_stat(std::span<const double>(strategy.cost.data() + i * paths, paths));
        for (std::size_t p = 0; p < paths; ++p) {
            dc[p] = strategy.cost[(i + 1) * paths + p] - strategy.cost[i * paths + p];
        }
        auto dcost = mean_stat(dc);
        out.line("%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", i, strategy.grid.time(i), theta.mean,
                 theta_sd, value.mean, cost.mean, dcost.z);
    }
    (void)ensemble;
}

void write_mmm_csv(const std::string& path, const MmmWeights& weights,
                   const PathEnsemble& ensemble) {
    CsvFile out(path);
    out.line("path,terminal_density,valid\n");
    const std::size_t paths = ensemble.n_paths;
    const std::size_t n = ensemble.n_steps();
    for (std::size_t p = 0; p < paths; ++p) {
        out.line("%zu,%.17g,%u\n", p, weights.density[n * paths + p],
                 static_cast<unsigned>(weights.valid[p]));
    }
}

}  // namespace qhedge
