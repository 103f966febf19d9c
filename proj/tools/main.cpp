#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "qhedge/runner.hpp"

namespace {

void print_report(const qhedge::RunReport& report) {
    std::printf("scenario %s, subcommand %s\n", report.scenario_hash.c_str(),
                report.subcommand.c_str());
    for (const auto& c : report.checks) {
        if (c.skipped) {
            std::printf("[skip] %-42s %s\n", c.name.c_str(), c.note.c_str());
        } else {
            std::printf("[%s] %-42s statistic=%.6g threshold=%.6g\n",
                        c.passed() ? "pass" : "FAIL", c.name.c_str(), c.statistic, c.threshold);
        }
    }
    if (report.picard_iterations > 0) {
        std::printf("picard: %zu iteration(s), %s\n", report.picard_iterations,
                    report.picard_converged ? "converged" : "NOT converged");
    }
    for (const auto& a : report.artifacts) std::printf("wrote %s\n", a.c_str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Monte Carlo engine for backward equations and quadratic hedging under delayed information"};
    app.require_subcommand(1);

    std::string scenario_file;
    std::size_t paths_override = 0;
    std::size_t steps_override = 0;
    long long seed_override = -1;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("scenario", scenario_file, "scenario file")->required();
        sub->add_option("--paths", paths_override, "override the number of simulated paths");
        sub->add_option("--steps", steps_override, "override the number of grid steps");
        sub->add_option("--seed", seed_override, "override the RNG seed");
    };

    for (const char* name : {"simulate", "solve", "decompose", "hedge", "mmm", "validate"}) {
        add_common(app.add_subcommand(name));
    }

    CLI11_PARSE(app, argc, argv);

    try {
        const std::string sub = app.get_subcommands().front()->get_name();
        qhedge::ScenarioOverrides overrides;
        if (paths_override > 0) overrides.n_paths = paths_override;
        if (steps_override > 0) overrides.n_steps = steps_override;
        if (seed_override >= 0) overrides.seed = static_cast<std::uint64_t>(seed_override);

        qhedge::Scenario scenario = qhedge::load_scenario_file(scenario_file, overrides);
        qhedge::RunReport report =
            qhedge::run_scenario(scenario, qhedge::parse_subcommand(sub));
        print_report(report);
        return report.all_passed() ? 0 : 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
