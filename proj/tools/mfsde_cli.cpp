#include "mfsde/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <utility>
#include <vector>

int main(int argc, char** argv) {
    CLI::App app{"Interacting-particle simulation and sensitivity toolkit "
                 "for mean-field SDEs"};
    app.require_subcommand(1);

    std::string config_path;
    int workers = 1;

    const std::vector<std::pair<std::string, std::string>> subcommands = {
        {"simulate",
         "particle-system run: time, mean, variance[, w1_to_oracle]"},
        {"delta",
         "initial-condition sensitivity: method, value, std_error, "
         "n_samples"},
        {"picard", "law-flow fixed-point iteration: iteration, sup_w1"},
        {"ode", "mean-feedback drift vs RK4: time, mc_mean, rk4, gap"},
        {"hoelder", "coupled moment probe: pair_id, lhs, rhs_bound, ratio"},
        {"lamperti-check",
         "volatility-transform checks: check, value, bound, pass"},
        {"converge",
         "refinement sweep: steps|particles, metric, value, std_error"},
    };
    for (const auto& [name, description] : subcommands) {
        CLI::App* sub = app.add_subcommand(name, description);
        sub->add_option("-c,--config", config_path, "JSON experiment config")
            ->required();
        sub->add_option("-w,--workers", workers,
                        "worker thread count (default 1; every count "
                        "produces identical values)")
            ->check(CLI::Range(1, 1024));
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;  // bad command lines are configuration errors
    }

    const std::string sub = app.get_subcommands().front()->get_name();
    return mfsde::run_experiment(sub, config_path, workers, std::cerr);
}
