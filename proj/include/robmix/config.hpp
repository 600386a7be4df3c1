#pragma once

#include "robmix/optimizer.hpp"
#include "robmix/simulate.hpp"
#include "robmix/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace robmix {

// Parsed sectioned key-value configuration. Sections: model, simulation,
// contamination, estimators, optimizer, quadrature, experiment, fit,
// diagnose. Unknown sections or keys are rejected with line numbers.
struct RunConfig {
    ModelSpec model;
    bool has_model = false;

    std::optional<SimConfig> sim;
    int replication = 0;  // replication index for the simulate subcommand

    std::vector<EstimatorSpec> estimators;
    std::optional<EstimatorSpec> fit_estimator;

    MinimizeOptions minimize;
    int n_starts = 1;

    int gh_order = 20;

    std::vector<double> epsilons{0.25, 0.5, 1.0};

    std::vector<std::string> checks;
    double diag_alpha = 0.5;
    int n_probe = 1;
    int mc_draws = 1000;
    std::uint64_t diag_seed = 0;
};

EstimatorSpec parse_estimator_spec(const std::string& text);

RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::string& path);

}  // namespace robmix
