#pragma once

#include "robmix/types.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace robmix {

enum class ContaminationTarget { Response, Leverage };

struct Contamination {
    double fraction = 0.0;  // in [0, 1)
    double shift = 0.0;
    ContaminationTarget target = ContaminationTarget::Response;
};

struct SimConfig {
    ModelSpec model;
    VectorXd beta0;
    double sigma0_sq = 0.25;  // gaussian family only
    VectorXd g_params0;       // true G parameters (model.cov_structure scale)
    std::vector<int> n_grid;
    int replications = 1;
    std::uint64_t seed = 0;
    std::optional<Contamination> contamination;

    void validate() const;
};

// Intercept-plus-standard-normal design, Z = first q columns of X,
// u ~ N(0, G), y = X beta0 + Z u + eps with eps ~ N(0, sigma0^2 I).
// Deterministic given (seed, n, replication_index).
GroupedDataset simulate_lmm(const SimConfig& config, int n, int replication_index);

// Same design; y_ij | u ~ Bernoulli(logit^{-1}(x_ij' beta0 + z_ij' u)).
GroupedDataset simulate_logistic(const SimConfig& config, int n, int replication_index);

// Corrupts ceil(fraction * n) groups, selected deterministically from the
// dataset seed. Response: adds shift to every y entry of the chosen groups.
// Leverage: multiplies their non-intercept X entries by (1 + shift).
GroupedDataset contaminate(const GroupedDataset& data, double fraction, double shift,
                           ContaminationTarget target);

}  // namespace robmix
